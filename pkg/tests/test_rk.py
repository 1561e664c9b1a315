import math

import numpy as np
import pytest

from qci_lab import rk


def test_tableau_row_sums():
    for c, row in zip(rk.C, rk.A):
        assert sum(row) == pytest.approx(c, abs=1e-15)
    assert sum(rk.B5) == pytest.approx(1.0, abs=1e-15)
    assert sum(rk.B4) == pytest.approx(1.0, abs=1e-15)


def test_fixed_step_is_fifth_order():
    stepper = rk.DormandPrince(lambda y: -y, 1e-8)
    errs = []
    for n in (8, 16, 32):
        y = np.array([1.0])
        h = 1.0 / n
        for _ in range(n):
            y = stepper.step(y, h)[0]
        errs.append(abs(y[0] - math.exp(-1)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) > 4.7


@pytest.mark.parametrize("tol", [1e-6, 1e-9, 1e-12])
def test_adaptive_decay_accuracy(tol):
    stepper = rk.DormandPrince(lambda y: -y, tol)
    *_, (s, y, h, k) = stepper.run(np.array([1.0]), 2.0)
    assert s == 2.0
    assert abs(y[0] - math.exp(-2.0)) <= 100 * tol


def test_oscillator_energy_and_batch():
    stepper = rk.DormandPrince(lambda y: np.array([y[1], -y[0]]), 1e-11)
    y0 = np.array([[1.0, 0.0, 2.0], [0.0, 1.0, 0.0]])
    *_, (s, y, _, _) = stepper.run(y0, 10.0)
    exact = np.array([[math.cos(10), math.sin(10), 2 * math.cos(10)],
                      [-math.sin(10), math.cos(10), -2 * math.sin(10)]])
    assert np.max(np.abs(y - exact)) < 1e-8


def test_invalid_region_underflows():
    # the solution leaves the admissible half-line x < 1 at s = 1
    stepper = rk.DormandPrince(lambda y: np.ones_like(y), 1e-10, valid=lambda y: y[0] < 1.0)
    last = None
    for last in stepper.run(np.array([0.0]), 5.0):
        pass
    assert stepper.underflow
    assert last[0] == pytest.approx(1.0, abs=1e-10)
