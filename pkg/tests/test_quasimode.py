import math

import numpy as np
import pytest

from qci_lab import geometry, quasimode as qm, spectral
from qci_lab.errors import CapViolationError, NoUnitEquatorError, QuasimodeError, ResolutionError


def test_sphere_phase_integral_is_log_cos(sphere):
    for t in (-1.2, -0.3, 0.3, 0.7, 1.4):
        assert qm.phase_integral(sphere, t) == pytest.approx(-math.log(math.cos(t)), rel=1e-10)
    assert qm.phase_integral(sphere, 0.0) == 0.0


def test_sphere_field_is_cos_power(sphere):
    lam = 100.0
    q = qm.build(sphere, lam)
    # -log cos t = -log1p(-2 sin^2(t/2)) avoids cancellation near 0
    A = -np.log1p(-2 * np.sin(q.grid / 2) ** 2)
    assert np.max(np.abs(q.A - A) / np.maximum(A, 1e-300)) <= 1e-10
    i = int(np.argmin(np.abs(q.grid - 0.3)))
    assert q.u_abs[i] == pytest.approx(lam**0.25 * math.cos(q.grid[i]) ** lam, rel=1e-8)


@pytest.mark.parametrize("profile", ["sphere", "perturbed-sphere(0.05)"])
@pytest.mark.parametrize("lam", [10, 50, 200])
def test_peak_and_monotone_decay(profile, lam):
    p = geometry.build_profile(profile)
    q = qm.build(p, lam)
    i0 = int(np.argmin(np.abs(q.grid - q.t0)))
    assert q.A[i0] == 0.0 and q.u_abs[i0] == pytest.approx(lam**0.25, rel=1e-15)
    assert int(np.argmax(q.u_abs)) == i0
    right, left = q.u_abs[i0:], q.u_abs[: i0 + 1][::-1]
    for side in (right, left):
        live = side[side > 1e-250]
        assert np.all(np.diff(live) < 0)


def test_exponential_smallness(sphere):
    lam = 200.0
    q = qm.build(sphere, lam, grid=np.array([0.0, 0.5]))
    bound = math.exp(-lam * -math.log(math.cos(0.5)))
    assert q.u_abs[1] / q.u_abs[0] <= bound * (1 + 1e-12)


@pytest.mark.parametrize("lam", [50, 100, 200])
def test_sphere_analytic_residual_is_h(sphere, lam):
    q = qm.build(sphere, lam)
    rep = qm.residual_analytic(sphere, q)
    assert rep.analytic_sup == pytest.approx(1 / lam, rel=1e-12)
    assert rep.ratio_max == pytest.approx(1.0, rel=1e-6)


def test_equator_ratio_limit(perturbed005):
    t0, d2 = qm.unit_equator(perturbed005)
    r = qm.residual_ratio(perturbed005, np.array([t0, t0 + 2e-4, t0 - 2e-4]), t0)
    assert np.all(np.isfinite(r))
    assert r[0] == pytest.approx(math.sqrt(-d2), rel=1e-12)
    assert r[1] == pytest.approx(r[0], rel=1e-3)
    assert r[2] == pytest.approx(r[0], rel=1e-3)


@pytest.mark.parametrize("lam", [50, 100, 200])
def test_perturbed_analytic_residual(perturbed005, lam):
    rep = qm.residual_analytic(perturbed005, qm.build(perturbed005, lam))
    assert rep.analytic_sup <= 1.2 / lam


@pytest.mark.parametrize("profile", ["sphere", "perturbed-sphere(0.05)"])
def test_numeric_matches_analytic(profile):
    p = geometry.build_profile(profile)
    rep = qm.residual_numeric(p, qm.build(p, 100))
    assert rep.agreement <= 1e-3
    assert rep.numeric_sup == pytest.approx(0.01, rel=1e-3 if profile == "sphere" else 0.2)


def test_coarse_grid_rejected(sphere):
    lam = 100
    grid = np.arange(-1.0, 1.0, 1.0 / lam)
    with pytest.raises(ResolutionError) as e:
        qm.residual_numeric(sphere, qm.build(sphere, lam, grid))
    assert e.value.required == pytest.approx(1e-3)


def test_operator_on_constant(sphere):
    lam = 20.0
    grid = np.linspace(-0.5, 0.5, 201)
    out = qm.apply_operator(sphere, grid, np.ones_like(grid), lam)
    assert np.allclose(out, 1 / np.cos(grid[2:-2]) ** 2 - 1, atol=1e-12)


def test_build_validation(sphere, spheroid02):
    with pytest.raises(QuasimodeError):
        qm.build(sphere, 5)
    with pytest.raises(QuasimodeError):
        qm.build(sphere, 50, grid=[0.1, 0.0, 0.2])
    with pytest.raises(CapViolationError):
        qm.build(spheroid02, 50)


def test_cap_violations():
    bump = geometry.custom(lambda t: np.cos(t) * (1 + 0.1 * np.cos(t) ** 2 * np.sin(3 * t) ** 2),
                           -math.pi / 2, math.pi / 2, cap_at_one=True)
    with pytest.raises(CapViolationError):
        qm.unit_equator(bump)
    short = geometry.custom(lambda t: 0.9 * np.cos(t), -math.pi / 2, math.pi / 2, cap_at_one=True)
    with pytest.raises(NoUnitEquatorError):
        qm.unit_equator(short)


def test_unbounded_ratio_warns():
    # f = cos(k t) gives |f'|/sqrt(1 - f^2) = k identically
    k = 2000.0
    half = math.pi / (2 * k)
    p = geometry.custom(lambda t: np.cos(k * t), -half, half,
                        df=lambda t: -k * np.sin(k * t), d2f=lambda t: -k * k * np.cos(k * t),
                        cap_at_one=True)
    q = qm.build(p, 50, grid=np.linspace(-0.9 * half, 0.9 * half, 401))
    with pytest.warns(qm.AssumptionWarning):
        rep = qm.residual_analytic(p, q)
    assert rep.warnings and rep.ratio_max == pytest.approx(k, rel=1e-6)


@pytest.mark.parametrize("profile", ["sphere", "perturbed-sphere(0.05)"])
def test_scaling_fits(profile):
    sup_fit, defect_fit, rows = qm.defect_and_sup_scaling(geometry.build_profile(profile))
    assert sup_fit.exponent == pytest.approx(0.25, abs=0.02)
    assert defect_fit.exponent == pytest.approx(-1.0, abs=0.05)
    assert all(r[4] <= 1e-3 for r in rows)


def test_scaling_needs_spread(sphere):
    with pytest.raises(QuasimodeError):
        qm.defect_and_sup_scaling(sphere, [50, 60, 70])
    with pytest.raises(QuasimodeError):
        qm.defect_and_sup_scaling(sphere, [50, 60, 70, 80, 90])


@pytest.mark.parametrize("lam", [100, 150, 225])
def test_matches_sphere_eigenfunction(sphere, lam):
    q = qm.build(sphere, lam)
    mode = spectral.solve_highest_weight(sphere, round(lam), 6000)
    assert qm.eigenfunction_gap(q, mode) <= 0.05
