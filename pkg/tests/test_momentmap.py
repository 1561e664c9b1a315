import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qci_lab import geometry, momentmap as mm
from qci_lab.errors import (LiouvilleConditionError, MomentMapError, ParameterError, PoleError,
                            PrincipalTypeError, ResolutionError, SolveError)

ELL_X = np.array([math.cos(0.4), 0.0, math.sin(0.4)])


def systems():
    """(system, base point) pairs covering every bundled family."""
    return [
        (mm.build_system("sor", geometry.sphere()), np.array([math.pi / 4, 0.0])),
        (mm.build_system("sor", geometry.spheroid(0.2)), np.array([1.1, 2.0])),
        (mm.build_system("liouville_torus", {"a": lambda s: 3 + 0.5 * np.sin(2 * np.pi * s),
                                             "b": lambda s: 1 + 0.3 * np.cos(2 * np.pi * s)}),
         np.array([0.3, 0.7])),
        (mm.build_system("ellipsoid", {"a1": 3, "a2": 2, "a3": 1}), ELL_X),
        (mm.build_system("flat_torus", {"n": 3, "indices": (2, 3)}), np.zeros(3)),
        (mm.build_system("flat_torus", {"n": 4, "indices": (1, 3, 4)}), np.zeros(4)),
    ]


# -- examples ---------------------------------------------------------------------

def test_liouville_p2_on_cosphere():
    sys = mm.build_system("liouville_torus", {"a": 2, "b": 1})
    for th in np.linspace(0, 2 * np.pi, 13):
        xi = math.sqrt(3) * np.array([math.cos(th), math.sin(th)])
        assert sys.p[0]((0.2, 0.9), xi) == pytest.approx(1.0, abs=1e-14)
        assert sys.p[1]((0.2, 0.9), xi) == pytest.approx((xi[0] ** 2 - 2 * xi[1] ** 2) / 3, abs=1e-14)


def test_ellipsoid_reduces_on_gamma():
    sys = mm.build_system("ellipsoid", {"a1": 3, "a2": 2, "a3": 1})
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = rng.uniform(0, 2 * np.pi)
        x = np.array([math.cos(a), 0.0, math.sin(a)])
        xi = rng.standard_normal() * np.array([-math.sin(a), 0.0, math.cos(a)])
        H, P = sys.values(x, xi)
        assert P == pytest.approx(H / 2, rel=1e-14, abs=1e-15)


def test_flat_torus_symbols():
    sys = mm.build_system("flat_torus", {"n": 3, "indices": (2, 3)})
    xi = np.array([0.3, -1.2, 2.0])
    assert sys.values(None, xi) == pytest.approx([np.linalg.norm(xi), -1.2, 2.0])
    assert np.array_equal(sys.grad_xi[1](None, xi), [0.0, 1.0, 0.0])


@pytest.mark.parametrize("name, params, x, d, expected", [
    ("flat_torus", {"n": 2, "indices": (2,)}, np.zeros(2), (0.6, 0.8), (0.6, 0.8)),
    ("sor", None, (math.pi / 3, 0.0), (0.0, 1.0), (0.0, 0.5)),
    ("liouville_torus", {"a": 2, "b": 1}, (0.4, 0.1), (1.0, 0.0), (math.sqrt(3), 0.0)),
])
def test_cosphere_solve_examples(name, params, x, d, expected):
    params = geometry.sphere() if name == "sor" else params
    sys = mm.build_system(name, params)
    xi = mm.cosphere_solve(sys, x, d)
    assert xi == pytest.approx(expected, abs=1e-12)
    assert abs(sys.p[0](x, xi) - 1) <= 1e-12


def test_cosphere_solve_errors():
    sys = mm.build_system("liouville_torus", {"a": 2, "b": 1})
    with pytest.raises(SolveError):
        mm.cosphere_solve(sys, (0, 0), (0, 0))
    with pytest.raises(SolveError):
        mm.cosphere_solve(sys, (0, 0), (1, 0), E1=-1)
    ell = mm.build_system("ellipsoid", {"a1": 3, "a2": 2, "a3": 1})
    with pytest.raises(SolveError):
        mm.cosphere_solve(ell, ELL_X, ELL_X)


@pytest.mark.parametrize("theta, rank", [(math.pi / 2, 0), (0.3, 1)])
def test_sor_rank(theta, rank):
    sys = mm.build_system("sor", geometry.sphere())
    x = (math.pi / 4, 0.0)
    xi = mm.cosphere_solve(sys, x, sys.theta_direction(x, theta))
    rep = mm.rank_at(sys, x, xi, E1=1.0)
    assert rep.rank == rank
    assert rep.rank == int(np.sum(rep.singular_values > rep.tol_used))


def test_frame_ranks_at_shared_covector():
    xi = np.array([0.0, 1.0, 0.0])
    P = mm.build_system("flat_torus", {"n": 3, "indices": (2, 3)})
    Q = mm.build_system("flat_torus", {"n": 3, "indices": (1, 3)})
    assert mm.rank_at(P, np.zeros(3), xi).rank == 1
    assert mm.rank_at(Q, np.zeros(3), xi).rank == 2


def test_liouville_scan_degenerate_directions():
    sys = mm.build_system("liouville_torus", {"a": 2, "b": 1})
    scan = mm.rank_scan(sys, (0.1, 0.2), 360)
    assert (scan.min_rank, scan.max_rank) == (0, 1)
    assert sorted(round(th / (np.pi / 2)) for th, _ in scan.degenerate) == [0, 1, 2, 3]
    for th, _ in scan.degenerate:
        assert abs(th - round(th / (np.pi / 2)) * np.pi / 2) <= 2 * np.pi / 360


def test_ellipsoid_scan_includes_gamma_tangents():
    sys = mm.build_system("ellipsoid", {"a1": 3, "a2": 2, "a3": 1})
    scan = mm.rank_scan(sys, ELL_X, 360)
    thetas = sorted(th for th, _ in scan.degenerate)
    # e_a is tangent to the great circle x2 = 0: theta = 0 and pi
    assert any(abs(t) < 1e-12 for t in thetas) and any(abs(t - np.pi) < 1e-12 for t in thetas)
    for _, xi in scan.degenerate:
        assert abs(xi @ ELL_X) <= 1e-12


def test_flat_torus_circle_scan():
    sys = mm.build_system("flat_torus", {"n": 2, "indices": (2,)})
    scan = mm.rank_scan(sys, np.zeros(2), 360)
    assert [round(th / np.pi, 12) for th, _ in scan.degenerate] == [0.5, 1.5]
    assert np.allclose([xi for _, xi in scan.degenerate], [[0, 1], [0, -1]], atol=1e-12)


def test_liouville_morse():
    sys = mm.build_system("liouville_torus", {"a": 2, "b": 1})
    rep = mm.morse_check(sys, x=(0.1, 0.2))
    assert rep.all_nondegenerate
    assert [round(c.theta / (np.pi / 2)) for c in rep.critical_points] == [0, 1, 2, 3]
    for k, c in enumerate(rep.critical_points):
        assert c.second_derivative == pytest.approx(-6.0 if k % 2 == 0 else 6.0, rel=1e-5)
        assert c.value == pytest.approx(1.0 if k % 2 == 0 else -2.0, abs=1e-10)


def test_sor_morse():
    sys = mm.build_system("sor", geometry.sphere())
    x = (math.pi / 4, 0.0)
    rep = mm.morse_check(sys, x=x)
    f = math.cos(math.pi / 4)
    assert [round(c.theta, 8) for c in rep.critical_points] == [round(np.pi / 2, 8), round(3 * np.pi / 2, 8)]
    assert [c.second_derivative for c in rep.critical_points] == pytest.approx([-f, f], rel=1e-5)
    assert rep.all_nondegenerate
    for c in rep.critical_points:
        assert abs((sys.p[1](x, mm.cosphere_solve(sys, x, sys.theta_direction(x, c.theta + 1e-6)))
                    - c.value)) <= 1e-10


def test_ellipsoid_morse_multiplier_on_gamma():
    sys = mm.build_system("ellipsoid", {"a1": 3, "a2": 2, "a3": 1})
    rep = mm.morse_check(sys, x=ELL_X)
    tangent = [c for c in rep.critical_points if min(abs(c.theta), abs(c.theta - np.pi)) < 1e-6]
    assert len(tangent) == 2
    assert all(c.multiplier == pytest.approx(0.5, rel=1e-6) for c in tangent)


def test_morse_constant_combiner():
    sys = mm.build_system("liouville_torus", {"a": 2, "b": 1})
    rep = mm.morse_check(sys, combiner=lambda v: v[0], x=(0.0, 0.0), grid=64)
    assert rep.constant and rep.critical_points == []


def test_morse_coarse_grid():
    # q = cos(12 theta) has 24 critical points; a 20-point grid cannot separate them
    sys = mm.build_system("flat_torus", {"n": 2, "indices": (2,)})
    with pytest.raises(ResolutionError) as e:
        mm.morse_check(sys, combiner=lambda v: math.cos(12 * math.atan2(v[1], math.sqrt(max(v[0] ** 2 - v[1] ** 2, 0)))),
                       x=np.zeros(2), grid=20)
    assert e.value.required >= 40
    with pytest.raises(ResolutionError):
        mm.morse_check(sys, x=np.zeros(2), grid=4)


def test_morse_needs_circle():
    with pytest.raises(MomentMapError):
        mm.morse_check(mm.build_system("flat_torus", {"n": 3}), x=np.zeros(3))


@pytest.mark.parametrize("name, params, err", [
    ("liouville_torus", {"a": 1, "b": 1}, LiouvilleConditionError),
    ("liouville_torus", {"a": lambda s: 1.5 + np.sin(2 * np.pi * s), "b": 1}, LiouvilleConditionError),
    ("ellipsoid", {"a1": 1, "a2": 2, "a3": 3}, ParameterError),
    ("ellipsoid", {"a1": 2, "a2": 2, "a3": 1}, ParameterError),
    ("flat_torus", {"n": 3, "indices": (2, 2)}, ParameterError),
    ("flat_torus", {"n": 1}, ParameterError),
    ("nope", {}, ParameterError),
])
def test_build_errors(name, params, err):
    with pytest.raises(err):
        mm.build_system(name, params)


def test_rank_at_errors():
    sys = mm.build_system("liouville_torus", {"a": 2, "b": 1})
    with pytest.raises(PrincipalTypeError):
        mm.rank_at(sys, (0, 0), np.zeros(2))
    with pytest.raises(MomentMapError):
        mm.rank_at(sys, (0, 0), (math.sqrt(3), 0), tol=0.1)
    with pytest.raises(MomentMapError):
        mm.rank_at(sys, (0, 0), (1.0, 0), E1=1.0)
    with pytest.raises(PoleError):
        sor = mm.build_system("sor", geometry.spheroid(0.2))
        sor.p[0]((0.0, 0.0), (1.0, 0.0))


# -- invariants -------------------------------------------------------------------

@pytest.mark.parametrize("idx", range(6))
def test_gradients_match_finite_differences(idx):
    sys, x = systems()[idx]
    rng = np.random.default_rng(100 + idx)
    for _ in range(100):
        xi = rng.standard_normal(sys.dim_xi)
        for p, g in zip(sys.p, sys.grad_xi):
            fd = np.empty(sys.dim_xi)
            for j in range(sys.dim_xi):
                e = np.zeros(sys.dim_xi)
                e[j] = 1e-6
                fd[j] = (p(x, xi + e) - p(x, xi - e)) / 2e-6
            an = np.asarray(g(x, xi))
            assert np.linalg.norm(an - fd) <= 1e-6 * max(np.linalg.norm(an), 1.0)


@pytest.mark.parametrize("idx", range(6))
def test_hamiltonian_homogeneity(idx):
    sys, x = systems()[idx]
    rng = np.random.default_rng(idx)
    for c in (0.5, 2.0, 3.7):
        xi = rng.standard_normal(sys.dim_xi)
        assert sys.p[0](x, c * xi) == pytest.approx(c**sys.degree * sys.p[0](x, xi), rel=1e-13)
    assert sys.degree == (1 if sys.label.startswith("flat_torus") else 2)


def test_ellipsoid_projected_gradients_respect_constraint():
    sys = mm.build_system("ellipsoid", {"a1": 3, "a2": 2, "a3": 1})
    rng = np.random.default_rng(5)
    for _ in range(50):
        x = rng.standard_normal(3)
        x /= np.linalg.norm(x)
        xi = mm.cosphere_solve(sys, x, rng.standard_normal(3))
        assert np.abs(sys.constraint(x, xi)).max() <= 1e-12
        rep = mm.rank_at(sys, x, xi)
        g1 = sys.grad_xi[0](x, xi)
        for row in np.atleast_2d(rep.projected_gradients):
            assert abs(row @ x) <= 1e-10
            assert abs(row @ g1) <= 1e-10 * max(1.0, np.linalg.norm(g1))
        assert 0 <= rep.rank <= min(sys.n - 1, rep.tangent_basis.shape[1])


@given(st.integers(0, 5), st.integers(0, 10**6),
       st.lists(st.floats(0.1, 10) | st.floats(-10, -0.1), min_size=3, max_size=3))
def test_rank_invariant_under_rescaling(idx, seed, scales):
    sys, x = systems()[idx]
    rng = np.random.default_rng(seed)
    xi = mm.cosphere_solve(sys, x, rng.standard_normal(sys.dim_xi))
    r0 = mm.rank_at(sys, x, xi).rank
    assert mm.rank_at(mm.rescaled(sys, scales[: sys.n - 1]), x, xi).rank == r0


@given(st.integers(0, 5), st.integers(0, 10**6), st.permutations([0, 1, 2]))
def test_rank_invariant_under_reordering(idx, seed, perm):
    sys, x = systems()[idx]
    perm = [i for i in perm if i < sys.n - 1]
    rng = np.random.default_rng(seed)
    xi = mm.cosphere_solve(sys, x, rng.standard_normal(sys.dim_xi))
    assert mm.rank_at(mm.reordered(sys, perm), x, xi).rank == mm.rank_at(sys, x, xi).rank


@given(st.integers(0, 5), st.integers(0, 10**6), st.floats(-2, 2))
def test_rank_never_grows_with_functional_symbol(idx, seed, c):
    sys, x = systems()[idx]
    rng = np.random.default_rng(seed)
    xi = mm.cosphere_solve(sys, x, rng.standard_normal(sys.dim_xi))
    def F(v):
        return v[-1] ** 2 + c * v[0] * v[-1] + math.sin(v[0])

    def dF(v):
        return np.r_[c * v[-1] + math.cos(v[0]), np.zeros(len(v) - 2), 2 * v[-1] + c * v[0]]

    aug = mm.augmented(sys, F, dF)
    assert mm.rank_at(aug, x, xi).rank == mm.rank_at(sys, x, xi).rank


@pytest.mark.parametrize("idx", range(6))
def test_rank_stable_under_tol_refinement(idx):
    sys, x = systems()[idx]
    scan = mm.rank_scan(sys, x, 360, tol=1e-8)
    for xi, rep in zip(scan.directions, scan.reports):
        near = any(np.linalg.norm(xi - d) <= 1e-6 for _, d in scan.degenerate) and rep.rank == scan.max_rank
        if not near:
            assert mm.rank_at(sys, x, xi, tol=1e-9).rank == rep.rank


def test_liouville_critical_values_are_levels():
    a, b = 2.5, 0.75
    sys = mm.build_system("liouville_torus", {"a": a, "b": b})
    rep = mm.morse_check(sys, x=(0.0, 0.0))
    vals = [c.value for c in rep.critical_points]
    assert vals == pytest.approx([b, -a, b, -a], abs=1e-10)
