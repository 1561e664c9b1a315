import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qci_lab import geometry
from qci_lab.errors import BracketingError, EvaluationError, GeometryError, PoleError


BUNDLED = [geometry.sphere(), geometry.perturbed_sphere(0.05), geometry.perturbed_sphere(0.1),
           geometry.spheroid(0.2), geometry.spheroid(0.0)]


def test_sphere_validates():
    rep = geometry.validate_profile(geometry.sphere())
    assert rep.passed
    assert rep.equators == [(0.0, -1.0)]
    assert rep.max_f == pytest.approx(1.0, abs=1e-12)
    assert not rep.warnings


def test_truncated_sphere_fails_pole_check():
    p = geometry.custom(np.cos, -math.pi / 2, math.pi / 4, df=lambda t: -np.sin(t), d2f=lambda t: -np.cos(t))
    rep = geometry.validate_profile(p)
    assert not rep.passed
    assert rep.verdicts["poles_vanish"] == "fail"
    assert rep.pole_values[1] == pytest.approx(math.sqrt(2) / 2, abs=1e-15)


def test_perturbed_sphere_cone_warning():
    # |f'(+-pi/2)| = 1 - eps, derived symbolically
    rep = geometry.validate_profile(geometry.perturbed_sphere(0.1))
    assert rep.passed
    assert rep.verdicts["pole_smooth"] == "warn"
    assert rep.pole_slope_deviation == pytest.approx((0.1, 0.1), abs=1e-12)
    assert any("cone" in w for w in rep.warnings)


def test_spheroid_pole_smooth_and_equator():
    rep = geometry.validate_profile(geometry.spheroid(0.2))
    assert rep.passed and rep.verdicts["pole_smooth"] == "pass"
    (t0, d2), = rep.equators
    assert t0 == pytest.approx(math.pi / 2, abs=1e-12)
    assert d2 == pytest.approx(3 * 0.2 - 1, abs=1e-12)


def test_non_finite_evaluation_names_t():
    p = geometry.custom(lambda t: np.log(t - 0.5), 0.0, 1.0)
    with pytest.raises(EvaluationError) as info:
        geometry.validate_profile(p)
    assert info.value.t is not None and info.value.t <= 0.5


def _bisect(fn, a, b, tol=1e-15):
    fa = fn(a)
    while b - a > tol:
        m = 0.5 * (a + b)
        if (fn(m) > 0) == (fa > 0):
            a, fa = m, fn(m)
        else:
            b = m
    return 0.5 * (a + b)


@pytest.mark.parametrize("eps", [0.05, 0.1, 0.3])
def test_perturbed_equator_matches_bisection(eps):
    p = geometry.perturbed_sphere(eps)
    (t0, d2), = geometry.equator_locate(p)
    assert t0 == pytest.approx(_bisect(p.df, -0.5, 0.4), abs=1e-12)
    assert d2 == pytest.approx(-1 - 2 * eps, abs=1e-12)


def test_monotone_profile_has_no_equator():
    p = geometry.custom(lambda t: t, 0.0, 1.0, poles=False)
    assert geometry.equator_locate(p) == []
    assert p.derivative_source == "finite-difference"


def test_tangential_root_raises_bracketing():
    # df = (t - 1/2)^2 touches zero without changing sign
    p = geometry.custom(lambda t: (t - 0.5) ** 3 / 3 + 1, 0.0, 1.0,
                        df=lambda t: (t - 0.5) ** 2, d2f=lambda t: 2 * (t - 0.5), poles=False)
    with pytest.raises(BracketingError):
        geometry.equator_locate(p)


@pytest.mark.parametrize("t, theta, expected", [
    (math.pi / 4, math.pi / 2, (0.0, math.sqrt(2) / 2)),
    (0.3, 0.0, (1.0, 0.0)),
    (0.0, math.pi / 4, (math.sqrt(2) / 2, math.sqrt(2) / 2)),
])
def test_cosphere_embed_examples(sphere, t, theta, expected):
    xi = geometry.cosphere_embed(sphere, t, theta)
    assert (xi.xi_t, xi.xi_phi) == pytest.approx(expected, abs=1e-15)
    assert abs(geometry.unit_residual(sphere, t, xi)) <= 1e-15


def test_cosphere_embed_at_pole(spheroid02):
    with pytest.raises(PoleError):
        geometry.cosphere_embed(spheroid02, 0.0, 0.3)


def test_surface_point_reduces_longitude():
    assert geometry.SurfacePoint(0.1, 7.0).phi == pytest.approx(7.0 - 2 * math.pi)
    assert geometry.SurfacePoint(0.1, -0.5).phi == pytest.approx(2 * math.pi - 0.5)


@pytest.mark.parametrize("spec, name", [
    ("sphere", "sphere"),
    ("perturbed-sphere(0.05)", "perturbed-sphere(0.05)"),
    ("spheroid(0.2)", "spheroid(0.2)"),
])
def test_build_profile_by_name(spec, name):
    assert geometry.build_profile(spec).name == name


def test_build_profile_rejects_unknown():
    with pytest.raises(GeometryError):
        geometry.build_profile("torus(1)")


def test_table_profile_roundtrip(tmp_path):
    t = np.linspace(0.0, math.pi, 801)
    path = tmp_path / "table.txt"
    np.savetxt(path, np.column_stack([t, np.sin(t)]))
    p = geometry.build_profile(f"custom:{path}")
    ts = np.linspace(0.2, 2.9, 50)
    assert np.max(np.abs(p.f(ts) - np.sin(ts))) < 1e-9
    assert np.max(np.abs(p.df(ts) - np.cos(ts))) < 1e-6
    (t0, _), = geometry.equator_locate(p)
    assert t0 == pytest.approx(math.pi / 2, abs=1e-6)


@pytest.mark.parametrize("p", BUNDLED, ids=lambda p: p.name)
def test_derivatives_match_finite_differences(p):
    rng = np.random.default_rng(7)
    ts = p.t_minus + p.length * (0.02 + 0.96 * rng.random(100))
    step = 1e-5
    fd1 = (p.f(ts + step) - p.f(ts - step)) / (2 * step)
    fd2 = (p.df(ts + step) - p.df(ts - step)) / (2 * step)
    assert np.max(np.abs(fd1 - p.df(ts)) / np.maximum(np.abs(p.df(ts)), 1)) <= 1e-6
    assert np.max(np.abs(fd2 - p.d2f(ts)) / np.maximum(np.abs(p.d2f(ts)), 1)) <= 1e-6


@pytest.mark.parametrize("p", BUNDLED, ids=lambda p: p.name)
def test_positivity_inside(p):
    ts = np.linspace(p.t_minus, p.t_plus, 1001)[1:-1]
    assert np.all(p.f(ts) > 0)


@given(st.floats(0.01, 0.99), st.floats(-10, 10))
def test_cosphere_is_unit(frac, theta):
    for p in BUNDLED:
        t = p.t_minus + frac * p.length
        assert abs(geometry.unit_residual(p, t, geometry.cosphere_embed(p, t, theta))) <= 1e-10


@pytest.mark.parametrize("p", BUNDLED, ids=lambda p: p.name)
def test_equators_are_sign_changes(p):
    for t0, _ in geometry.equator_locate(p):
        assert np.sign(p.df(t0 - 1e-6)) == -np.sign(p.df(t0 + 1e-6)) != 0


def test_validation_is_deterministic():
    a = geometry.validate_profile(geometry.perturbed_sphere(0.1))
    b = geometry.validate_profile(geometry.perturbed_sphere(0.1))
    assert a == b
