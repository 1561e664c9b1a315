"""Surface-of-revolution metrics ds^2 = dt^2 + f(t)^2 dphi^2.

A :class:`Profile` is the only geometric input of the two-dimensional
experiments.  It carries the generatrix ``f`` and its first two derivatives
on ``[t_minus, t_plus]``; the bundled builders supply closed-form
derivatives, user profiles fall back to finite differences or splines.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import BracketingError, EvaluationError, GeometryError, PoleError

__all__ = [
    "Profile",
    "SurfacePoint",
    "Covector",
    "ValidationReport",
    "sphere",
    "perturbed_sphere",
    "spheroid",
    "custom",
    "from_table",
    "build_profile",
    "validate_profile",
    "equator_locate",
    "cosphere_embed",
    "unit_residual",
]

POLE_SLOPE_TOL = 1e-8
CAP_TOL = 1e-10


@dataclass(frozen=True)
class Profile:
    """Generatrix of a surface of revolution.

    ``poles`` states whether ``f`` is expected to vanish at both ends of the
    domain.  ``pole_smooth`` and ``cap_at_one`` are assertions made by the
    builder and checked by :func:`validate_profile`.
    """

    t_minus: float
    t_plus: float
    f: Callable
    df: Callable
    d2f: Callable
    pole_smooth: bool = False
    cap_at_one: bool = False
    poles: bool = True
    name: str = "custom"
    derivative_source: str = "analytic"

    @property
    def length(self):
        return self.t_plus - self.t_minus

    def contains(self, t):
        return self.t_minus <= t <= self.t_plus


@dataclass(frozen=True)
class SurfacePoint:
    t: float
    phi: float

    def __post_init__(self):
        object.__setattr__(self, "phi", float(self.phi) % (2 * math.pi))


@dataclass(frozen=True)
class Covector:
    xi_t: float
    xi_phi: float


@dataclass
class ValidationReport:
    profile: str
    positivity_violations: list
    pole_values: tuple
    pole_slope_deviation: tuple
    equators: list
    max_f: float
    verdicts: dict
    warnings: list = field(default_factory=list)
    derivative_source: str = "analytic"

    @property
    def passed(self):
        return all(v != "fail" for v in self.verdicts.values())

    def as_rows(self):
        """Flatten to (assumption, verdict) rows for CSV output."""
        return sorted(self.verdicts.items())


# -- builders -----------------------------------------------------------------

def sphere():
    """Round unit sphere, f = cos t on [-pi/2, pi/2]."""
    return Profile(
        -math.pi / 2, math.pi / 2,
        f=np.cos,
        df=lambda t: -np.sin(t),
        d2f=lambda t: -np.cos(t),
        pole_smooth=True, cap_at_one=True, name="sphere",
    )


def perturbed_sphere(eps):
    """f = cos t (1 - eps sin^2 t) on [-pi/2, pi/2].

    Keeps f(0) = 1 as the unique maximum, so it is a valid quasimode
    profile, but |f'| = 1 - eps at the poles (cone points).
    """
    eps = float(eps)

    def f(t):
        return np.cos(t) * (1 - eps * np.sin(t) ** 2)

    def df(t):
        s, c = np.sin(t), np.cos(t)
        return -s - eps * (2 * s * c**2 - s**3)

    def d2f(t):
        s, c = np.sin(t), np.cos(t)
        return -c - eps * (2 * c**3 - 7 * s**2 * c)

    return Profile(-math.pi / 2, math.pi / 2, f, df, d2f,
                   pole_smooth=False, cap_at_one=True,
                   name=f"perturbed-sphere({eps:g})")


def spheroid(eps):
    """f = sin t (1 - eps sin^2 t) on [0, pi]; equator radius 1 - eps."""
    eps = float(eps)

    def f(t):
        s = np.sin(t)
        return s - eps * s**3

    def df(t):
        s, c = np.sin(t), np.cos(t)
        return c - 3 * eps * s**2 * c

    def d2f(t):
        s, c = np.sin(t), np.cos(t)
        return -s - eps * (6 * s * c**2 - 3 * s**3)

    return Profile(0.0, math.pi, f, df, d2f, pole_smooth=True,
                   cap_at_one=False, name=f"spheroid({eps:g})")


def _fd_derivatives(f, step):
    # 5-point central stencils
    def df(t):
        return (f(t - 2 * step) - 8 * f(t - step) + 8 * f(t + step) - f(t + 2 * step)) / (12 * step)

    def d2f(t):
        return (-f(t - 2 * step) + 16 * f(t - step) - 30 * f(t)
                + 16 * f(t + step) - f(t + 2 * step)) / (12 * step**2)

    return df, d2f


def custom(f, t_minus, t_plus, df=None, d2f=None, **flags):
    """Wrap a user generatrix; missing derivatives come from a 5-point stencil
    with step 1e-5 times the domain length (flagged in validation reports)."""
    source = "analytic"
    if df is None or d2f is None:
        fd1, fd2 = _fd_derivatives(f, 1e-5 * (t_plus - t_minus))
        df = df if df is not None else fd1
        d2f = d2f if d2f is not None else fd2
        source = "finite-difference"
    return Profile(float(t_minus), float(t_plus), f, df, d2f,
                   derivative_source=source, **flags)


def from_table(source, **flags):
    """Profile from a two-column table (t, f(t)) with derivatives by cubic spline.

    ``source`` is a path to a whitespace/comma separated text file or an
    ``(n, 2)`` array.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source) as fh:
            text = fh.read().replace(",", " ")
        rows = [line.split() for line in text.splitlines()
                if line.strip() and not line.lstrip().startswith("#")]
        data = np.array(rows, dtype=float)
    else:
        data = np.asarray(source, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise GeometryError("profile table must have exactly two columns (t, f)")
    t, y = data[:, 0], data[:, 1]
    if np.any(np.diff(t) <= 0):
        raise GeometryError("profile table t column must be strictly increasing")
    spline = CubicSpline(t, y)
    d1, d2 = spline.derivative(1), spline.derivative(2)
    return Profile(float(t[0]), float(t[-1]), spline, d1, d2,
                   derivative_source="spline", name="custom", **flags)


_BUILDER_RE = re.compile(r"^\s*([a-z\-]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$")


def build_profile(spec):
    """Resolve a profile name such as ``"sphere"``, ``"spheroid(0.2)"`` or
    ``"custom:path/to/table.txt"``."""
    if isinstance(spec, Profile):
        return spec
    if spec.startswith("custom:"):
        return from_table(spec.split(":", 1)[1])
    m = _BUILDER_RE.match(spec)
    if not m:
        raise GeometryError(f"unrecognized profile spec {spec!r}")
    name, arg = m.group(1), m.group(2)
    if name == "sphere" and not arg:
        return sphere()
    if name in ("perturbed-sphere", "spheroid"):
        if not arg:
            raise GeometryError(f"profile {name} needs a parameter, e.g. {name}(0.1)")
        builder = perturbed_sphere if name == "perturbed-sphere" else spheroid
        return builder(float(arg))
    raise GeometryError(f"unrecognized profile spec {spec!r}")


# -- checks -------------------------------------------------------------------

def _evaluate(fn, ts, what):
    with np.errstate(all="ignore"):
        vals = np.array([float(fn(t)) for t in ts])
    bad = ~np.isfinite(vals)
    if bad.any():
        t_bad = float(ts[np.argmax(bad)])
        raise EvaluationError(f"{what} is not finite at t={t_bad!r}", t=t_bad)
    return vals


def validate_profile(p, samples=2001):
    """Check a profile against the standing assumptions of the 2-D experiments.

    Hard failures: non-positive ``f`` inside the domain, nonzero ``f`` at the
    ends when poles are expected, a degenerate equator (``f'' = 0`` where
    ``f' = 0``) and a violated ``cap_at_one`` assertion.  A pole slope away
    from 1 is only a cone-point warning.
    """
    ts = np.linspace(p.t_minus, p.t_plus, samples)
    fv = _evaluate(p.f, ts, "f")
    _evaluate(p.df, ts[1:-1], "df")
    _evaluate(p.d2f, ts[1:-1], "d2f")

    interior = ts[1:-1]
    positivity = [float(t) for t, v in zip(interior, fv[1:-1]) if v <= 0]
    pole_values = (float(fv[0]), float(fv[-1]))
    slopes = (float(p.df(p.t_minus)), float(p.df(p.t_plus)))
    deviation = (abs(abs(slopes[0]) - 1.0), abs(abs(slopes[1]) - 1.0))

    verdicts = {"positivity": "pass" if not positivity else "fail"}
    warnings = []
    if p.poles:
        vanish = all(abs(v) <= CAP_TOL for v in pole_values)
        verdicts["poles_vanish"] = "pass" if vanish else "fail"
        if max(deviation) <= POLE_SLOPE_TOL:
            verdicts["pole_smooth"] = "pass"
        else:
            verdicts["pole_smooth"] = "warn"
            warnings.append(
                "cone point: |f'(pole)| deviates from 1 by "
                f"{deviation[0]:.3g} (t_minus), {deviation[1]:.3g} (t_plus)")
    else:
        verdicts["poles_vanish"] = "n/a"
        verdicts["pole_smooth"] = "n/a"

    equators = []
    if not positivity:
        try:
            equators = equator_locate(p)
        except BracketingError as exc:
            verdicts["equator_nondegenerate"] = "fail"
            warnings.append(str(exc))
    if "equator_nondegenerate" not in verdicts:
        # equator_locate drops roots with |f''| <= tol; recount with no filter
        raw = _df_roots(p)
        verdicts["equator_nondegenerate"] = "pass" if len(raw) == len(equators) else "fail"
    if len(equators) > 1:
        warnings.append(f"{len(equators)} equators found; bundled experiments assume one")

    max_f = float(fv.max())
    for t0, _ in equators:
        max_f = max(max_f, float(p.f(t0)))
    if p.cap_at_one:
        at_one = any(abs(float(p.f(t0)) - 1.0) <= CAP_TOL for t0, _ in equators)
        verdicts["cap_at_one"] = "pass" if (max_f <= 1 + CAP_TOL and at_one) else "fail"
    else:
        verdicts["cap_at_one"] = "n/a"
    if p.derivative_source != "analytic":
        warnings.append(f"derivatives are {p.derivative_source} approximations")

    return ValidationReport(
        profile=p.name,
        positivity_violations=positivity,
        pole_values=pole_values,
        pole_slope_deviation=deviation,
        equators=equators,
        max_f=max_f,
        verdicts=verdicts,
        warnings=warnings,
        derivative_source=p.derivative_source,
    )


def _df_roots(p, samples=4001, tol=1e-10):
    ts = np.linspace(p.t_minus, p.t_plus, samples)[1:-1]
    d = np.array([float(p.df(t)) for t in ts])
    roots = []
    i = 0
    while i < len(ts) - 1:
        if d[i] == 0.0:
            left = d[i - 1] if i > 0 else d[i + 1]
            if left * d[i + 1] < 0:
                roots.append(float(ts[i]))
                i += 2
                continue
            raise BracketingError(f"df touches zero without changing sign near t={ts[i]!r}")
        if d[i] * d[i + 1] < 0:
            roots.append(brentq(p.df, ts[i], ts[i + 1], xtol=1e-15, rtol=8.9e-16, maxiter=200))
        elif abs(d[i]) <= tol and (i == 0 or d[i - 1] * d[i + 1] > 0):
            raise BracketingError(f"df touches zero without changing sign near t={ts[i]!r}")
        i += 1
    return roots


def equator_locate(p, tol=1e-10):
    """Nondegenerate critical circles of ``f``: ``[(t0, f''(t0)), ...]`` ordered by t."""
    out = []
    for t0 in _df_roots(p, tol=tol):
        d1 = float(p.df(t0))
        d2 = float(p.d2f(t0))
        if abs(d1) <= tol and abs(d2) > tol:
            out.append((t0, d2))
    return out


def cosphere_embed(p, t, theta):
    """Unit covector at angle ``theta`` from the meridian: (cos theta, f sin theta)."""
    ft = float(p.f(t))
    if not ft > 0:
        raise PoleError(f"f(t) = {ft!r} <= 0 at t={t!r}: cosphere undefined at a pole")
    return Covector(math.cos(theta), ft * math.sin(theta))


def unit_residual(p, t, xi):
    """p1(x, xi) - 1 for the metric symbol xi_t^2 + xi_phi^2 / f^2."""
    ft = float(p.f(t))
    return xi.xi_t**2 + xi.xi_phi**2 / ft**2 - 1.0
