"""Highest-weight quasimodes concentrating on the equator.

For a profile with ``f <= 1`` and ``f(t0) = 1`` at the equator,

    u(t, phi) = lam^{1/4} exp(-lam A(t)) e^{i lam phi},
    A(t) = | int_{t0}^{t} sqrt(1 - f^2) / f ds |,

satisfies ``(-h^2 Delta - 1) u = h r(t) u`` with ``h = 1/lam`` and

    r(t) = -sign(t - t0) f'(t) / sqrt(1 - f(t)^2),

which tends to ``sqrt(-f''(t0))`` at the equator.  On the round sphere
``A = -ln cos t`` and ``r == 1``.

``A`` is taken nonnegative on both sides of the equator so that ``u``
decays away from it; the phase integral written with a positive integrand
throughout would grow on one side.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import CapViolationError, NoUnitEquatorError, QuasimodeError, ResolutionError
from .geometry import equator_locate
from .spectral import fit_scaling

__all__ = [
    "QuasimodeField",
    "ResidualReport",
    "AssumptionWarning",
    "DEFAULT_LAMBDAS",
    "unit_equator",
    "phase_integral",
    "default_grid",
    "build",
    "residual_ratio",
    "residual_analytic",
    "residual_numeric",
    "apply_operator",
    "normalized_sup",
    "defect_and_sup_scaling",
    "eigenfunction_gap",
]

DEFAULT_LAMBDAS = (50, 75, 112, 169, 253, 380)
TAYLOR_BAND = 1e-4
RATIO_CAP = 1e3
WINDOW_DECAY = 60.0     # lam * A at the window edge; e^-60 is below double-precision relevance

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


class AssumptionWarning(UserWarning):
    """``f'/sqrt(1 - f^2)`` is not bounded on the grid."""


@dataclass
class QuasimodeField:
    lam: float
    A: np.ndarray
    u_abs: np.ndarray
    grid: np.ndarray
    t0: float
    profile: object = field(repr=False, default=None)

    @property
    def h(self):
        return 1.0 / self.lam


@dataclass
class ResidualReport:
    h: float
    analytic_sup: float = float("nan")
    numeric_sup: float = float("nan")
    agreement: float = float("nan")
    ratio_max: float = float("nan")
    warnings: list = field(default_factory=list)


def unit_equator(p):
    """Equator ``(t0, f''(t0))`` where ``f = 1``; checks the cap ``f <= 1``."""
    if not p.cap_at_one:
        raise CapViolationError(f"profile {p.name} does not assert max f = 1")
    eqs = equator_locate(p)
    if not eqs:
        raise NoUnitEquatorError(f"profile {p.name} has no equator")
    t0, d2 = max(eqs, key=lambda e: float(p.f(e[0])))
    f0 = float(p.f(t0))
    if f0 > 1 + 1e-12:
        raise CapViolationError(f"f(t0) = {f0!r} exceeds 1")
    if f0 < 1 - 1e-10:
        raise NoUnitEquatorError(f"f(t0) = {f0!r} < 1: no unit equator")
    ts = np.linspace(p.t_minus, p.t_plus, 4001)
    fmax = float(np.max(p.f(ts)))
    if fmax > 1 + 1e-12:
        raise CapViolationError(f"f exceeds 1 (max {fmax!r})")
    return t0, d2


def _defect(p, t0, x):
    """``1 - f(x)`` computed as ``-int_{t0}^{x} f'`` near the equator to avoid
    the cancellation in ``1 - f``."""
    x = np.asarray(x, dtype=float)
    dx = x - t0
    nodes = t0 + dx[..., None] * (_GL_X + 1) / 2
    near = -(dx / 2) * np.sum(_GL_W * p.df(nodes), axis=-1)
    far = 1.0 - p.f(x)
    return np.where(np.abs(dx) < 0.25, near, far)


def _integrand(p, t0, x):
    d = np.maximum(_defect(p, t0, x), 0.0)
    return np.sqrt(d * (2.0 - d)) / p.f(x)


def phase_integral(p, t, t0=None):
    """``A(t)`` at a single point by adaptive quadrature."""
    if t0 is None:
        t0 = unit_equator(p)[0]
    if t == t0:
        return 0.0
    a, b = sorted((t0, float(t)))
    val, _ = quad(lambda x: float(_integrand(p, t0, x)), a, b,
                  epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def _cumulative_A(p, t0, grid):
    """A on sorted grid nodes by 16-point Gauss-Legendre panels between
    consecutive nodes, accumulated outward from the equator."""
    grid = np.asarray(grid, dtype=float)
    A = np.zeros_like(grid)
    for side in (1, -1):
        idx = np.nonzero(side * (grid - t0) > 0)[0]
        if side < 0:
            idx = idx[::-1]
        if idx.size == 0:
            continue
        ends = np.concatenate(([t0], grid[idx]))
        lo, hi = ends[:-1], ends[1:]
        half = (hi - lo) / 2
        nodes = lo[:, None] + half[:, None] * (_GL_X + 1)
        panels = np.abs(half) * np.sum(_GL_W * _integrand(p, t0, nodes), axis=1)
        A[idx] = np.cumsum(panels)
    return A


def default_grid(p, lam, points_per_unit=None):
    """Uniform grid with spacing ``1/(20 lam)`` covering the window where
    ``lam A(t) <= 60`` (clipped away from the poles)."""
    t0, _ = unit_equator(p)
    spacing = 1.0 / (20.0 * lam) if points_per_unit is None else 1.0 / points_per_unit
    margin = 1e-3 * p.length
    edges = []
    for side, limit in ((-1, p.t_minus + margin), (1, p.t_plus - margin)):
        w = 1.0 / math.sqrt(lam)
        while True:
            t = t0 + side * w
            if side * (t - limit) >= 0:
                edges.append(limit)
                break
            if lam * phase_integral(p, t, t0) >= WINDOW_DECAY:
                edges.append(t)
                break
            w *= 1.5
    n_left = int(math.ceil((t0 - edges[0]) / spacing))
    n_right = int(math.ceil((edges[1] - t0) / spacing))
    return t0 + spacing * np.arange(-n_left, n_right + 1)


def build(p, lam, grid=None):
    """Highest-weight quasimode ``|u| = lam^{1/4} exp(-lam A)`` on ``grid``."""
    lam = float(lam)
    if lam < 10:
        raise QuasimodeError(f"lambda must be >= 10, got {lam}")
    t0, _ = unit_equator(p)
    if grid is None:
        grid = default_grid(p, lam)
    grid = np.asarray(grid, dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise QuasimodeError("grid must be strictly increasing")
    fg = p.f(grid)
    if np.any(fg > 1 + 1e-12):
        i = int(np.argmax(fg))
        raise CapViolationError(f"f = {fg[i]!r} > 1 at t={grid[i]!r}")
    A = _cumulative_A(p, t0, grid)
    u_abs = lam**0.25 * np.exp(-lam * A)
    return QuasimodeField(lam=lam, A=A, u_abs=u_abs, grid=grid, t0=t0, profile=p)


def residual_ratio(p, t, t0, d2f0=None):
    """``r(t) = -sign(t - t0) f' / sqrt(1 - f^2)``, with the Taylor limit
    ``sqrt(-f''(t0))`` inside ``|t - t0| <= 1e-4``."""
    t = np.asarray(t, dtype=float)
    if d2f0 is None:
        d2f0 = float(p.d2f(t0))
    limit = math.sqrt(max(-d2f0, 0.0))
    d = np.maximum(_defect(p, t0, t), 0.0)
    root = np.sqrt(d * (2.0 - d))
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = -np.sign(t - t0) * p.df(t) / root
    return np.where(np.abs(t - t0) <= TAYLOR_BAND, limit, direct)


def residual_analytic(p, q):
    """Relative residual ``sup |(-h^2 Delta - 1) u| / sup |u|`` from the
    closed-form identity ``(-h^2 Delta - 1) u = h r(t) u``."""
    r = residual_ratio(p, q.grid, q.t0)
    report = ResidualReport(h=q.h)
    report.ratio_max = float(np.max(np.abs(r)))
    if not np.isfinite(report.ratio_max) or report.ratio_max > RATIO_CAP:
        msg = (f"|f'|/sqrt(1-f^2) reaches {report.ratio_max:.3g} on the grid; "
               "the O(h) residual identity is not uniform")
        report.warnings.append(msg)
        warnings.warn(msg, AssumptionWarning, stacklevel=2)
    report.analytic_sup = float(np.max(np.abs(q.h * r * q.u_abs)) / np.max(q.u_abs))
    return report


def apply_operator(p, grid, values, lam):
    """``(-h^2 Delta - 1) v`` for ``v(t) e^{i lam phi}`` on a uniform grid,
    with 4th-order central differences in t.  Returns values on
    ``grid[2:-2]``."""
    grid = np.asarray(grid, dtype=float)
    v = np.asarray(values, dtype=float)
    dt = np.diff(grid)
    step = float(dt.mean())
    if np.max(np.abs(dt - step)) > 1e-9 * step:
        raise QuasimodeError("finite-difference residual needs a uniform grid")
    d1 = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * step)
    d2 = (-v[4:] + 16 * v[3:-1] - 30 * v[2:-2] + 16 * v[1:-3] - v[:-4]) / (12 * step**2)
    t = grid[2:-2]
    f, df = p.f(t), p.df(t)
    lap = d2 + df / f * d1 - lam**2 * v[2:-2] / f**2
    return -lap / lam**2 - v[2:-2]


def residual_numeric(p, q, report=None):
    """Finite-difference counterpart of :func:`residual_analytic`; fills in
    ``numeric_sup`` and the relative ``agreement`` gap."""
    spacing = float(np.max(np.diff(q.grid)))
    required = 1.0 / (10.0 * q.lam)
    if spacing > required:
        raise ResolutionError(
            f"grid spacing {spacing:.3g} too coarse for lambda={q.lam:g}; "
            f"need <= {required:.3g}", module="quasimode", required=required)
    res = apply_operator(p, q.grid, q.u_abs, q.lam)
    if report is None:
        report = residual_analytic(p, q)
    report.numeric_sup = float(np.max(np.abs(res)) / np.max(q.u_abs))
    report.agreement = abs(report.numeric_sup - report.analytic_sup) / report.analytic_sup
    return report


def normalized_sup(q):
    """Peak of ``|u|`` after scaling to ``2 pi int |u|^2 f dt = 1``."""
    norm = 2 * math.pi * float(np.trapezoid(q.u_abs**2 * q.profile.f(q.grid), q.grid))
    return float(np.max(q.u_abs)) / math.sqrt(norm)


def defect_and_sup_scaling(p, lambdas=DEFAULT_LAMBDAS, min_ratio=7.0):
    """Fit the normalized sup (expect lam^{1/4}) and the relative defect
    (expect lam^{-1}) over ``lambdas``.

    Returns ``(sup_fit, defect_fit, rows)``; each row is
    ``(lam, sup_normalized, analytic_sup, numeric_sup, agreement)``.
    """
    lambdas = sorted(float(x) for x in lambdas)
    if len(lambdas) < 5:
        raise QuasimodeError("need at least 5 lambda values")
    if lambdas[-1] / lambdas[0] < min_ratio:
        raise QuasimodeError(f"lambda values must span a factor of {min_ratio:g}")
    rows = []
    for lam in lambdas:
        q = build(p, lam)
        rep = residual_numeric(p, q)
        rows.append((lam, normalized_sup(q), rep.analytic_sup, rep.numeric_sup, rep.agreement))
    span = math.log10(lambdas[-1] / lambdas[0])
    sup_fit = fit_scaling([(r[0], r[1]) for r in rows], min_decades=span)
    defect_fit = fit_scaling([(r[0], r[3]) for r in rows], min_decades=span)
    return sup_fit, defect_fit, rows


def eigenfunction_gap(q, mode):
    """Relative sup gap between the L^2-normalized quasimode and a solved
    mode's ``|T|``, compared on the quasimode grid."""
    T = CubicSpline(mode.grid, np.abs(mode.T))(q.grid)
    norm = 2 * math.pi * float(np.trapezoid(q.u_abs**2 * q.profile.f(q.grid), q.grid))
    u = q.u_abs / math.sqrt(norm)
    return float(np.max(np.abs(u - T)) / np.max(np.abs(T)))
