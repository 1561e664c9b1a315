"""Moment maps of the integrable examples and the rank/Morse checks.

A symbol system is a tuple ``(p_1, ..., p_n)`` of functions of a phase point
``(x, xi)`` together with their analytic ``xi``-gradients.  ``p_1`` defines
the cosphere ``C_x = {xi : p_1(x, xi) = E_1}``; the rank at ``xi`` is the
dimension of the span of the gradients of ``p_2..p_n`` projected onto the
tangent space of ``C_x`` at ``xi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import brentq

from .errors import (
    LiouvilleConditionError,
    MomentMapError,
    ParameterError,
    PoleError,
    PrincipalTypeError,
    ResolutionError,
    SolveError,
)

__all__ = [
    "SymbolSystem",
    "RankReport",
    "RankScan",
    "CriticalPoint",
    "MorseReport",
    "build_system",
    "cosphere_solve",
    "rank_at",
    "rank_scan",
    "morse_check",
    "rescaled",
    "reordered",
    "augmented",
    "ellipsoid_frame",
]

DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class SymbolSystem:
    """Immutable symbol tuple.

    ``theta_direction(x, theta)`` parametrizes cosphere directions for
    two-dimensional fibres; ``constraint_normals(x)`` returns the rows whose
    orthogonal complement is the admissible ``xi``-space (ellipsoid only).
    ``degree`` is the homogeneity degree of ``p_1`` in ``xi``.
    """

    n: int
    dim_x: int
    p: tuple
    grad_xi: tuple
    label: str
    dim_xi: int
    degree: int = 2
    constraint: Optional[Callable] = None
    constraint_normals: Optional[Callable] = None
    theta_direction: Optional[Callable] = None

    def values(self, x, xi):
        return np.array([pj(x, xi) for pj in self.p], dtype=float)

    def gradients(self, x, xi):
        return np.array([gj(x, xi) for gj in self.grad_xi], dtype=float)


@dataclass
class RankReport:
    rank: int
    singular_values: np.ndarray
    tol_used: float
    tangent_basis: np.ndarray
    projected_gradients: np.ndarray


@dataclass
class RankScan:
    min_rank: int
    max_rank: int
    degenerate: list
    directions: np.ndarray
    reports: list = field(repr=False)
    thetas: Optional[np.ndarray] = None


@dataclass(frozen=True)
class CriticalPoint:
    theta: float
    value: float
    second_derivative: float
    multiplier: float


@dataclass
class MorseReport:
    """Critical points of ``q`` on the cosphere circle.

    ``multiplier`` is the Lagrange factor ``mu`` with ``d_xi q = mu d_xi p_1``
    at each critical point; a critical point is exactly a point where the
    gradients are proportional, i.e. where the rank condition fails.
    """

    critical_points: list
    all_nondegenerate: bool
    tol: float
    constant: bool = False

    def rows(self):
        return [(c.theta, c.value, c.second_derivative, abs(c.second_derivative) > self.tol)
                for c in self.critical_points]


# ---------------------------------------------------------------- builders

def _as_fn(v, name):
    if callable(v):
        return v
    v = float(v)
    if not math.isfinite(v):
        raise ParameterError(f"{name} must be finite")
    return lambda s, _v=v: _v + 0.0 * np.asarray(s, dtype=float)


def _sor(params):
    prof = params["profile"] if isinstance(params, dict) else params

    def f_at(x):
        ft = float(prof.f(x[0]))
        if ft <= 0:
            raise PoleError(f"f(t) = {ft!r} at t={x[0]!r}: the cosphere degenerates at a pole")
        return ft

    def p1(x, xi):
        return xi[0] ** 2 + xi[1] ** 2 / f_at(x) ** 2

    def p2(x, xi):
        return float(xi[1])

    def g1(x, xi):
        return np.array([2 * xi[0], 2 * xi[1] / f_at(x) ** 2])

    def g2(x, xi):
        return np.array([0.0, 1.0])

    def theta_dir(x, th):
        return np.array([math.cos(th), f_at(x) * math.sin(th)])

    return SymbolSystem(2, 2, (p1, p2), (g1, g2), f"sor[{prof.name}]", 2,
                        theta_direction=theta_dir)


def _liouville(params):
    a = _as_fn(params.get("a", 2.0), "a")
    b = _as_fn(params.get("b", 1.0), "b")
    grid = np.linspace(0.0, 1.0, int(params.get("check_samples", 1001)))
    a_min, b_max = float(np.min(a(grid))), float(np.max(b(grid)))
    if not a_min > b_max:
        raise LiouvilleConditionError(f"need min a > max b, got min a = {a_min!r}, max b = {b_max!r}")
    if float(np.min(b(grid))) <= 0:
        raise LiouvilleConditionError("b must be positive")

    def ab(x):
        return float(a(x[0])), float(b(x[1]))

    def p1(x, xi):
        al, be = ab(x)
        return (xi[0] ** 2 + xi[1] ** 2) / (al + be)

    def p2(x, xi):
        al, be = ab(x)
        return (be * xi[0] ** 2 - al * xi[1] ** 2) / (al + be)

    def g1(x, xi):
        al, be = ab(x)
        return np.array([2 * xi[0], 2 * xi[1]]) / (al + be)

    def g2(x, xi):
        al, be = ab(x)
        return np.array([2 * be * xi[0], -2 * al * xi[1]]) / (al + be)

    def theta_dir(x, th):
        return np.array([math.cos(th), math.sin(th)])

    return SymbolSystem(2, 2, (p1, p2), (g1, g2), "liouville_torus", 2,
                        theta_direction=theta_dir)


def _angular(x, xi):
    """``(L1, L2, L3) = (x3 xi2 - x2 xi3, x1 xi3 - x3 xi1, x1 xi2 - xi1 x2)``."""
    return (x[2] * xi[1] - x[1] * xi[2], x[0] * xi[2] - x[2] * xi[0], x[0] * xi[1] - xi[0] * x[1])


def _angular_grads(x):
    return (np.array([0.0, x[2], -x[1]]), np.array([-x[2], 0.0, x[0]]), np.array([-x[1], x[0], 0.0]))


def ellipsoid_frame(x):
    """Orthonormal ``(e_a, e_b)`` spanning ``x^perp``.

    ``e_a`` is proportional to ``e2 x x`` so that on the plane ``x2 = 0`` it
    is tangent to that great circle; ``e_b = x x e_a``.
    """
    x = np.asarray(x, dtype=float)
    x = x / np.linalg.norm(x)
    ea = np.cross([0.0, 1.0, 0.0], x)
    if np.linalg.norm(ea) < 1e-8:
        ea = np.cross([1.0, 0.0, 0.0], x)
    ea /= np.linalg.norm(ea)
    return ea, np.cross(x, ea)


def _ellipsoid(params):
    a1, a2, a3 = (float(params.get(k, d)) for k, d in (("a1", 3.0), ("a2", 2.0), ("a3", 1.0)))
    if not 0 < a3 < a2 < a1:
        raise ParameterError(f"need 0 < a3 < a2 < a1, got ({a1}, {a2}, {a3})")
    coef = (a1, a2, a3)

    def H(x, xi):
        L = _angular(x, xi)
        return sum(c * l * l for c, l in zip(coef, L))

    def P(x, xi):
        L = _angular(x, xi)
        return sum(l * l for l in L)

    def gH(x, xi):
        L, G = _angular(x, xi), _angular_grads(x)
        return sum(2 * c * l * g for c, l, g in zip(coef, L, G))

    def gP(x, xi):
        L, G = _angular(x, xi), _angular_grads(x)
        return sum(2 * l * g for l, g in zip(L, G))

    def constraint(x, xi):
        x, xi = np.asarray(x, float), np.asarray(xi, float)
        return np.array([x @ x - 1.0, x @ xi])

    def normals(x):
        return np.asarray(x, dtype=float)[None, :]

    def theta_dir(x, th):
        ea, eb = ellipsoid_frame(x)
        return math.cos(th) * ea + math.sin(th) * eb

    return SymbolSystem(2, 3, (H, P), (gH, gP), f"ellipsoid({a1},{a2},{a3})", 3,
                        constraint=constraint, constraint_normals=normals,
                        theta_direction=theta_dir)


def _flat_torus(params):
    n = int(params.get("n", 3))
    if n < 2:
        raise ParameterError("flat torus dimension must be >= 2")
    idx = tuple(int(i) for i in params.get("indices", range(2, n + 1)))
    if len(idx) != n - 1 or len(set(idx)) != n - 1 or not all(1 <= i <= n for i in idx):
        raise ParameterError(f"need n-1 = {n - 1} distinct momentum indices in 1..{n}, got {idx}")

    def p1(x, xi):
        return float(np.linalg.norm(xi))

    def g1(x, xi):
        xi = np.asarray(xi, dtype=float)
        return xi / np.linalg.norm(xi)

    def coord(i):
        e = np.zeros(n)
        e[i - 1] = 1.0
        return (lambda x, xi: float(xi[i - 1])), (lambda x, xi: e.copy())

    ps, gs = [p1], [g1]
    for i in idx:
        pj, gj = coord(i)
        ps.append(pj)
        gs.append(gj)

    theta_dir = (lambda x, th: np.array([math.cos(th), math.sin(th)])) if n == 2 else None
    return SymbolSystem(n, n, tuple(ps), tuple(gs), f"flat_torus(n={n},{idx})", n, degree=1,
                        theta_direction=theta_dir)


_BUILDERS = {
    "sor": _sor,
    "liouville_torus": _liouville,
    "ellipsoid": _ellipsoid,
    "flat_torus": _flat_torus,
}


def build_system(name, params=None):
    """Build one of ``sor``, ``liouville_torus``, ``ellipsoid``, ``flat_torus``.

    Parameters
    ----------
    name : str
    params : dict or Profile
        ``sor``: a Profile (or ``{"profile": ...}``); ``liouville_torus``:
        ``a``, ``b`` (numbers or periodic callables on ``[0, 1]``);
        ``ellipsoid``: ``a1``, ``a2``, ``a3``; ``flat_torus``: ``n`` and
        1-based ``indices`` of the momentum symbols.
    """
    if name not in _BUILDERS:
        raise ParameterError(f"unknown system {name!r}; expected one of {sorted(_BUILDERS)}")
    return _BUILDERS[name](params if params is not None else {})


# --------------------------------------------------------- transformations

def rescaled(sys, scales):
    """Replace ``p_j`` by ``c_j p_j`` for ``j >= 2``."""
    scales = tuple(float(c) for c in scales)
    ps = (sys.p[0],) + tuple((lambda x, xi, f=f, c=c: c * f(x, xi)) for f, c in zip(sys.p[1:], scales))
    gs = (sys.grad_xi[0],) + tuple((lambda x, xi, g=g, c=c: c * np.asarray(g(x, xi))) for g, c in zip(sys.grad_xi[1:], scales))
    return replace(sys, p=ps, grad_xi=gs, label=sys.label + "*scaled")


def reordered(sys, perm):
    """Permute ``p_2..p_n`` (``perm`` indexes the tail, 0-based)."""
    ps = (sys.p[0],) + tuple(sys.p[1 + i] for i in perm)
    gs = (sys.grad_xi[0],) + tuple(sys.grad_xi[1 + i] for i in perm)
    return replace(sys, p=ps, grad_xi=gs, label=sys.label + "*perm")


def augmented(sys, fn, grad_fn):
    """Append ``F(p_1..p_n)``; ``grad_fn(values)`` returns ``dF/dp``."""
    def p_new(x, xi):
        return fn(sys.values(x, xi))

    def g_new(x, xi):
        return np.asarray(grad_fn(sys.values(x, xi))) @ sys.gradients(x, xi)

    return replace(sys, n=sys.n + 1, p=sys.p + (p_new,), grad_xi=sys.grad_xi + (g_new,),
                   label=sys.label + "+F")


# ------------------------------------------------------------------ checks

def _admissible_basis(sys, x):
    if sys.constraint_normals is None:
        return np.eye(sys.dim_xi)
    return null_space(sys.constraint_normals(x))


def cosphere_solve(sys, x, direction, E1=1.0, max_iter=50):
    """Scale ``direction`` by ``c > 0`` so that ``p_1(x, c d) = E1`` (Newton from 1)."""
    d = np.asarray(direction, dtype=float)
    if sys.constraint_normals is not None:
        B = _admissible_basis(sys, x)
        d = B @ (B.T @ d)
    if not np.all(np.isfinite(d)) or np.linalg.norm(d) == 0:
        raise SolveError("direction must be nonzero (after projection onto the admissible space)")
    if not E1 > 0:
        raise SolveError(f"energy E1 must be positive, got {E1!r}")
    c = 1.0
    for _ in range(max_iter):
        xi = c * d
        r = sys.p[0](x, xi) - E1
        if abs(r) <= 1e-12 * max(1.0, E1):
            return xi
        slope = float(np.dot(sys.grad_xi[0](x, xi), d))
        if slope == 0 or not math.isfinite(slope):
            break
        c_new = c - r / slope
        c = c_new if c_new > 0 else 0.5 * c
    raise SolveError(f"cosphere Newton did not converge in {max_iter} steps (x={x!r})")


def rank_at(sys, x, xi, tol=DEFAULT_TOL, projected=True, E1=None):
    """Rank of ``{d_xi p_2, ..., d_xi p_n}`` as a subspace of ``T_xi C_x``.

    Singular values count when larger than ``tol * max(sigma_max, 1)``.
    With ``projected=False`` the raw (ambient) gradients are used instead.
    """
    if not 1e-12 <= tol <= 1e-2:
        raise MomentMapError(f"tol={tol!r} outside [1e-12, 1e-2]")
    xi = np.asarray(xi, dtype=float)
    if E1 is not None and abs(sys.p[0](x, xi) - E1) > 1e-10:
        raise MomentMapError(f"xi is not on the cosphere p1 = {E1}")
    C = _admissible_basis(sys, x)
    g1 = C.T @ np.asarray(sys.grad_xi[0](x, xi), dtype=float)
    if np.linalg.norm(g1) <= 1e-14 * max(1.0, np.linalg.norm(xi)):
        raise PrincipalTypeError("d_xi p1 vanishes: the symbol is not of real principal type here")
    T = C @ null_space(g1[None, :])
    G = np.array([np.asarray(g(x, xi), dtype=float) for g in sys.grad_xi[1:]])
    proj = G @ T if projected else G @ C
    sv = np.linalg.svd(proj, compute_uv=False) if proj.size else np.zeros(0)
    thresh = tol * max(float(sv[0]) if sv.size else 0.0, 1.0)
    rank = int(np.sum(sv > thresh))
    return RankReport(rank, sv, thresh, T, (proj @ T.T) if projected else G)


def _sphere_design(dim, samples, seed):
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    rng = np.random.default_rng(seed)
    extra = rng.standard_normal((max(samples - len(axes), 0), dim))
    extra /= np.linalg.norm(extra, axis=1, keepdims=True)
    return np.vstack([axes, extra])


def rank_scan(sys, x, samples=360, tol=DEFAULT_TOL, E1=1.0, seed=0, projected=True):
    """Rank over a sampling of ``C_x``.

    Two-dimensional fibres use the uniform angle grid ``2 pi k / samples``;
    otherwise the signed coordinate axes plus seeded random directions.
    """
    thetas = None
    if sys.theta_direction is not None:
        thetas = 2 * np.pi * np.arange(samples) / samples
        dirs = [sys.theta_direction(x, th) for th in thetas]
    else:
        dirs = list(_sphere_design(sys.dim_xi, samples, seed))
    reports, xis = [], []
    for d in dirs:
        xi = cosphere_solve(sys, x, d, E1)
        xis.append(xi)
        reports.append(rank_at(sys, x, xi, tol, projected=projected))
    ranks = np.array([r.rank for r in reports])
    hi = int(ranks.max())
    degenerate = [(float(thetas[i]) if thetas is not None else i, xis[i])
                  for i in np.flatnonzero(ranks < hi)]
    return RankScan(int(ranks.min()), hi, degenerate, np.array(xis), reports, thetas)


def _project(values):
    return values[-1]


def morse_check(sys, combiner=None, x=None, grid=360, tol=1e-6, E1=1.0):
    """Critical points of ``q(theta) = combiner(p(x, xi(theta)))`` on ``C_x``.

    ``combiner`` defaults to the last symbol.  Sign changes of ``dq/dtheta``
    on the grid are refined by bisection and classified by ``d2q/dtheta2``.
    """
    if sys.theta_direction is None:
        raise MomentMapError("the Morse check needs a two-dimensional (angle-parametrized) cosphere")
    if grid < 8:
        raise ResolutionError("grid must have at least 8 points", required=8)
    combiner = combiner or _project

    def xi_of(th):
        return cosphere_solve(sys, x, sys.theta_direction(x, th), E1)

    def q(th):
        return float(combiner(sys.values(x, xi_of(th))))

    delta = 1e-6

    def dq(th):
        return (q(th + delta) - q(th - delta)) / (2 * delta)

    thetas = 2 * np.pi * np.arange(grid) / grid
    qs = np.array([q(th) for th in thetas])
    if np.ptp(qs) <= 1e-12 * max(1.0, float(np.max(np.abs(qs)))):
        return MorseReport([], False, tol, constant=True)
    d = np.array([dq(th) for th in thetas])
    s = np.sign(d)
    hits = []
    for i in range(grid):
        j = (i + 1) % grid
        if s[i] == 0:
            hits.append((i, float(thetas[i])))
        elif s[i] * s[j] < 0:
            hits.append((i, None))
    cells = sorted(i for i, _ in hits)
    for a, b in zip(cells, cells[1:] + [cells[0] + grid] if cells else []):
        if len(cells) > 1 and b - a <= 1:
            raise ResolutionError(
                f"critical points in adjacent grid cells near theta={thetas[a % grid]:.6g}; "
                "increase the grid", required=2 * grid)
    eta = 1e-4
    crit = []
    for i, th in hits:
        if th is None:
            lo = float(thetas[i])
            th = brentq(dq, lo, lo + 2 * np.pi / grid, xtol=1e-13)
        qc = q(th)
        q2 = (q(th + eta) - 2 * qc + q(th - eta)) / eta**2
        xi = xi_of(th)
        # Lagrange factor from radial derivatives: d_c q(c xi) / d_c p1(c xi) at c = 1
        qr = (float(combiner(sys.values(x, (1 + delta) * xi)))
              - float(combiner(sys.values(x, (1 - delta) * xi)))) / (2 * delta)
        pr = float(np.dot(sys.grad_xi[0](x, xi), xi))
        crit.append(CriticalPoint(float(th) % (2 * np.pi), qc, q2, qr / pr))
    crit.sort(key=lambda c: c.theta)
    return MorseReport(crit, all(abs(c.second_derivative) > tol for c in crit), tol)
