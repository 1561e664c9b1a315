"""Separated joint eigenfunctions T(t) e^{i m phi} on a surface of revolution.

The radial equation

    -(f T')' + (m^2 / f) T = lambda^2 f T

is discretized by cell-centred finite volumes on a grid that clusters
quadratically at the poles (``t = t_- + L (1 - cos(pi s)) / 2`` with ``s``
uniform).  Fluxes ``f T'`` vanish at the poles, which is the reflection
condition for ``m = 0``; for ``m >= 1`` the ``m^2 / f`` term pins the first
cells, acting as a Dirichlet condition half a cell away from the pole.
Scaling the unknowns by the square root of the cell weight (the discrete
form of ``V = sqrt(f) T``) gives a symmetric tridiagonal matrix, solved by
Sturm-sequence bisection plus inverse iteration (LAPACK ``stebz``/``stein``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh_tridiagonal

from .errors import DomainError, GridRefinementError, NumericError, SpectralError
from .geometry import equator_locate

__all__ = [
    "ModeProblem",
    "DiscreteOperator",
    "Mode",
    "SupNorm",
    "ScalingFit",
    "HIGHEST_WEIGHT_MS",
    "assemble",
    "eigenvalues",
    "solve_modes",
    "solve_highest_weight",
    "sup_norm_profile",
    "fit_scaling",
    "highest_weight_scaling",
    "l2_norm",
    "trapezoid_norm",
    "inner_product",
    "sign_changes",
    "sphere_highest_weight_sup",
]

MIN_GRID = 200
HIGHEST_WEIGHT_MS = (20, 30, 45, 67, 100, 150, 225)


@dataclass(frozen=True)
class ModeProblem:
    profile: object
    m: int
    grid_n: int = 4000

    def __post_init__(self):
        if self.m < 0 or int(self.m) != self.m:
            raise SpectralError(f"angular number m must be a nonnegative integer, got {self.m!r}")
        if self.grid_n < MIN_GRID:
            raise SpectralError(f"grid_n must be >= {MIN_GRID}, got {self.grid_n}")

    def mapping(self, s):
        p = self.profile
        return p.t_minus + p.length * (1 - np.cos(np.pi * s)) / 2

    def jacobian(self, s):
        return self.profile.length * np.pi / 2 * np.sin(np.pi * s)

    @property
    def s_nodes(self):
        return (np.arange(self.grid_n) + 0.5) / self.grid_n

    @property
    def grid(self):
        return self.mapping(self.s_nodes)


@dataclass
class DiscreteOperator:
    """Symmetric tridiagonal ``B = W^{-1/2} A W^{-1/2}`` and its weights.

    ``weights`` are the quadrature weights ``f(t_i) dt_i`` so that
    ``T = y / sqrt(weights)`` maps eigenvectors ``y`` of ``B`` back to
    radial samples.
    """

    diag: np.ndarray
    offdiag: np.ndarray
    weights: np.ndarray
    grid: np.ndarray
    m: int

    def dense(self):
        return (np.diag(self.diag) + np.diag(self.offdiag, 1)
                + np.diag(self.offdiag, -1))


@dataclass
class Mode:
    m: int
    lam: float
    lambda_sq: float
    T: np.ndarray
    grid: np.ndarray
    weights: np.ndarray
    index: int
    l2_norm: float = 1.0
    residual: float = 0.0
    profile: object = field(default=None, repr=False)


@dataclass(frozen=True)
class SupNorm:
    sup: float
    at_equator: float
    argmax_t: float


@dataclass
class ScalingFit:
    exponent: float
    intercept: float
    r_squared: float
    samples: list

    def as_dict(self):
        return {"exponent": self.exponent, "intercept": self.intercept,
                "r2": self.r_squared, "n_samples": len(self.samples)}


def assemble(problem):
    """Discretize the radial operator of ``problem`` (see module docstring)."""
    pr = problem.profile
    n, m = problem.grid_n, problem.m
    ds = 1.0 / n
    s_c = problem.s_nodes
    s_f = np.arange(n + 1) / n
    t_c = problem.mapping(s_c)
    f_c = np.asarray(pr.f(t_c), dtype=float)
    jac_c = problem.jacobian(s_c)
    if np.any(f_c <= 0):
        raise GridRefinementError("f <= 0 at a grid node; profile must be positive inside the domain")

    # p = f / g' at faces; both vanish at the end faces, the flux is zero there
    jac_f = problem.jacobian(s_f[1:-1])
    flux = np.zeros(n + 1)
    flux[1:-1] = np.asarray(pr.f(problem.mapping(s_f[1:-1])), dtype=float) / jac_f

    with np.errstate(over="ignore"):
        centrifugal = np.float64(m) ** 2 * jac_c / f_c
        weight = f_c * jac_c
        diag = ((flux[1:] + flux[:-1]) / ds**2 + centrifugal) / weight
    if not np.all(np.isfinite(diag)):
        # m^2 / f^2 at the first node overflows: refine so the node moves off the pole
        suggested = int(2 * n * max(1.0, math.log10(m + 1)))
        raise GridRefinementError(
            f"m^2/f^2 overflows at the first node for m={m}, grid_n={n}; try grid_n={suggested}",
            suggested_n=suggested)
    iw = 1 / np.sqrt(weight)
    off = -flux[1:-1] / ds**2 * iw[1:] * iw[:-1]
    return DiscreteOperator(diag=diag, offdiag=off, weights=weight * ds, grid=t_c, m=m)


def _bisect(op, k, scale):
    # absolute bisection width relative to the eigenvalue scale, not the matrix norm
    tol = 1e-15 * scale
    return eigh_tridiagonal(op.diag, op.offdiag, eigvals_only=True, select="i",
                            select_range=(0, k - 1), lapack_driver="stebz", tol=tol)


def _scale(m, k):
    return float((m + k) * (m + k + 1) + 1)


def eigenvalues(problem, k=1, richardson=True):
    """Lowest ``k`` eigenvalues ``lambda^2`` for angular number ``m``.

    With ``richardson`` the values at ``grid_n`` and ``grid_n // 2`` are
    combined as ``(4 fine - coarse) / 3`` to cancel the O(h^2) error.
    """
    fine = _bisect(assemble(problem), k, _scale(problem.m, k))
    if not richardson:
        return fine
    half = ModeProblem(problem.profile, problem.m, max(MIN_GRID, problem.grid_n // 2))
    if half.grid_n * 2 != problem.grid_n:
        return fine
    coarse = _bisect(assemble(half), k, _scale(problem.m, k))
    return (4 * fine - coarse) / 3


def l2_norm(mode):
    """``2 pi int |T|^2 f dt`` with the cell-centred (midpoint in s) rule that
    defines the discrete inner product."""
    return 2 * math.pi * float(np.sum(mode.T**2 * mode.weights))


def trapezoid_norm(mode):
    """Same integral by the composite trapezoid rule on the t nodes, extended
    with the poles where the integrand vanishes; an O(h^2) cross-check."""
    p = mode.profile
    t = np.concatenate(([p.t_minus], mode.grid, [p.t_plus]))
    integrand = np.concatenate(([0.0], mode.T**2 * p.f(mode.grid), [0.0]))
    return 2 * math.pi * float(np.trapezoid(integrand, t))


def inner_product(a, b):
    """Discrete L^2(M) inner product of two modes on the same grid."""
    return 2 * math.pi * float(np.sum(a.T * b.T * a.weights))


def sign_changes(T, rel_floor=1e-8):
    """Interior sign changes of ``T``, ignoring samples below ``rel_floor * max|T|``
    (rounding noise in the exponentially small pole tails)."""
    T = np.asarray(T)
    keep = np.abs(T) > rel_floor * np.max(np.abs(T))
    sgn = np.sign(T[keep])
    return int(np.count_nonzero(sgn[1:] != sgn[:-1]))


def solve_modes(profile, m, grid_n=4000, indices=(0,), richardson=True):
    """Modes of angular number ``m`` with the given ordinal indices, each
    normalized so that ``2 pi sum T^2 f dt = 1``."""
    problem = ModeProblem(profile, m, grid_n)
    op = assemble(problem)
    k = max(indices) + 1
    lam_sq_fine, vecs = eigh_tridiagonal(
        op.diag, op.offdiag, select="i", select_range=(0, k - 1),
        lapack_driver="stebz", tol=1e-15 * _scale(m, k))
    lam_sq = eigenvalues(problem, k, richardson=richardson) if richardson else lam_sq_fine
    norm_B = float(np.max(np.abs(op.diag)) + 2 * np.max(np.abs(op.offdiag)))
    out = []
    for j in indices:
        y = vecs[:, j]
        B_y = op.diag * y
        B_y[:-1] += op.offdiag * y[1:]
        B_y[1:] += op.offdiag * y[:-1]
        # backward error; ||y|| = 1
        resid = float(np.linalg.norm(B_y - lam_sq_fine[j] * y)) / norm_B
        if not np.isfinite(resid) or resid > 1e-10:
            raise NumericError(f"eigenvector for m={m}, index {j} did not converge "
                               f"(residual {resid:.3g})", residual=resid)
        T = y / np.sqrt(op.weights)
        T = T / math.sqrt(2 * math.pi * float(np.sum(T**2 * op.weights)))
        if T[np.argmax(np.abs(T))] < 0:
            T = -T
        ls = float(lam_sq[j])
        out.append(Mode(m=m, lam=math.sqrt(max(ls, 0.0)), lambda_sq=ls, T=T,
                        grid=op.grid, weights=op.weights, index=j,
                        l2_norm=2 * math.pi * float(np.sum(T**2 * op.weights)),
                        residual=resid, profile=profile))
    return out


def solve_highest_weight(profile, m, grid_n=4000):
    """Lowest mode (no interior sign changes) for angular number ``m >= 1``.

    On the round sphere this is ``Y_m^m``, with ``T`` proportional to ``cos^m t``.
    """
    if m < 1:
        raise SpectralError("highest-weight modes need m >= 1")
    return solve_modes(profile, m, grid_n, indices=(0,))[0]


def _parabolic_peak(x, y, i):
    if i == 0 or i == len(y) - 1:
        return x[i], y[i]
    x0, x1, x2 = x[i - 1], x[i], x[i + 1]
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    # Lagrange parabola through three unevenly spaced points
    d0 = (x0 - x1) * (x0 - x2)
    d1 = (x1 - x0) * (x1 - x2)
    d2 = (x2 - x0) * (x2 - x1)
    a = y0 / d0 + y1 / d1 + y2 / d2
    b = -(y0 * (x1 + x2) / d0 + y1 * (x0 + x2) / d1 + y2 * (x0 + x1) / d2)
    c = y0 * x1 * x2 / d0 + y1 * x0 * x2 / d1 + y2 * x0 * x1 / d2
    if a >= 0:
        return x1, y1
    xs = min(max(-b / (2 * a), x0), x2)
    return xs, a * xs * xs + b * xs + c


def sup_norm_profile(mode):
    """Global sup of ``|T|``, ``|T|`` on the equator and the location of the sup."""
    absT = np.abs(mode.T)
    i = int(np.argmax(absT))
    t_star, sup = _parabolic_peak(mode.grid, absT, i)
    at_eq = float("nan")
    if mode.profile is not None:
        eqs = equator_locate(mode.profile)
        if eqs:
            t0 = eqs[0][0]
            j = int(np.clip(np.searchsorted(mode.grid, t0), 3, len(mode.grid) - 3))
            window = slice(j - 3, j + 3)
            at_eq = float(abs(CubicSpline(mode.grid[window], mode.T[window])(t0)))
    return SupNorm(sup=float(sup), at_equator=at_eq, argmax_t=float(t_star))


def fit_scaling(samples, min_samples=5, min_decades=1.0):
    """Least squares fit of ``log value = exponent log lam + intercept``."""
    samples = [(float(a), float(b)) for a, b in samples]
    if len(samples) < min_samples:
        raise DomainError(f"need at least {min_samples} samples, got {len(samples)}")
    x = np.array([a for a, _ in samples])
    y = np.array([b for _, b in samples])
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("log-log fit needs positive abscissae and values")
    lx, ly = np.log(x), np.log(y)
    span = (lx.max() - lx.min()) / math.log(10)
    if span < min_decades - 1e-12:
        raise DomainError(f"samples span {span:.2f} decades, need {min_decades}")
    A = np.vstack([lx, np.ones_like(lx)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - (slope * lx + icpt)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot <= 1e-20 * len(ly) else max(0.0, 1.0 - float(np.sum(resid**2)) / ss_tot)
    return ScalingFit(exponent=float(slope), intercept=float(icpt), r_squared=r2,
                      samples=samples)


def highest_weight_scaling(profile, ms=HIGHEST_WEIGHT_MS, grid_per_m=20, min_grid=2000):
    """Sup norms of the highest-weight family and their log-log fit in lambda.

    Returns ``(fit, rows)`` with rows ``(m, lambda, sup)``.
    """
    rows = []
    for m in ms:
        grid_n = max(min_grid, 2 * ((grid_per_m * m + 1) // 2))
        mode = solve_highest_weight(profile, m, grid_n)
        rows.append((m, mode.lam, sup_norm_profile(mode).sup))
    fit = fit_scaling([(lam, sup) for _, lam, sup in rows])
    return fit, rows


def sphere_highest_weight_sup(ell):
    """Closed-form sup of the normalized ``cos^ell t`` mode on the unit sphere:
    ``(2 pi sqrt(pi) Gamma(ell+1) / Gamma(ell+3/2))^{-1/2}``."""
    log_int = 0.5 * math.log(math.pi) + math.lgamma(ell + 1) - math.lgamma(ell + 1.5)
    return math.exp(-0.5 * (math.log(2 * math.pi) + log_int))
