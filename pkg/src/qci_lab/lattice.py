"""Joint spectrum of the flat torus and window counts.

On ``T^n = R^n / 2 pi Z^n`` the joint eigenfunctions of ``sqrt(-h^2 Delta)``
and ``n - 1`` coordinate momenta ``-i h d_{x_i}`` are the exponentials
``e^{i k.x}``, ``k`` in ``Z^n``, with joint eigenvalue ``(h|k|, h k_i, ...)``.
Counting lattice points in an ``h``-window around a joint energy is the
torus version of the cluster sum bounded by ``O(h^{-n+k+1})`` under a rank-k
condition.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSeriesError, DomainError, SizeError, SpecError
from .spectral import ScalingFit, fit_scaling

__all__ = [
    "TorusFrame",
    "WindowSpec",
    "CountSeries",
    "CountFit",
    "FrameComparison",
    "count_window",
    "count_window_bruteforce",
    "count_series",
    "exponent_fit",
    "frame_compare",
    "h_grid",
    "window_rank",
    "permute",
]

BRUTE_LIMIT = 2000
MAX_ASSIGNMENTS = 10**7


@dataclass(frozen=True)
class TorusFrame:
    n: int
    momentum_indices: tuple

    def __post_init__(self):
        idx = tuple(int(i) for i in self.momentum_indices)
        object.__setattr__(self, "momentum_indices", idx)
        if self.n < 2:
            raise SpecError(f"torus dimension must be >= 2, got {self.n}")
        if len(idx) != self.n - 1 or len(set(idx)) != len(idx) or not all(1 <= i <= self.n for i in idx):
            raise SpecError(f"need {self.n - 1} distinct momentum indices in 1..{self.n}, got {idx}")

    @property
    def free_index(self):
        return (set(range(1, self.n + 1)) - set(self.momentum_indices)).pop()

    @classmethod
    def P(cls, n):
        """Momenta ``x_2, ..., x_n``."""
        return cls(n, tuple(range(2, n + 1)))

    @classmethod
    def Q(cls, n):
        """Momenta ``x_1, x_3, ..., x_n``."""
        return cls(n, (1,) + tuple(range(3, n + 1)))


@dataclass(frozen=True)
class WindowSpec:
    """Window ``|h|k| - E_0| <= c1 h`` and ``|h k_{i_j} - E_j| <= c2 h``."""

    frame: TorusFrame
    E: tuple
    c1: float = 1.0
    c2: float = 1.0

    def __post_init__(self):
        E = tuple(float(e) for e in self.E)
        object.__setattr__(self, "E", E)
        if len(E) != self.frame.n:
            raise SpecError(f"energy needs {self.frame.n} entries, got {len(E)}")
        if not all(math.isfinite(e) for e in E) or not (math.isfinite(self.c1) and math.isfinite(self.c2)):
            raise SpecError("energy and window widths must be finite")
        if not E[0] > 0:
            raise SpecError(f"E[0] must be positive, got {E[0]}")
        if self.c1 < 0 or self.c2 < 0:
            raise SpecError("window widths must be nonnegative")
        if math.hypot(*E[1:]) > E[0] + 1e-12:
            raise SpecError(f"energy {E} lies outside the moment-map image (|momenta| > E[0])")


@dataclass
class CountSeries:
    spec: WindowSpec
    rows: list

    def __post_init__(self):
        hs = [h for h, _ in self.rows]
        if any(b >= a for a, b in zip(hs, hs[1:])):
            raise SpecError("h must be strictly decreasing across the series")
        if any(int(c) != c or c < 0 for _, c in self.rows):
            raise SpecError("counts must be nonnegative integers")

    @property
    def hs(self):
        return np.array([h for h, _ in self.rows])

    @property
    def counts(self):
        return np.array([c for _, c in self.rows])


@dataclass
class CountFit:
    fit: ScalingFit
    bound_exponent: float
    bound_constant: float
    bound_fit: ScalingFit
    dropped_zeros: int

    @property
    def exponent(self):
        return self.fit.exponent

    def as_dict(self):
        d = self.fit.as_dict()
        d.update(bound_exponent=self.bound_exponent, bound_constant=self.bound_constant,
                 bound_slope=self.bound_fit.exponent, dropped_zeros=self.dropped_zeros)
        return d


@dataclass
class FrameComparison:
    n: int
    p_series: CountSeries
    q_series: CountSeries
    p_fit: CountFit
    q_fit: CountFit
    ratios: list = field(default_factory=list)

    @property
    def gap(self):
        return self.q_fit.exponent - self.p_fit.exponent


def _check_h(h):
    if not 0 < h <= 0.1:
        raise SpecError(f"h={h!r} outside (0, 0.1]")


def _in_window(K, spec, h):
    """Shared membership predicate on an integer array ``K`` of shape ``(N, n)``."""
    E0 = spec.E[0]
    norm = np.sqrt(np.sum(K.astype(np.float64) ** 2, axis=1))
    ok = np.abs(h * norm - E0) <= spec.c1 * h
    for j, i in enumerate(spec.frame.momentum_indices, start=1):
        ok &= np.abs(h * K[:, i - 1].astype(np.float64) - spec.E[j]) <= spec.c2 * h
    return ok


def _int_range(lo, hi):
    return np.arange(math.floor(lo) - 1, math.ceil(hi) + 2, dtype=np.int64)


def count_window(spec, h):
    """Window count by iterating the constrained coordinates and solving
    ``|k| ~ E_0 / h`` for the free one."""
    _check_h(h)
    fr = spec.frame
    ranges = [_int_range((spec.E[j] - spec.c2 * h) / h, (spec.E[j] + spec.c2 * h) / h)
              for j in range(1, fr.n)]
    n_assign = math.prod(len(r) for r in ranges)
    if n_assign > MAX_ASSIGNMENTS:
        raise SpecError(f"search region has {n_assign} assignments; window too wide")
    r_lo = max(spec.E[0] / h - spec.c1, 0.0)
    r_hi = spec.E[0] / h + spec.c1
    grids = np.meshgrid(*ranges, indexing="ij")
    C = np.stack([g.ravel() for g in grids], axis=1)
    S = np.sum(C.astype(np.float64) ** 2, axis=1)
    keep = S <= (r_hi + 1) ** 2
    C, S = C[keep], S[keep]
    total = 0
    free = fr.free_index - 1
    for c, s in zip(C, S):
        hi = math.sqrt(max((r_hi + 1) ** 2 - s, 0.0))
        lo = math.sqrt(max((r_lo - 1) ** 2 - s, 0.0)) if r_lo > 1 else 0.0
        a, b = math.floor(lo), math.ceil(hi) + 1
        cand = np.concatenate([np.arange(a, b), -np.arange(max(a, 1), b)]) if b > a else np.zeros(0)
        if cand.size == 0:
            continue
        K = np.empty((cand.size, fr.n), dtype=np.int64)
        K[:, free] = cand
        for col, i in enumerate(fr.momentum_indices):
            K[:, i - 1] = c[col]
        total += int(np.count_nonzero(_in_window(K, spec, h)))
    return total


def count_window_bruteforce(spec, h):
    """Enumerate the whole integer ball ``|k| <= (E_0 + c1 h) / h``."""
    _check_h(h)
    R = (spec.E[0] + spec.c1 * h) / h
    if R > BRUTE_LIMIT:
        raise SizeError(f"ball radius {R:.1f} exceeds the brute-force limit {BRUTE_LIMIT}")
    r = int(math.floor(R)) + 1
    n = spec.frame.n
    side = np.arange(-r, r + 1, dtype=np.int64)
    total = 0
    # enumerate one leading coordinate at a time to bound memory
    rest = np.stack(np.meshgrid(*([side] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
    for k0 in side:
        K = np.empty((rest.shape[0], n), dtype=np.int64)
        K[:, 0] = k0
        K[:, 1:] = rest
        total += int(np.count_nonzero(_in_window(K, spec, h)))
    return total


def h_grid(start, stop, points, jitter_seed=None, jitter=0.05):
    """Geometric grid from ``start`` down to ``stop``, optionally jittered by
    ``h (1 + delta)``, ``delta`` uniform in ``[-jitter, jitter]``."""
    if points < 2 or not (0 < stop < start):
        raise SpecError("h grid needs points >= 2 and 0 < stop < start")
    hs = np.geomspace(start, stop, int(points))
    if jitter_seed is not None:
        rng = np.random.default_rng(jitter_seed)
        hs = hs * (1 + rng.uniform(-jitter, jitter, hs.size))
    hs = np.minimum(hs, 0.1)
    return sorted(set(float(h) for h in hs), reverse=True)


def count_series(spec, hs, counter=count_window, pool=None):
    hs = sorted((float(h) for h in hs), reverse=True)
    counts = list(pool.map(lambda h: counter(spec, h), hs)) if pool else [counter(spec, h) for h in hs]
    return CountSeries(spec, list(zip(hs, counts)))


def window_rank(spec, tol=1e-8):
    """Rank of the flat-torus moment map at the window's centre direction."""
    from .momentmap import build_system, rank_at

    fr = spec.frame
    xi = np.zeros(fr.n)
    for j, i in enumerate(fr.momentum_indices, start=1):
        xi[i - 1] = spec.E[j] / spec.E[0]
    xi[fr.free_index - 1] = math.sqrt(max(1.0 - float(np.sum(xi**2)), 0.0))
    sys = build_system("flat_torus", {"n": fr.n, "indices": fr.momentum_indices})
    return rank_at(sys, np.zeros(fr.n), xi, tol).rank


def exponent_fit(series, k=None, min_points=6, min_decades=1.3):
    """Log-log fit of ``max(count, 1)`` against ``h``.

    Also fits ``count h^{n-k-1}``: a slope ``>= 0`` (up to noise) means the
    rank-k bound holds over the series.  ``k`` defaults to the rank at the
    window centre.
    """
    counts = series.counts
    if counts.size == 0 or not np.any(counts > 0):
        raise DegenerateSeriesError("all counts are zero; nothing to fit")
    n = series.spec.frame.n
    k = window_rank(series.spec) if k is None else k
    bexp = n - k - 1
    dropped = int(np.sum(counts == 0))
    samples = [(h, max(c, 1)) for h, c in series.rows]
    try:
        fit = fit_scaling(samples, min_samples=min_points, min_decades=min_decades)
        bound_fit = fit_scaling([(h, c * h**bexp) for h, c in samples],
                                min_samples=min_points, min_decades=min_decades)
    except DomainError as e:
        raise DegenerateSeriesError(str(e).split(": ", 1)[-1]) from None
    bound = max(c * h**bexp for h, c in series.rows)
    return CountFit(fit, float(-bexp), float(bound), bound_fit, dropped)


def frame_compare(n, hs, c1=1.0, c2=1.0, pool=None):
    """``P``-frame at ``E = (1, 1, 0, ..)`` against ``Q``-frame at ``F = (1, 0, ..)``.

    Both windows sit at the same covector ``xi = e_2``; only the choice of
    commuting momenta differs.
    """
    if n < 3:
        raise SpecError("frame comparison needs n >= 3")
    E = (1.0, 1.0) + (0.0,) * (n - 2)
    F = (1.0,) + (0.0,) * (n - 1)
    ps = count_series(WindowSpec(TorusFrame.P(n), E, c1, c2), hs, pool=pool)
    qs = count_series(WindowSpec(TorusFrame.Q(n), F, c1, c2), hs, pool=pool)
    ratios = [(h, cp / cq if cq else math.inf) for (h, cp), (_, cq) in zip(ps.rows, qs.rows)]
    return FrameComparison(n, ps, qs, exponent_fit(ps), exponent_fit(qs), ratios)


def permute(spec, sigma):
    """Relabel torus coordinates by ``sigma`` (a permutation of ``1..n``)."""
    fr = spec.frame
    idx = tuple(sigma[i - 1] for i in fr.momentum_indices)
    return WindowSpec(TorusFrame(fr.n, idx), spec.E, spec.c1, spec.c2)


def all_permutations(n):
    return [tuple(p) for p in itertools.permutations(range(1, n + 1))]
