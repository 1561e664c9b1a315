"""Geodesic flow on a surface of revolution.

Unit-speed geodesics ``(t(s), phi(s))`` of ``ds^2 = dt^2 + f(t)^2 dphi^2``
solve

    t''   = f(t) f'(t) phi'^2,
    phi'' = -2 f'(t) t' phi' / f(t),

the second being ``(f^2 phi')' = 0`` (Clairaut: ``gamma = f^2 phi' = f sin psi``
is conserved).  The longitude is integrated relative to its initial value,
so the flow is exactly equivariant under rotations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DynamicsError, NonReturnError, PoleError
from .geometry import equator_locate
from .rk import DormandPrince

__all__ = [
    "GeodesicState",
    "Trajectory",
    "ReturnSample",
    "RecurrenceVerdict",
    "ZollVerdict",
    "LoopResult",
    "initial_state",
    "clairaut",
    "speed_defect",
    "integrate_geodesic",
    "invariant_drift",
    "integrate_batch",
    "first_return",
    "equator_crossings",
    "zoll_test",
    "rational_classify",
    "continued_fraction",
    "recurrence_fraction",
    "loop_length",
    "reverse",
]

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class GeodesicState:
    t: float
    phi: float
    dt_ds: float
    dphi_ds: float

    def as_array(self):
        return np.array([self.t, self.phi, self.dt_ds, self.dphi_ds])

    @classmethod
    def from_array(cls, y):
        return cls(*(float(v) for v in y))


@dataclass
class Trajectory:
    """Accepted integration steps with cubic Hermite dense output.

    ``states`` has shape ``(N, 4)`` (columns t, phi, dt/ds, dphi/ds) and
    ``derivs`` holds the right-hand side at each node.
    """

    s: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    truncated: bool = False
    pole_approach: bool = False

    @property
    def final(self):
        return GeodesicState.from_array(self.states[-1])

    def at(self, s):
        s = float(s)
        if not self.s[0] <= s <= self.s[-1]:
            raise DynamicsError(f"s={s} outside the integrated range [0, {self.s[-1]}]")
        i = int(np.clip(np.searchsorted(self.s, s) - 1, 0, len(self.s) - 2))
        h = self.s[i + 1] - self.s[i]
        x = (s - self.s[i]) / h
        h00 = 2 * x**3 - 3 * x**2 + 1
        h10 = x**3 - 2 * x**2 + x
        h01 = -2 * x**3 + 3 * x**2
        h11 = x**3 - x**2
        y = (h00 * self.states[i] + h10 * h * self.derivs[i]
             + h01 * self.states[i + 1] + h11 * h * self.derivs[i + 1])
        return GeodesicState.from_array(y)


@dataclass(frozen=True)
class ReturnSample:
    psi: float
    S: float
    Phi: float


@dataclass(frozen=True)
class RecurrenceVerdict:
    rational: bool
    p_over_q: tuple
    distance: float


@dataclass
class ZollVerdict:
    is_zoll: bool
    spread: float
    samples: list = field(default_factory=list)

    def __bool__(self):
        return self.is_zoll


@dataclass(frozen=True)
class LoopResult:
    length: float
    n_near_returns: int
    theta: float

    @property
    def finite(self):
        return math.isfinite(self.length)


def _f_positive(p, t):
    ft = float(p.f(t))
    if not (ft > 0 and p.contains(t)):
        raise PoleError(f"cannot launch at t={t!r}: f(t) = {ft!r} (pole or outside domain)")
    return ft


def initial_state(p, t0, phi0, psi):
    """Unit-speed launch at angle ``psi`` from the meridian."""
    ft = _f_positive(p, t0)
    return GeodesicState(float(t0), float(phi0), math.cos(psi), math.sin(psi) / ft)


def clairaut(p, state):
    """Clairaut integral ``gamma = f(t)^2 dphi/ds``."""
    return float(p.f(state.t)) ** 2 * state.dphi_ds


def speed_defect(p, state):
    return state.dt_ds**2 + float(p.f(state.t)) ** 2 * state.dphi_ds**2 - 1.0


def reverse(state):
    """Same point, opposite velocity."""
    return GeodesicState(state.t, state.phi, -state.dt_ds, -state.dphi_ds)


def _rhs(p):
    f, df = p.f, p.df

    def rhs(y):
        t, _, tp, pp = y
        ft, dft = f(t), df(t)
        return np.array([tp, pp, ft * dft * pp * pp, -2.0 * dft * tp * pp / ft])

    return rhs


def _valid(p):
    def valid(y):
        t = y[0]
        return bool(np.all((t > p.t_minus) & (t < p.t_plus) & (p.f(t) > 0)))

    return valid


def _stepper(p, tol, **kw):
    if not 1e-13 <= tol <= 1e-6:
        raise DynamicsError(f"integrator tolerance {tol!r} outside [1e-13, 1e-6]")
    return DormandPrince(_rhs(p), tol, valid=_valid(p), **kw)


def integrate_geodesic(p, init, s_max, tol=1e-10):
    """Integrate from ``init`` over ``[0, s_max]``.

    Near a pole the step size underflows; the trajectory is then returned
    truncated with ``pole_approach`` set.
    """
    stepper = _stepper(p, tol)
    y0 = init.as_array()
    phi0 = y0[1]
    y0[1] = 0.0
    s_list, y_list, k_list = [], [], []
    for s, y, _, k in stepper.run(y0, float(s_max)):
        s_list.append(s)
        y_list.append(y)
        k_list.append(k)
    states = np.array(y_list)
    states[:, 1] += phi0
    return Trajectory(np.array(s_list), states, np.array(k_list),
                      truncated=stepper.underflow, pole_approach=stepper.underflow)


def integrate_batch(p, states, s_max, tol=1e-10):
    """Integrate many launches with a shared step sequence.

    ``states`` is ``(4, B)``; returns the maximum over the batch and over all
    accepted steps of the unit-speed and Clairaut drifts, and the final
    states.
    """
    stepper = _stepper(p, tol)
    y0 = np.array(states, dtype=float)
    phi0 = y0[1].copy()
    y0[1] = 0.0
    gamma0 = p.f(y0[0]) ** 2 * y0[3]
    speed_drift = clairaut_drift = 0.0
    y = y0
    for _, y, _, _ in stepper.run(y0, float(s_max)):
        fy = p.f(y[0])
        speed_drift = max(speed_drift, float(np.max(np.abs(y[2] ** 2 + fy**2 * y[3] ** 2 - 1))))
        clairaut_drift = max(clairaut_drift, float(np.max(np.abs(fy**2 * y[3] - gamma0))))
    if stepper.underflow:
        raise PoleError("a batch trajectory approached a pole")
    final = y.copy()
    final[1] += phi0
    return speed_drift, clairaut_drift, final


def invariant_drift(p, init, s_max, tol=1e-10):
    """Largest deviation of the unit-speed relation and of the Clairaut
    integral from their initial values along the stored trajectory nodes."""
    tr = integrate_geodesic(p, init, s_max, tol)
    gamma0 = clairaut(p, init)
    states = [GeodesicState.from_array(y) for y in tr.states]
    speed = max(abs(speed_defect(p, st)) for st in states)
    gamma = max(abs(clairaut(p, st) - gamma0) for st in states)
    return speed, gamma


def _equator(p, t0):
    if t0 is not None:
        return float(t0)
    eqs = equator_locate(p)
    if not eqs:
        raise DynamicsError(f"profile {p.name} has no equator to launch from")
    return eqs[0][0]


def _bisect_in_step(stepper, y, h, k, g, tol, max_iter=200):
    """Find ``sigma`` in ``(0, h]`` with ``|g(step(y, sigma))| <= tol`` given a
    sign change of ``g`` across the step.  Uses a fresh RK step per trial."""
    g0 = g(y)
    lo, hi = 0.0, h
    y_mid = y
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        y_mid = stepper.step(y, mid, k)[0]
        gm = g(y_mid)
        if abs(gm) <= tol or hi - lo <= 4e-16 * max(1.0, h):
            return mid, y_mid
        if (gm > 0) == (g0 > 0):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi), y_mid


def _crossed(g_prev, g_now):
    return (g_prev > 0 and g_now <= 0) or (g_prev < 0 and g_now >= 0)


def equator_crossings(p, psi, count=1, tol=1e-10, s_max=100.0, t0=None):
    """Successive crossings of the equator ``t = t0`` (either direction) by the
    geodesic launched from ``(t0, 0)`` at angle ``psi``.

    Returns a list of ``(S, phi)`` with the unreduced longitude ``phi``; raises
    :class:`NonReturnError` when fewer than ``count`` crossings occur before
    ``s_max``.
    """
    t0 = _equator(p, t0)
    init = initial_state(p, t0, 0.0, psi)
    stepper = _stepper(p, min(max(tol, 1e-13), 1e-6))

    def g(y):
        return y[0] - t0

    out = []
    prev = None
    for s, y, h, k in stepper.run(init.as_array(), float(s_max)):
        if prev is not None and _crossed(g(prev[1]), g(y)):
            s_prev, y_prev, k_prev = prev
            sigma, y_hit = _bisect_in_step(stepper, y_prev, s - s_prev, k_prev, g, tol)
            out.append((float(s_prev + sigma), float(y_hit[1])))
            if len(out) == count:
                return out
        prev = (s, y, k)
    reason = "step size underflow near a pole" if stepper.underflow else f"no crossing before s_max={s_max}"
    raise NonReturnError(f"geodesic at psi={psi!r} returned to the equator {len(out)} of {count} times: "
                         f"{reason} (possibly asymptotic)")


def first_return(p, psi, tol=1e-10, s_max=100.0, t0=None):
    """First return to the equator of the geodesic launched from it at angle
    ``psi`` in ``(0, pi/2)``: arclength ``S`` and longitude increment ``Phi``
    reduced to ``(0, 2 pi)``."""
    if not 0 < psi < math.pi / 2:
        raise DynamicsError(f"psi={psi!r} must lie strictly in (0, pi/2)")
    (S, phi), = equator_crossings(p, psi, 1, tol, s_max, t0)
    return ReturnSample(psi=float(psi), S=S, Phi=phi % TWO_PI)


def zoll_test(p, psi_grid, tol=1e-8, s_max=100.0):
    """All sampled first-return longitudes agree to ``10 tol``.

    Integration runs at ``min(tol / 100, 1e-8)`` (floored at 1e-13).
    """
    psi_grid = list(psi_grid)
    if len(psi_grid) < 8:
        raise DynamicsError("Zoll test needs at least 8 transversal angles")
    int_tol = max(1e-13, min(tol * 1e-2, 1e-8))
    samples = [first_return(p, psi, int_tol, s_max) for psi in psi_grid]
    phis = [r.Phi for r in samples]
    spread = max(phis) - min(phis)
    return ZollVerdict(is_zoll=spread <= 10 * tol, spread=spread, samples=samples)


def continued_fraction(x, max_terms=64):
    """Partial quotients of the exact binary value of ``x``."""
    fr = Fraction(x)
    terms = []
    while len(terms) < max_terms:
        a = math.floor(fr)
        terms.append(a)
        fr -= a
        if fr == 0:
            break
        fr = 1 / fr
    return terms


def rational_classify(Phi, q_max, eps):
    """Best continued-fraction convergent ``p/q`` (``q <= q_max``) to
    ``Phi / 2 pi`` and whether it lies within ``eps``."""
    if not math.isfinite(Phi):
        raise DynamicsError("Phi must be finite")
    if q_max < 1:
        raise DynamicsError("q_max must be >= 1")
    x = Phi / TWO_PI
    best = (math.floor(x), 1)
    hm2, hm1, km2, km1 = 0, 1, 1, 0
    for a in continued_fraction(x):
        h = a * hm1 + hm2
        k = a * km1 + km2
        if k > q_max:
            break
        best = (h, k)
        hm2, hm1, km2, km1 = hm1, h, km1, k
    dist = abs(float(Fraction(x) - Fraction(*best)))
    return RecurrenceVerdict(rational=dist <= eps, p_over_q=best, distance=dist)


def recurrence_fraction(phis, q_max, eps):
    """Share of sampled return longitudes classified rational."""
    phis = list(phis)
    if not phis:
        return 0.0
    return sum(rational_classify(x, q_max, eps).rational for x in phis) / len(phis)


def _wrap(a):
    return (a + math.pi) % TWO_PI - math.pi


def loop_length(p, x, xi, delta, s_max=50.0, tol=1e-10):
    """Length of the shortest geodesic loop from ``x`` whose terminal
    direction is within ``delta`` of ``xi``.

    Each visit to the ``delta``-ball around ``x`` (chart distance
    ``sqrt(dt^2 + f^2 dphi^2)``) is resolved to its closest approach; the
    direction gap is measured there as the cosphere angle difference.
    Returns ``LoopResult(math.inf, ...)`` if no loop closes before ``s_max``;
    raises ``PoleError`` if the geodesic runs into a pole first.
    """
    if delta <= 0:
        raise DynamicsError("delta must be positive")
    ft = _f_positive(p, x.t)
    theta0 = math.atan2(xi.xi_phi / ft, xi.xi_t)
    norm = math.hypot(xi.xi_t, xi.xi_phi / ft)
    if abs(norm - 1) > 1e-8:
        raise DynamicsError(f"covector is not unit (|xi| = {norm!r})")
    init = GeodesicState(x.t, 0.0, xi.xi_t, xi.xi_phi / ft**2)
    # capped steps: along a closed geodesic the error estimate vanishes and
    # one long step could jump over the return
    stepper = _stepper(p, tol, max_step=0.05)

    def dist2(y):
        dphi = _wrap(y[1])
        return (y[0] - x.t) ** 2 + float(p.f(y[0])) ** 2 * dphi**2

    def ddist2(y):
        t, phi, tp, pp = y
        dphi = _wrap(phi)
        ft_, dft = float(p.f(t)), float(p.df(t))
        return 2 * (t - x.t) * tp + 2 * ft_ * dft * tp * dphi**2 + 2 * ft_**2 * dphi * pp

    left = False
    visits = 0
    prev = None
    for s, y, h, k in stepper.run(init.as_array(), float(s_max)):
        d = math.sqrt(dist2(y))
        if not left:
            left = d > delta
            prev = (s, y, k)
            continue
        s_prev, y_prev, k_prev = prev
        if (ddist2(y_prev) < 0 <= ddist2(y)
                and min(math.sqrt(dist2(y_prev)), d) <= delta + 2 * (s - s_prev)):
            sigma, y_min = _bisect_in_step(stepper, y_prev, s - s_prev, k_prev, ddist2, 0.0, 100)
            if math.sqrt(dist2(y_min)) <= delta:
                visits += 1
                ft_min = float(p.f(y_min[0]))
                theta = math.atan2(ft_min * y_min[3], y_min[2])
                if abs(_wrap(theta - theta0)) <= delta:
                    return LoopResult(float(s_prev + sigma), visits, theta0)
        prev = (s, y, k)
    if stepper.underflow:
        raise PoleError(f"geodesic from t={x.t!r}, theta={theta0!r} reaches a pole before s_max={s_max}")
    return LoopResult(math.inf, visits, theta0)
