"""The reference experiments, each returning a pass/fail verdict.

Every experiment is a pure function of its tolerances and a seed and
returns an :class:`Outcome` holding the verdict, headline metrics and a
table for CSV output.  ``reproduce_all`` in the CLI runs them in order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, geometry, lattice, momentmap, quasimode, spectral

__all__ = ["Outcome", "DEFAULT_TOLERANCES", "EXPERIMENTS", "run_experiment", "bundled_profiles"]

DEFAULT_TOLERANCES = {
    "sphere_spectral.rel": 1e-4,
    "highest_weight.target": 0.25,
    "highest_weight.width": 0.02,
    "quasimode_defect.target": -1.0,
    "quasimode_defect.width": 0.05,
    "quasimode_defect.agreement": 1e-3,
    "quasimode_exact.rel": 1e-10,
    "conservation.drift": 1e-9,
    "conservation.tol": 1e-12,
    "returnmap.sphere": 1e-8,
    "returnmap.spheroid_spread": 1e-3,
    "rank.tol": 1e-8,
    "lattice.gap": 0.4,
    "lattice.bound_slope": -0.3,
    "properties.rank_cases": 500,
}


@dataclass
class Outcome:
    name: str
    passed: bool
    metrics: dict
    header: tuple = ()
    rows: list = field(default_factory=list)


def bundled_profiles():
    return [geometry.sphere(), geometry.perturbed_sphere(0.05), geometry.spheroid(0.2)]


def sphere_spectral(tol, seed):
    p = geometry.sphere()
    rows, worst = [], 0.0
    for m in range(51):
        lam_sq = spectral.solve_modes(p, m, 4000)[0].lambda_sq
        exact = m * (m + 1)
        err = abs(lam_sq - exact) / exact if exact else abs(lam_sq)
        worst = max(worst, err)
        rows.append((m, lam_sq, exact, err))
    return Outcome("sphere_spectral", worst <= tol["sphere_spectral.rel"], {"max_rel_error": worst},
                   ("m", "lambda_sq", "exact", "error"), rows)


def highest_weight(tol, seed):
    fit, rows = spectral.highest_weight_scaling(geometry.sphere())
    ok = abs(fit.exponent - tol["highest_weight.target"]) <= tol["highest_weight.width"]
    return Outcome("highest_weight", ok, fit.as_dict(), ("m", "lambda", "sup"), rows)


def quasimode_defect(tol, seed):
    rows, metrics, ok = [], {}, True
    for p in (geometry.sphere(), geometry.perturbed_sphere(0.05)):
        sup_fit, defect_fit, qrows = quasimode.defect_and_sup_scaling(p)
        agreement = max(r[4] for r in qrows)
        ok &= abs(defect_fit.exponent - tol["quasimode_defect.target"]) <= tol["quasimode_defect.width"]
        ok &= agreement <= tol["quasimode_defect.agreement"]
        metrics[p.name] = {"defect_exponent": defect_fit.exponent, "sup_exponent": sup_fit.exponent,
                           "max_agreement": agreement}
        rows += [(p.name,) + tuple(r) for r in qrows]
    return Outcome("quasimode_defect", bool(ok), metrics,
                   ("profile", "lambda", "sup_normalized", "residual_analytic_sup",
                    "residual_numeric_sup", "agreement"), rows)


def quasimode_exact(tol, seed):
    p = geometry.sphere()
    worst, rows = 0.0, []
    for lam in (10.0, 50.0, 200.0):
        q = quasimode.build(p, lam)
        t = q.grid
        exact = -np.log1p(-2.0 * np.sin(t / 2) ** 2)
        mask = exact > 0
        err = float(np.max(np.abs(q.A[mask] - exact[mask]) / exact[mask]))
        worst = max(worst, err)
        rows.append((lam, t.size, err))
    return Outcome("quasimode_exact", worst <= tol["quasimode_exact.rel"], {"max_rel_error": worst},
                   ("lambda", "points", "max_rel_error_A"), rows)


def random_launches(p, count, rng):
    L = p.length
    t0 = p.t_minus + L * (0.1 + 0.8 * rng.random(count))
    psi = rng.uniform(0.1, math.pi - 0.1, count) * rng.choice([-1.0, 1.0], count)
    phi0 = rng.uniform(0, 2 * math.pi, count)
    return np.array([t0, phi0, np.cos(psi), np.sin(psi) / p.f(t0)])


def conservation(tol, seed):
    rng = np.random.default_rng(seed)
    rows, worst = [], 0.0
    for p in bundled_profiles():
        y0 = random_launches(p, 100, rng)
        speed, clair, _ = dynamics.integrate_batch(p, y0, 100.0, tol["conservation.tol"])
        worst = max(worst, speed, clair)
        rows.append((p.name, 100, speed, clair))
    return Outcome("conservation", worst <= tol["conservation.drift"], {"max_drift": worst},
                   ("profile", "launches", "speed_drift", "clairaut_drift"), rows)


def returnmap(tol, seed):
    psis = np.linspace(0.2, 1.4, 16)
    sph = dynamics.zoll_test(geometry.sphere(), psis, tol["returnmap.sphere"] / 10)
    dev = max(abs(s.Phi - math.pi) for s in sph.samples)
    sphd = dynamics.zoll_test(geometry.spheroid(0.2), psis, tol["returnmap.sphere"] / 10)
    ok = (dev <= tol["returnmap.sphere"] and sph.is_zoll
          and sphd.spread > tol["returnmap.spheroid_spread"] and not sphd.is_zoll)
    rows = [("sphere", s.psi, s.S, s.Phi) for s in sph.samples]
    rows += [("spheroid(0.2)", s.psi, s.S, s.Phi) for s in sphd.samples]
    return Outcome("returnmap", bool(ok),
                   {"sphere_max_dev": dev, "sphere_zoll": sph.is_zoll,
                    "spheroid_spread": sphd.spread, "spheroid_zoll": sphd.is_zoll},
                   ("profile", "psi", "S", "Phi"), rows)


def _theta_set(scan):
    return sorted(round(th / (math.pi / 2), 9) for th, _ in scan.degenerate)


def rank_degeneracies(tol, seed):
    rt = tol["rank.tol"]
    checks = {}
    sor = momentmap.build_system("sor", geometry.sphere())
    scan = momentmap.rank_scan(sor, np.array([math.pi / 4, 0.0]), 360, rt)
    checks["sor"] = scan.max_rank == 1 and _theta_set(scan) == [1.0, 3.0]
    lt = momentmap.build_system("liouville_torus", {"a": 2.0, "b": 1.0})
    scan = momentmap.rank_scan(lt, np.zeros(2), 360, rt)
    checks["liouville_torus"] = scan.max_rank == 1 and _theta_set(scan) == [0.0, 1.0, 2.0, 3.0]
    el = momentmap.build_system("ellipsoid", {"a1": 3.0, "a2": 2.0, "a3": 1.0})
    x = np.array([math.cos(0.4), 0.0, math.sin(0.4)])
    scan = momentmap.rank_scan(el, x, 360, rt)
    morse = momentmap.morse_check(el, None, x, 360)
    tangent = [c for c in morse.critical_points if min(c.theta % math.pi, math.pi - c.theta % math.pi) < 1e-9]
    checks["ellipsoid"] = (scan.max_rank == 1 and {0.0, 2.0} <= set(_theta_set(scan))
                           and len(tangent) == 2 and all(abs(c.multiplier - 0.5) <= 1e-6 for c in tangent))
    P = momentmap.build_system("flat_torus", {"n": 3, "indices": (2, 3)})
    Q = momentmap.build_system("flat_torus", {"n": 3, "indices": (1, 3)})
    xi = np.array([0.0, 1.0, 0.0])
    rp = momentmap.rank_at(P, np.zeros(3), xi, rt).rank
    rq = momentmap.rank_at(Q, np.zeros(3), xi, rt).rank
    checks["flat_torus"] = (rp, rq) == (1, 2)
    rows = [(k, v) for k, v in checks.items()]
    return Outcome("rank_degeneracies", all(checks.values()), dict(checks), ("system", "passed"), rows)


def random_window(rng, n=None, hmin=1e-2):
    n = n or int(rng.integers(2, 4))
    frame = lattice.TorusFrame(n, tuple(int(i) for i in rng.permutation(np.arange(1, n + 1))[: n - 1]))
    E0 = float(rng.uniform(0.3, 1.5))
    d = rng.standard_normal(n - 1)
    d *= rng.uniform(0, E0) / np.linalg.norm(d)
    spec = lattice.WindowSpec(frame, (E0, *map(float, d)), float(rng.uniform(0, 3)), float(rng.uniform(0, 3)))
    h = float(rng.uniform(hmin if n == 2 else max(hmin, 3e-2), 0.1))
    return spec, h


def lattice_frames(tol, seed):
    hs = lattice.h_grid(5e-2, 2e-3, 14, jitter_seed=seed)
    fc = lattice.frame_compare(3, hs)
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(50):
        spec, h = random_window(rng)
        mismatches += lattice.count_window(spec, h) != lattice.count_window_bruteforce(spec, h)
    ok = (fc.gap >= tol["lattice.gap"] and mismatches == 0
          and fc.p_fit.bound_fit.exponent >= tol["lattice.bound_slope"]
          and fc.q_fit.bound_fit.exponent >= tol["lattice.bound_slope"])
    rows = [(h, cp, cq) for (h, cp), (_, cq) in zip(fc.p_series.rows, fc.q_series.rows)]
    metrics = {"p_exponent": fc.p_fit.exponent, "q_exponent": fc.q_fit.exponent, "gap": fc.gap,
               "p_bound_slope": fc.p_fit.bound_fit.exponent, "q_bound_slope": fc.q_fit.bound_fit.exponent,
               "oracle_mismatches": mismatches}
    return Outcome("lattice_frames", bool(ok), metrics, ("h", "count_P", "count_Q"), rows)


# -- seeded property sweeps -------------------------------------------------------

def _random_system(rng):
    kind = int(rng.integers(0, 4))
    if kind == 0:
        p = geometry.spheroid(float(rng.uniform(0, 0.3)))
        sys = momentmap.build_system("sor", p)
        x = np.array([float(rng.uniform(0.3, math.pi - 0.3)), 0.0])
    elif kind == 1:
        b = float(rng.uniform(0.5, 1.5))
        sys = momentmap.build_system("liouville_torus", {"a": b + float(rng.uniform(0.1, 2)), "b": b})
        x = rng.random(2)
    elif kind == 2:
        a3 = float(rng.uniform(0.5, 1.0))
        a2 = a3 + float(rng.uniform(0.1, 1))
        sys = momentmap.build_system("ellipsoid", {"a1": a2 + float(rng.uniform(0.1, 1)), "a2": a2, "a3": a3})
        x = rng.standard_normal(3)
        x /= np.linalg.norm(x)
    else:
        n = int(rng.integers(2, 5))
        idx = tuple(int(i) for i in rng.permutation(np.arange(1, n + 1))[: n - 1])
        sys = momentmap.build_system("flat_torus", {"n": n, "indices": idx})
        x = np.zeros(n)
    return sys, x


def rank_invariance_cases(cases, seed):
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(cases):
        sys, x = _random_system(rng)
        xi = momentmap.cosphere_solve(sys, x, rng.standard_normal(sys.dim_xi))
        base = momentmap.rank_at(sys, x, xi).rank
        scales = rng.uniform(0.1, 10, sys.n - 1) * rng.choice([-1.0, 1.0], sys.n - 1)
        r_scaled = momentmap.rank_at(momentmap.rescaled(sys, scales), x, xi).rank
        r_perm = momentmap.rank_at(momentmap.reordered(sys, rng.permutation(sys.n - 1)), x, xi).rank
        aug = momentmap.augmented(sys, lambda v: v[1] ** 2 + v[0], lambda v: np.r_[1.0, 2 * v[1], np.zeros(len(v) - 2)])
        r_aug = momentmap.rank_at(aug, x, xi).rank
        failures += not (r_scaled == base == r_perm and r_aug == base)
    return failures


def property_suites(tol, seed):
    rng = np.random.default_rng(seed)
    results = {}
    results["momentmap_rank_invariance"] = rank_invariance_cases(int(tol["properties.rank_cases"]), seed) == 0

    ok = True
    for p in (geometry.sphere(), geometry.spheroid(0.2)):
        for m in (0, 3, 10):
            modes = spectral.solve_modes(p, m, 2000, indices=(0, 1, 2))
            for i, a in enumerate(modes):
                ok &= spectral.sign_changes(a.T) == i
                for b in modes[i + 1:]:
                    ok &= abs(spectral.inner_product(a, b)) <= 1e-8
    results["spectral_orthogonality_sturm"] = bool(ok)

    ok = True
    for p in bundled_profiles():
        y = random_launches(p, 3, rng)
        for j in range(3):
            init = dynamics.GeodesicState.from_array(y[:, j])
            fwd = dynamics.integrate_geodesic(p, init, 5.0, 1e-12).final
            back = dynamics.integrate_geodesic(p, dynamics.reverse(fwd), 5.0, 1e-12).final
            ok &= abs(back.t - init.t) <= 1e-8 and abs(dynamics._wrap(back.phi - init.phi)) <= 1e-8
            alpha = float(rng.uniform(0, 2 * math.pi))
            shifted = dynamics.GeodesicState(init.t, init.phi + alpha, init.dt_ds, init.dphi_ds)
            a = dynamics.integrate_geodesic(p, init, 5.0, 1e-10)
            b = dynamics.integrate_geodesic(p, shifted, 5.0, 1e-10)
            ok &= bool(np.array_equal(a.states[:, [0, 2, 3]], b.states[:, [0, 2, 3]]))
            ok &= bool(np.allclose(b.states[:, 1] - a.states[:, 1], alpha, rtol=0, atol=1e-12))
    results["dynamics_reversibility_equivariance"] = bool(ok)

    ok = True
    for _ in range(40):
        spec, h = random_window(rng, hmin=2e-2)
        base = lattice.count_window(spec, h)
        wider = lattice.WindowSpec(spec.frame, spec.E, spec.c1 + float(rng.uniform(0, 1)), spec.c2 + float(rng.uniform(0, 1)))
        ok &= lattice.count_window(wider, h) >= base
        sigma = tuple(int(i) for i in rng.permutation(np.arange(1, spec.frame.n + 1)))
        ok &= lattice.count_window(lattice.permute(spec, sigma), h) == base
    results["lattice_monotone_permutation"] = bool(ok)
    return Outcome("property_suites", all(results.values()), results, ("suite", "passed"),
                   list(results.items()))


EXPERIMENTS = {
    "sphere_spectral": sphere_spectral,
    "highest_weight": highest_weight,
    "quasimode_defect": quasimode_defect,
    "quasimode_exact": quasimode_exact,
    "conservation": conservation,
    "returnmap": returnmap,
    "rank_degeneracies": rank_degeneracies,
    "lattice_frames": lattice_frames,
    "property_suites": property_suites,
}


def run_experiment(name, tolerances=None, seed=0):
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    return EXPERIMENTS[name](tol, seed)
