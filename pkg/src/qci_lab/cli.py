"""``qci-lab`` command line.

Every subcommand reads a flat ``key = value`` config (``--config``) whose
keys can be overridden by flags of the same name (``scan.samples`` becomes
``--scan-samples``).  CSV goes to ``<output>/<subcommand>.csv`` or stdout;
fits go to ``<subcommand>.json``.  Exit status: 0 success, 2 assumption
warnings, 1 errors.

The flat torus is ``R^n / 2 pi Z^n`` so that momenta are integers.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import config as cfg
from . import dynamics, experiments, geometry, lattice, momentmap, quasimode, spectral
from .errors import ConfigError, PoleError, QCILabError

__all__ = ["main", "run", "reproduce_all", "build_parser"]

EXIT_OK, EXIT_ERROR, EXIT_WARN = 0, 1, 2


class Result:
    """Artifacts produced by one subcommand run."""

    def __init__(self, summary, header=(), rows=(), fits=None, warn=False):
        self.summary = summary
        self.header = tuple(header)
        self.rows = list(rows)
        self.fits = fits
        self.warn = warn


def _threads():
    raw = os.environ.get("QCI_LAB_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise ConfigError(f"QCI_LAB_THREADS must be an integer, got {raw!r}", key="QCI_LAB_THREADS") from None


def _sweep(fn, items):
    """Order-preserving map, parallel up to ``QCI_LAB_THREADS``."""
    items = list(items)
    n = _threads()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _profile(c):
    try:
        return geometry.build_profile(c.get("profile"))
    except (ValueError, OSError) as e:
        raise ConfigError(f"bad value for 'profile': {e}", key="profile") from None


# -- subcommands ------------------------------------------------------------------

def cmd_validate(c):
    p = _profile(c)
    rep = geometry.validate_profile(p, c.typed("samples", int))
    rows = rep.as_rows() + [(f"equator_{i}", f"t0={cfg.fmt(t0)} d2f={cfg.fmt(d2)}")
                            for i, (t0, d2) in enumerate(rep.equators)]
    verdict = "pass" if rep.passed else "fail"
    summary = f"validate {p.name}: {verdict}" + (f" ({len(rep.warnings)} warnings)" if rep.warnings else "")
    return Result(summary, ("assumption", "verdict"), rows,
                  warn=not rep.passed or bool(rep.warnings))


def cmd_returnmap(c):
    p = _profile(c)
    psis = c.typed("psi", cfg.parse_linspace)
    tol, s_max = c.typed("tol", float), c.typed("s_max", float)
    q_max, eps, ztol = c.typed("q_max", int), c.typed("eps", float), c.typed("zoll_tol", float)
    samples = _sweep(lambda psi: dynamics.first_return(p, psi, tol, s_max), psis)
    rows = []
    for s in samples:
        v = dynamics.rational_classify(s.Phi, q_max, eps)
        rows.append((s.psi, s.S, s.Phi, s.Phi / (2 * math.pi), v.rational, v.p_over_q[0], v.p_over_q[1], v.distance))
    phis = [s.Phi for s in samples]
    spread = max(phis) - min(phis)
    t0 = geometry.equator_locate(p)[0][0]

    def drift(s):
        return max(dynamics.invariant_drift(p, dynamics.initial_state(p, t0, 0.0, s.psi), s.S, tol))

    fits = {"spread": spread, "zoll": None, "recurrence_fraction": dynamics.recurrence_fraction(phis, q_max, eps),
            "max_invariant_drift": max(_sweep(drift, samples))}
    if len(samples) >= 8:
        verdict = dynamics.zoll_test(p, psis, ztol, s_max)
        fits["zoll"], fits["zoll_spread"] = verdict.is_zoll, verdict.spread
    return Result(f"returnmap {p.name}: zoll={fits['zoll']} spread={spread:.3g}",
                  ("psi", "S", "Phi", "phi_over_2pi", "rational_flag", "p", "q", "distance"), rows, fits)


def cmd_loops(c):
    p = _profile(c)
    t = c.typed("point.t", float)
    thetas = c.typed("theta", cfg.parse_linspace)
    delta, s_max, tol = c.typed("delta", float), c.typed("s_max", float), c.typed("tol", float)
    x = geometry.SurfacePoint(t, 0.0)

    def one(th):
        try:
            return dynamics.loop_length(p, x, geometry.cosphere_embed(p, t, th), delta, s_max, tol)
        except PoleError:
            return None

    res = _sweep(one, thetas)
    rows = [(th, math.nan, 0) if r is None else (th, r.length, r.n_near_returns) for th, r in zip(thetas, res)]
    finite = [r.length for r in res if r is not None and r.finite]
    poles = sum(r is None for r in res)
    best = min(finite) if finite else math.inf
    summary = f"loops {p.name} t={t:g}: shortest L_delta={best:.12g} ({len(finite)}/{len(res)} closed)"
    if poles:
        summary += f"; {poles} direction(s) hit a pole (L_delta=nan)"
    return Result(summary, ("theta", "L_delta", "n_near_returns"), rows, {"shortest": best}, warn=bool(poles))


DEFAULT_POINTS = {
    "sor": lambda n: [math.pi / 4, 0.0],
    "liouville_torus": lambda n: [0.0, 0.0],
    "ellipsoid": lambda n: [math.cos(0.4), 0.0, math.sin(0.4)],
    "flat_torus": lambda n: [0.0] * n,
}


def _system(c):
    name = c.get("system.name")
    raw = c.prefixed("system.params.")
    try:
        if name == "sor":
            params = {"profile": geometry.build_profile(raw.pop("profile", "sphere"))}
        elif name == "flat_torus":
            params = {"n": int(raw.pop("n", "3"))}
            if "indices" in raw:
                params["indices"] = cfg.parse_int_list(raw.pop("indices"))
        else:
            params = {k: float(raw.pop(k)) for k in list(raw)}
    except ValueError as e:
        raise ConfigError(f"bad system parameter: {e}", key="system.params") from None
    if raw:
        key = sorted(raw)[0]
        raise ConfigError(f"unknown parameter {key!r} for system {name}", key=f"system.params.{key}")
    sys_ = momentmap.build_system(name, params)
    xs = c.get("point.x")
    x = np.array(cfg.parse_float_list(xs) if xs else DEFAULT_POINTS[name](sys_.dim_x), dtype=float)
    if x.size != sys_.dim_x:
        raise ConfigError(f"point.x needs {sys_.dim_x} coordinates", key="point.x")
    return sys_, x


def cmd_rank(c):
    sys_, x = _system(c)
    scan = momentmap.rank_scan(sys_, x, c.typed("scan.samples", int), c.typed("scan.tol", float),
                               E1=c.typed("energy", float), seed=c.typed("seed", int),
                               projected=c.typed("scan.projected", cfg.parse_bool))
    k = sys_.n - 1
    rows = []
    for i, r in enumerate(scan.reports):
        label = float(scan.thetas[i]) if scan.thetas is not None else i
        sv = list(r.singular_values) + [0.0] * (k - len(r.singular_values))
        rows.append((label, *sv[:k], r.rank))
    return Result(f"rank {sys_.label}: min={scan.min_rank} max={scan.max_rank} degenerate={len(scan.degenerate)}",
                  ("theta" if scan.thetas is not None else "direction",) + tuple(f"sv_{j + 1}" for j in range(k)) + ("rank",),
                  rows, {"min_rank": scan.min_rank, "max_rank": scan.max_rank,
                         "degenerate": [d for d, _ in scan.degenerate]})


def _combiner(spec, n):
    if spec == "sum":
        return lambda v: float(np.sum(v))
    if spec.startswith("p") and spec[1:].isdigit() and 1 <= int(spec[1:]) <= n:
        j = int(spec[1:]) - 1
        return lambda v: v[j]
    raise ConfigError(f"combiner must be p1..p{n} or 'sum', got {spec!r}", key="combiner")


def cmd_morse(c):
    sys_, x = _system(c)
    comb = _combiner(c.get("combiner"), sys_.n)
    rep = momentmap.morse_check(sys_, comb, x, c.typed("grid", int), c.typed("morse.tol", float),
                                E1=c.typed("energy", float))
    fits = {"all_nondegenerate": rep.all_nondegenerate, "constant": rep.constant,
            "multipliers": [cp.multiplier for cp in rep.critical_points]}
    return Result(f"morse {sys_.label}: {len(rep.critical_points)} critical points, "
                  f"morse={rep.all_nondegenerate}",
                  ("theta_c", "q_value", "q_second_derivative", "nondegenerate_flag"), rep.rows(), fits)


def cmd_modes(c):
    p = _profile(c)
    ms = c.typed("m", cfg.parse_int_list)
    idx = tuple(c.typed("indices", cfg.parse_int_list))
    grid_n, rich = c.typed("grid_n", int), c.typed("richardson", cfg.parse_bool)
    per_m = _sweep(lambda m: spectral.solve_modes(p, m, grid_n, idx, rich), ms)
    rows = []
    for modes in per_m:
        for md in modes:
            sn = spectral.sup_norm_profile(md)
            rows.append((md.m, md.index, md.lambda_sq, sn.sup, sn.at_equator, sn.argmax_t, md.residual))
    return Result(f"modes {p.name}: {len(rows)} modes", ("m", "index", "lambda_sq", "sup_T", "T_at_equator",
                                                         "argmax_t", "l2_residual"), rows)


def cmd_quasimode(c):
    p = _profile(c)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", quasimode.AssumptionWarning)
        sup_fit, defect_fit, rows = quasimode.defect_and_sup_scaling(p, c.typed("lambdas", cfg.parse_float_list))
    warn = any(issubclass(w.category, quasimode.AssumptionWarning) for w in caught)
    return Result(f"quasimode {p.name}: defect exponent={defect_fit.exponent:.6f} sup exponent={sup_fit.exponent:.6f}",
                  ("lambda", "sup_normalized", "residual_analytic_sup", "residual_numeric_sup", "agreement"),
                  rows, {"sup": sup_fit.as_dict(), "defect": defect_fit.as_dict()}, warn=warn)


def cmd_scaling(c):
    p = _profile(c)
    family = c.get("family")
    if family == "highest-weight":
        fit, rows = spectral.highest_weight_scaling(p, c.typed("ms", cfg.parse_int_list))
        header = ("m", "lambda", "sup")
    elif family == "quasimode":
        fit, _, qrows = quasimode.defect_and_sup_scaling(p, c.typed("lambdas", cfg.parse_float_list))
        rows, header = [(r[0], r[1]) for r in qrows], ("lambda", "sup_normalized")
    else:
        raise ConfigError(f"family must be highest-weight or quasimode, got {family!r}", key="family")
    return Result(f"scaling {family} {p.name}: exponent={fit.exponent:.6f} r2={fit.r_squared:.6f}",
                  header, rows, fit.as_dict())


def _hs(c):
    a, b, n = c.typed("h_grid", cfg.parse_geomspace)
    seed = c.get("jitter_seed")
    return lattice.h_grid(a, b, n, jitter_seed=int(seed) if seed else None)


def _window(c):
    n = c.typed("n", int)
    fr = c.get("frame")
    frame = (lattice.TorusFrame.P(n) if fr == "P" else lattice.TorusFrame.Q(n) if fr == "Q"
             else lattice.TorusFrame(n, tuple(c.typed("frame", cfg.parse_int_list))))
    es = c.get("energy")
    if es:
        E = tuple(c.typed("energy", cfg.parse_float_list))
    else:
        xi = np.zeros(n)
        xi[1] = 1.0  # centre direction e_2
        E = (1.0,) + tuple(float(xi[i - 1]) for i in frame.momentum_indices)
    return lattice.WindowSpec(frame, E, c.typed("c1", float), c.typed("c2", float))


def _lattice_rows(series, k):
    n = series.spec.frame.n
    return [(h, cnt, cnt * h ** (n - k - 1)) for h, cnt in series.rows]


def cmd_lattice(c, action):
    if action == "frames":
        return _frames(c)
    spec = _window(c)
    hs = _hs(c)
    counter = {"fast": lattice.count_window, "brute": lattice.count_window_bruteforce}.get(c.get("counter"))
    if counter is None:
        raise ConfigError("counter must be fast or brute", key="counter")
    k = lattice.window_rank(spec)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        series = lattice.count_series(spec, hs, counter, pool)
    rows = _lattice_rows(series, k)
    header = ("h", "count", "count_times_h_pow")
    if action == "count":
        return Result(f"lattice count n={spec.frame.n} frame={spec.frame.momentum_indices} rank={k}: "
                      f"max count*h^{spec.frame.n - k - 1}={max(r[2] for r in rows):.6g}", header, rows)
    fit = lattice.exponent_fit(series, k)
    return Result(f"lattice fit rank={k}: exponent={fit.exponent:.4f} (bound {fit.bound_exponent:g})",
                  header, rows, fit.as_dict())


def _frames(c):
    hs = _hs(c)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        fc = lattice.frame_compare(c.typed("n", int), hs, c.typed("c1", float), c.typed("c2", float), pool)
    rows = [(h, cp, cq, r) for (h, cp), (_, cq), (_, r) in zip(fc.p_series.rows, fc.q_series.rows, fc.ratios)]
    return Result(f"frames n={fc.n}: P exponent={fc.p_fit.exponent:.4f} Q exponent={fc.q_fit.exponent:.4f} "
                  f"gap={fc.gap:.4f}", ("h", "count_P", "count_Q", "ratio"), rows,
                  {"P": fc.p_fit.as_dict(), "Q": fc.q_fit.as_dict(), "gap": fc.gap})


COMMANDS = {
    "validate": cmd_validate,
    "returnmap": cmd_returnmap,
    "loops": cmd_loops,
    "rank": cmd_rank,
    "morse": cmd_morse,
    "modes": cmd_modes,
    "quasimode": cmd_quasimode,
    "scaling": cmd_scaling,
    "frames": _frames,
}


# -- output -----------------------------------------------------------------------

def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([cfg.fmt(v) for v in r])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def json_text(obj):
    def clean(v):
        if isinstance(v, float) and not math.isfinite(v):
            return str(v)
        if isinstance(v, dict):
            return {k: clean(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [clean(x) for x in v]
        return v

    return json.dumps(clean(obj), indent=2, sort_keys=True, default=_json_default) + "\n"


def _write(out_dir, name, text):
    path = Path(out_dir) / name
    path.write_text(text, encoding="utf-8")
    return path


def run(config, action=None, stdout=None):
    """Execute one experiment; returns the exit status."""
    stdout = stdout or sys.stdout
    sub = config.subcommand
    if sub == "reproduce":
        return reproduce_all(config, stdout=stdout)
    result = cmd_lattice(config, action or "count") if sub == "lattice" else COMMANDS[sub](config)
    name = sub if sub != "lattice" else f"lattice_{action or 'count'}"
    out = config.get("output")
    csv_body = csv_text(result.header, result.rows)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        _write(out, f"{name}.csv", csv_body)
        if result.fits is not None:
            _write(out, f"{name}.json", json_text(result.fits))
    else:
        stdout.write(csv_body)
        if result.fits is not None:
            stdout.write(json_text(result.fits))
    print(result.summary, file=stdout)
    return EXIT_WARN if result.warn else EXIT_OK


def reproduce_all(config=None, stdout=None, only=None):
    """Run every reference experiment; write CSVs and ``manifest.json``.

    ``tol.<name>`` keys override the pass thresholds.  Returns 0 when all
    criteria pass, 1 otherwise.
    """
    stdout = stdout or sys.stdout
    config = config or cfg.ExperimentConfig("reproduce")
    seed = config.typed("seed", int)
    out = Path(config.get("output") or "qci_lab_artifacts")
    out.mkdir(parents=True, exist_ok=True)
    overrides = {}
    for k, v in config.prefixed("tol.").items():
        if k not in experiments.DEFAULT_TOLERANCES:
            raise ConfigError(f"unknown tolerance {k!r}", key=f"tol.{k}")
        try:
            overrides[k] = float(v)
        except ValueError:
            raise ConfigError(f"bad value for 'tol.{k}': {v!r}", key=f"tol.{k}") from None
    manifest = {"seed": seed, "config_hash": config.digest(), "criteria": {}, "outputs": {}}
    failures = []
    for name in only or experiments.EXPERIMENTS:
        t0 = time.perf_counter()
        outcome = experiments.run_experiment(name, overrides, seed)
        elapsed = time.perf_counter() - t0
        body = csv_text(outcome.header, outcome.rows)
        _write(out, f"{name}.csv", body)
        manifest["outputs"][f"{name}.csv"] = hashlib.sha256(body.encode()).hexdigest()
        manifest["criteria"][name] = {"passed": outcome.passed, "metrics": outcome.metrics}
        if not outcome.passed:
            failures.append(name)
        print(f"{'PASS' if outcome.passed else 'FAIL'} {name} ({elapsed:.1f}s)", file=stdout)
    _write(out, "manifest.json", json_text(manifest))
    if failures:
        print("failed: " + ", ".join(failures), file=stdout)
        return EXIT_ERROR
    print(f"all {len(manifest['criteria'])} criteria passed; manifest in {out}", file=stdout)
    return EXIT_OK


# -- argument parsing -------------------------------------------------------------

def _flag(key):
    return "--" + key.replace(".", "-").replace("_", "-")


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors: exit 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


SUMMARIES = {
    "validate": "check a surface-of-revolution profile (poles, equators, cap f <= 1)",
    "returnmap": "first-return longitude Phi(psi), rational classification and Zoll verdict",
    "loops": "shortest delta-loop length L_delta over cosphere directions at one point",
    "rank": "rank of the moment map over the cosphere at a point",
    "morse": "critical points of a symbol restricted to the cosphere circle",
    "modes": "separated joint eigenmodes T(t) e^{i m phi} and their sup norms",
    "quasimode": "highest-weight quasimode defect and sup-norm scaling",
    "scaling": "log-log sup-norm exponent of the highest-weight or quasimode family",
    "lattice": "flat-torus joint-spectrum window counts (torus is R^n / 2 pi Z^n, so momenta are integers)",
    "frames": "compare window counts for the P and Q momentum frames on the flat torus",
    "reproduce": "run every reference experiment and write a manifest",
}


def build_parser():
    parser = _Parser(prog="qci-lab", description=__doc__.split("\n\n", 1)[1].strip(),
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="subcommand", required=True)
    for name, schema in cfg.SCHEMAS.items():
        sp = subs.add_parser(name, help=SUMMARIES[name], description=SUMMARIES[name])
        if name == "lattice":
            sp.add_argument("action", choices=("count", "fit", "frames"), nargs="?", default="count")
        sp.add_argument("--config", help="flat key = value file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")
        for key, (default, help_) in {**cfg.COMMON, **schema}.items():
            sp.add_argument(_flag(key), dest=f"key:{key}", default=None, metavar=key.upper(),
                            help=f"{help_} [default: {default or 'none'}]".replace("%", "%%"))
    return parser


def config_from_args(ns):
    conf = cfg.load(ns.config, ns.subcommand) if ns.config else cfg.ExperimentConfig(ns.subcommand)
    for k, v in vars(ns).items():
        if k.startswith("key:") and v is not None:
            conf.set(k[4:], v)
    for item in ns.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}", key=item)
        k, v = item.split("=", 1)
        conf.set(k.strip(), v)
    return conf


def main(argv=None):
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        conf = config_from_args(ns)
        return run(conf, getattr(ns, "action", None))
    except ConfigError as e:
        print(f"error: {e} (key: {e.key})", file=sys.stderr)
        return EXIT_ERROR
    except QCILabError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as e:
        print(f"error: cli: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
