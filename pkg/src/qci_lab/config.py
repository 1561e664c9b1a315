"""Flat ``key = value`` experiment configuration.

Values are kept as the strings the user wrote and parsed on demand, so a
config round-trips through its text form exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .errors import ConfigError

__all__ = [
    "ExperimentConfig",
    "SCHEMAS",
    "parse_text",
    "load",
    "fmt",
    "parse_float_list",
    "parse_int_list",
    "parse_linspace",
    "parse_geomspace",
    "parse_bool",
]

COMMON = {
    "seed": ("0", "integer seed for every random choice"),
    "output": ("", "directory for CSV/JSON artifacts (stdout when empty)"),
}

PROFILE = {"profile": ("sphere", "sphere | perturbed-sphere(eps) | spheroid(eps) | custom:PATH")}

SYSTEM = {
    "system.name": ("liouville_torus", "sor | liouville_torus | ellipsoid | flat_torus"),
    "point.x": ("", "base point, comma separated (system default when empty)"),
    "scan.samples": ("360", "cosphere samples"),
    "scan.tol": ("1e-8", "relative singular value threshold"),
    "scan.projected": ("true", "project gradients onto the cosphere tangent space"),
    "energy": ("1", "cosphere level E1"),
}

SCHEMAS = {
    "validate": {**PROFILE, "samples": ("2001", "sample count for the checks")},
    "returnmap": {
        **PROFILE,
        "psi": ("0.2:1.4:16", "launch angles start:stop:points (or a comma list)"),
        "tol": ("1e-10", "integrator tolerance"),
        "s_max": ("100", "arclength budget"),
        "q_max": ("50", "largest denominator for the recurrence test"),
        "eps": ("1e-6", "rationality tolerance on Phi / 2 pi"),
        "zoll_tol": ("1e-8", "Zoll spread tolerance (spread <= 10 zoll_tol)"),
    },
    "loops": {
        **PROFILE,
        "point.t": ("0.5", "base point t"),
        "theta": ("0.2:6.2:16", "cosphere angles start:stop:points (meridians through a pole give nan)"),
        "delta": ("1e-3", "closing tolerance"),
        "s_max": ("50", "arclength budget"),
        "tol": ("1e-10", "integrator tolerance"),
    },
    "rank": dict(SYSTEM),
    "morse": {
        **SYSTEM,
        "combiner": ("p2", "symbol pK projected on (1-based), or 'sum'"),
        "grid": ("360", "angle grid size"),
        "morse.tol": ("1e-6", "second-derivative threshold"),
    },
    "modes": {
        **PROFILE,
        "m": ("0:10", "angular momenta, a:b inclusive or comma list"),
        "indices": ("0", "radial indices, comma list"),
        "grid_n": ("4000", "grid cells"),
        "richardson": ("true", "Richardson extrapolation of eigenvalues"),
    },
    "quasimode": {**PROFILE, "lambdas": ("50,75,112,169,253,380", "frequencies")},
    "scaling": {
        **PROFILE,
        "family": ("highest-weight", "highest-weight | quasimode"),
        "ms": ("20,30,45,67,100,150,225", "angular momenta for highest-weight"),
        "lambdas": ("50,75,112,169,253,380", "frequencies for quasimode"),
    },
    "lattice": {
        "n": ("3", "torus dimension"),
        "frame": ("P", "P | Q | comma list of 1-based momentum indices"),
        "energy": ("", "joint energy, comma list (frame default when empty)"),
        "c1": ("1", "window half-width for |xi| in units of h"),
        "c2": ("1", "window half-width for the momenta in units of h"),
        "h_grid": ("0.05:0.002:14", "geometric h grid start:stop:points"),
        "jitter_seed": ("", "seed for +-5% jitter of the h grid (none when empty)"),
        "counter": ("fast", "fast | brute"),
    },
    "frames": {
        "n": ("3", "torus dimension"),
        "c1": ("1", "window half-width for |xi|"),
        "c2": ("1", "window half-width for the momenta"),
        "h_grid": ("0.05:0.002:14", "geometric h grid start:stop:points"),
        "jitter_seed": ("0", "seed for the h jitter (none when empty)"),
    },
    "reproduce": {},
}

OPEN_PREFIXES = {"rank": ("system.params.",), "morse": ("system.params.",), "reproduce": ("tol.",)}


@dataclass
class ExperimentConfig:
    subcommand: str
    values: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.subcommand not in SCHEMAS:
            raise ConfigError(f"unknown subcommand {self.subcommand!r}", key="subcommand")
        for k in self.values:
            self._check_key(k)

    def _check_key(self, key):
        if key in SCHEMAS[self.subcommand] or key in COMMON:
            return
        if any(key.startswith(p) and len(key) > len(p) for p in OPEN_PREFIXES.get(self.subcommand, ())):
            return
        raise ConfigError(f"unknown config key {key!r} for {self.subcommand}", key=key)

    def set(self, key, value):
        self._check_key(key)
        self.values[key] = str(value).strip()

    def get(self, key):
        if key in self.values:
            return self.values[key]
        schema = {**COMMON, **SCHEMAS[self.subcommand]}
        if key not in schema:
            raise ConfigError(f"no value for {key!r}", key=key)
        return schema[key][0]

    def typed(self, key, conv):
        raw = self.get(key)
        try:
            return conv(raw)
        except (ValueError, TypeError, ZeroDivisionError) as e:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({e})", key=key) from None

    def prefixed(self, prefix):
        return {k[len(prefix):]: v for k, v in sorted(self.values.items()) if k.startswith(prefix)}

    def resolved(self):
        """Every schema key with its effective value."""
        out = {k: v[0] for k, v in {**COMMON, **SCHEMAS[self.subcommand]}.items()}
        out.update(self.values)
        return dict(sorted(out.items()))

    def to_text(self):
        lines = [f"subcommand = {self.subcommand}"]
        lines += [f"{k} = {v}" for k, v in sorted(self.values.items())]
        return "\n".join(lines) + "\n"

    def digest(self):
        """sha256 of the effective values; ``output`` only says where artifacts
        go, so it is left out and reruns into other directories hash alike."""
        text = "\n".join(f"{k}={v}" for k, v in self.resolved().items() if k != "output")
        return hashlib.sha256(f"{self.subcommand}\n{text}".encode()).hexdigest()


def parse_text(text, subcommand=None):
    """Parse ``key = value`` lines (``#`` comments allowed)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'", key=line)
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = value
    sub = values.pop("subcommand", None) or subcommand
    if subcommand is not None and sub != subcommand:
        raise ConfigError(f"config is for {sub!r}, not {subcommand!r}", key="subcommand")
    if sub is None:
        raise ConfigError("config does not name a subcommand", key="subcommand")
    return ExperimentConfig(sub, values)


def load(path, subcommand=None):
    with open(path, encoding="utf-8") as fh:
        return parse_text(fh.read(), subcommand)


# -- value parsers ----------------------------------------------------------------

def fmt(v):
    """CSV formatting: 17 significant digits, lowercase booleans, 'inf'."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)) and not isinstance(v, bool):
        return str(v)
    if hasattr(v, "item"):
        return fmt(v.item())
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def parse_bool(s):
    s = s.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def parse_float_list(s):
    out = [float(x) for x in s.split(",") if x.strip()]
    if not out:
        raise ValueError("empty list")
    return out


def parse_int_list(s):
    if ":" in s:
        a, b = (int(x) for x in s.split(":"))
        if b < a:
            raise ValueError("range end before start")
        return list(range(a, b + 1))
    return [int(x) for x in s.split(",") if x.strip()]


def _triple(s):
    parts = s.split(":")
    if len(parts) != 3:
        raise ValueError("expected start:stop:points")
    return float(parts[0]), float(parts[1]), int(parts[2])


def parse_linspace(s):
    """``start:stop:points`` (inclusive) or a comma list."""
    if ":" not in s:
        return parse_float_list(s)
    a, b, n = _triple(s)
    if n < 1:
        raise ValueError("points must be >= 1")
    if n == 1:
        return [a]
    return [a + (b - a) * i / (n - 1) for i in range(n)]


def parse_geomspace(s):
    a, b, n = _triple(s)
    return a, b, n
