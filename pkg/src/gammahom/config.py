"""Declarative TOML experiment configuration with itemized validation."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from gammahom.coefficients import PRESETS
from gammahom.lp_homogenization import INTEGRANDS
from gammahom.macro_fields import PROFILES_1D
from gammahom.riemann_lebesgue import WEIGHTS
from gammahom.two_scale import VARIANTS

TEST_FUNCTIONS = ("bump", "sine4", "x", "x2")


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every issue found."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass
class RLCase:
    weight: str = "sawtooth"
    test_function: str = "x"
    ns: list = field(default_factory=lambda: list(range(1, 65)))
    weight_params: dict = field(default_factory=dict)
    limit: float | None = None
    tolerance: float | None = None
    slope_range: list | None = None


@dataclass
class RLConfig:
    enabled: bool = True
    dim: int = 1
    cases: list = field(default_factory=lambda: [
        RLCase("sawtooth", "x", list(range(1, 65)), limit=1.0 / 12.0, tolerance=1e-10),
        RLCase("sine", "x2", [2**k for k in range(7)], limit=-1.0 / (2.0 * math.pi),
               slope_range=[0.9, 1.1]),
    ])


@dataclass
class LpCase:
    integrand: str = "quadratic"
    params: dict = field(default_factory=dict)
    tolerance: float | None = None


@dataclass
class LpConfig:
    enabled: bool = True
    mass: float = 1.0
    ns: list = field(default_factory=lambda: [1, 2, 4, 8, 16])
    cases: list = field(default_factory=lambda: [LpCase("quadratic", tolerance=1e-12),
                                                 LpCase("quartic", tolerance=1e-6)])


@dataclass
class ExperimentConfig:
    """Validated experiment parameters; see ``configs/*.toml`` for the layout."""

    dim: int = 1
    coefficient: str = "cos1d"
    coefficient_params: dict = field(default_factory=dict)
    profile: str = "sine4"
    M: int = 512
    m: int = 32
    n_list: list = field(default_factory=lambda: [4, 8, 16, 32, 64])
    solver_tol: float = 1e-10
    invariant_tol: float = 1e-10
    linear_term_factor: float = 2.0
    variant: str = "literal"
    richardson: bool = True
    fit_tail: int = 3
    fit_min_n: int = 4
    limit_rel_tol: float = 0.05
    residual_slope: list | None = None
    l2_slope: list = field(default_factory=lambda: [0.8, 1.2])
    h1_bound_factor: float = 2.0
    output: str = "out"
    cache: str | None = None
    rl: RLConfig = field(default_factory=RLConfig)
    lp: LpConfig = field(default_factory=LpConfig)

    @property
    def residual_slope_range(self):
        if self.residual_slope is not None:
            return list(self.residual_slope)
        return [1.8, 2.2] if self.dim == 1 else [1.7, 2.3]

    def as_dict(self):
        return asdict(self)

    def hash(self, keys=None):
        """SHA-256 of the canonical JSON form (``keys`` restricts the fields)."""
        d = self.as_dict()
        d.pop("output")
        d.pop("cache")
        if keys is not None:
            d = {k: d[k] for k in keys}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


# -- parsing --------------------------------------------------------------------------

_SECTIONS = {
    "experiment": {"dim": "dim", "output": "output", "cache": "cache"},
    "coefficient": {"preset": "coefficient", "params": "coefficient_params"},
    "profile": {"preset": "profile"},
    "resolution": {"M": "M", "m": "m", "n_list": "n_list"},
    "solver": {"tol": "solver_tol", "linear_term_factor": "linear_term_factor",
               "variant": "variant", "richardson": "richardson"},
    "checks": {"invariant_tol": "invariant_tol", "limit_rel_tol": "limit_rel_tol",
               "residual_slope": "residual_slope", "l2_slope": "l2_slope",
               "h1_bound_factor": "h1_bound_factor", "fit_tail": "fit_tail",
               "fit_min_n": "fit_min_n"},
}


def _int_list(value, name, problems):
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",") if p.strip()]
        try:
            value = [int(p) for p in parts]
        except ValueError:
            problems.append(f"{name}: cannot parse {value!r} as a comma-separated integer list")
            return None
    if not isinstance(value, list) or not all(isinstance(v, int) and not isinstance(v, bool)
                                              for v in value):
        problems.append(f"{name}: expected a list of integers")
        return None
    return value


def _check_ns(ns, name, problems, minimum=1):
    if ns is None:
        return
    if any(v < minimum for v in ns):
        problems.append(f"{name}: entries must be >= {minimum}")
    if any(b <= a for a, b in zip(ns, ns[1:])):
        problems.append(f"{name}: n-list must be strictly increasing")


def _unknown(table, allowed, where, problems):
    for k in table:
        if k not in allowed:
            problems.append(f"{where}: unknown key {k!r} (allowed: {', '.join(sorted(allowed))})")


def _parse_rl(table, problems):
    rl = RLConfig()
    _unknown(table, {"enabled", "dim", "case"}, "[rl]", problems)
    rl.enabled = bool(table.get("enabled", True))
    rl.dim = table.get("dim", 1)
    if "case" in table:
        rl.cases = []
        allowed = {f.name for f in fields(RLCase)}
        for i, raw in enumerate(table["case"]):
            where = f"[[rl.case]] #{i + 1}"
            _unknown(raw, allowed, where, problems)
            case = RLCase(**{k: v for k, v in raw.items() if k in allowed})
            if case.weight not in WEIGHTS:
                problems.append(f"{where}: unknown weight {case.weight!r}; valid presets: "
                                f"{', '.join(sorted(WEIGHTS))}")
            if case.test_function not in TEST_FUNCTIONS:
                problems.append(f"{where}: unknown test function {case.test_function!r}; "
                                f"valid presets: {', '.join(TEST_FUNCTIONS)}")
            case.ns = _int_list(case.ns, f"{where} ns", problems)
            _check_ns(case.ns, f"{where} ns", problems)
            rl.cases.append(case)
    return rl


def _parse_lp(table, problems):
    lp = LpConfig()
    _unknown(table, {"enabled", "mass", "ns", "case"}, "[lp]", problems)
    lp.enabled = bool(table.get("enabled", True))
    lp.mass = float(table.get("mass", lp.mass))
    if "ns" in table:
        lp.ns = _int_list(table["ns"], "[lp] ns", problems)
        _check_ns(lp.ns, "[lp] ns", problems)
    if "case" in table:
        lp.cases = []
        allowed = {f.name for f in fields(LpCase)}
        for i, raw in enumerate(table["case"]):
            where = f"[[lp.case]] #{i + 1}"
            _unknown(raw, allowed, where, problems)
            case = LpCase(**{k: v for k, v in raw.items() if k in allowed})
            if case.integrand not in INTEGRANDS:
                problems.append(f"{where}: unknown integrand {case.integrand!r}; valid presets: "
                                f"{', '.join(sorted(INTEGRANDS))}")
            lp.cases.append(case)
    return lp


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Validate a nested mapping (as read from TOML) into an :class:`ExperimentConfig`."""
    problems = []
    values = {}
    known = set(_SECTIONS) | {"rl", "lp"}
    for sec in raw:
        if sec not in known:
            problems.append(f"unknown section [{sec}] (allowed: {', '.join(sorted(known))})")
    for sec, keys in _SECTIONS.items():
        table = raw.get(sec, {})
        if not isinstance(table, dict):
            problems.append(f"[{sec}] must be a table")
            continue
        _unknown(table, keys, f"[{sec}]", problems)
        for k, target in keys.items():
            if k in table:
                values[target] = table[k]
    cfg = ExperimentConfig()
    for k, v in values.items():
        setattr(cfg, k, v)
    cfg.rl = _parse_rl(raw.get("rl", {}), problems)
    cfg.lp = _parse_lp(raw.get("lp", {}), problems)

    if cfg.dim not in (1, 2):
        problems.append(f"[experiment] dim: must be 1 or 2, got {cfg.dim!r}")
    if cfg.coefficient not in PRESETS:
        problems.append(f"[coefficient] preset: unknown preset {cfg.coefficient!r}; "
                        f"valid presets: {', '.join(sorted(PRESETS))}")
    if not isinstance(cfg.coefficient_params, dict):
        problems.append("[coefficient] params: must be a table")
    if cfg.profile not in PROFILES_1D:
        problems.append(f"[profile] preset: unknown preset {cfg.profile!r}; "
                        f"valid presets: {', '.join(sorted(PROFILES_1D))}")
    for name in ("M", "m", "fit_tail", "fit_min_n"):
        v = getattr(cfg, name)
        if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
            problems.append(f"{name}: must be a positive integer, got {v!r}")
    if isinstance(cfg.M, int) and (cfg.M < 4 or cfg.M % 2):
        problems.append(f"M: cell resolution must be even and >= 4, got {cfg.M}")
    if isinstance(cfg.m, int) and cfg.m < 8:
        problems.append(f"m: per-cell fine resolution must be >= 8, got {cfg.m}")
    cfg.n_list = _int_list(cfg.n_list, "n_list", problems)
    _check_ns(cfg.n_list, "n_list", problems)
    for name in ("solver_tol", "invariant_tol", "limit_rel_tol", "h1_bound_factor"):
        v = getattr(cfg, name)
        if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
            problems.append(f"{name}: tolerances must be > 0, got {v!r}")
    if cfg.variant not in VARIANTS:
        problems.append(f"variant: must be one of {', '.join(VARIANTS)}, got {cfg.variant!r}")
    if not isinstance(cfg.richardson, bool):
        problems.append("richardson: must be true or false")
    for name in ("residual_slope", "l2_slope"):
        v = getattr(cfg, name)
        if v is not None and (not isinstance(v, list) or len(v) != 2 or v[0] > v[1]):
            problems.append(f"{name}: must be a [low, high] pair")
    if cfg.rl.dim not in (1, 2):
        problems.append(f"[rl] dim: must be 1 or 2, got {cfg.rl.dim!r}")
    if problems:
        raise ConfigError(problems)
    cfg.linear_term_factor = float(cfg.linear_term_factor)
    cfg.solver_tol = float(cfg.solver_tol)
    return cfg


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file {path} does not exist"])
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return config_from_dict(raw)
