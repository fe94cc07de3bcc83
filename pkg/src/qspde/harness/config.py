"""Flat, typed ``key = value`` experiment configuration.

One key per line, ``#`` starts a comment.  A ``scenario`` line selects a
preset whose values are applied first; every other line overrides them,
whatever its position in the file.  Unknown keys are rejected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

from .io import config_hash


class ConfigError(ValueError):
    pass


def _float(key, raw):
    try:
        x = float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if math.isnan(x):
        raise ConfigError(f"{key}: NaN is not allowed")
    return x


def _int(key, raw):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None


def _bool(key, raw):
    low = raw.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _opt_float(key, raw):
    return None if raw.strip().lower() in ("", "auto", "none") else _float(key, raw)


def _floats(key, raw):
    raw = raw.strip()
    if not raw:
        return []
    return [_float(key, p) for p in raw.split(",")]


def _names(key, raw):
    return [p.strip() for p in raw.split(",") if p.strip()]


def _band(key, raw):
    vals = _floats(key, raw)
    if not vals:
        return None
    if len(vals) != 2 or vals[0] > vals[1]:
        raise ConfigError(f"{key}: expected 'lo, hi' with lo <= hi, got {raw!r}")
    return vals


def _ladder(key, raw):
    levels = []
    for part in _names(key, raw):
        try:
            nx, dt = part.split(":")
            levels.append([int(nx), float(dt)])
        except ValueError:
            raise ConfigError(f"{key}: ladder entries look like 'nx:dt', got {part!r}") from None
    return levels


def _str(key, raw):
    return raw.strip()


CHECKS = ("growth", "har", "compat", "decomposition", "energy", "linfty", "maxprinciple", "apriori", "bands",
          "orders")

# key -> (parser, default, allowed values or None)
SCHEMA: dict[str, tuple] = {
    "scenario": (_str, "custom", None),
    "replicas": (_int, 1, None),
    "spde.A": (_str, "heat", None),
    "spde.B": (_str, "heat", None),
    "spde.F": (_str, "heat", None),
    "spde.nu": (_opt_float, None, None),
    "spde.mu": (_opt_float, None, None),
    "spde.u0": (_str, "sine", ("sine", "bump", "sine_sq", "parabola", "zero")),
    "spde.u0_amp": (_float, 1.0, None),
    "spde.nx": (_int, 127, None),
    "spde.dt": (_float, 1e-4, None),
    "spde.T": (_float, 0.1, None),
    "spde.burgers_clip": (_float, 5.0, None),
    "spde.drift_rate": (_float, 1.0, None),
    "spde.blowup_ceiling": (_float, 1e6, None),
    "noise.variant": (_str, "none", ("none", "finite_dim", "linear_q")),
    "noise.finite_dim": (_str, "additive_e1", ("additive_e1", "identity", "sine_linear", "quadratic")),
    "noise.sigma": (_float, 1.0, None),
    "noise.k_trunc": (_int, 0, None),
    "noise.q_decay": (_float, 0.5, None),
    "noise.q_power": (_float, 0.0, None),
    "noise.seed": (_int, 0, None),
    "split.eigenvalues": (_str, "continuum", ("continuum", "discrete")),
    "run.chunk": (_int, 50, None),
    "run.workers": (_int, 1, None),
    "output.dir": (_str, "out", None),
    "output.fields": (_int, 1, None),
    "output.series_replicas": (_int, 20, None),
    "report.mode_k": (_int, 1, None),
    "report.mode_times": (_floats, [], None),
    "checks": (_names, list(CHECKS), None),
    "check.compat_order": (_int, 2, None),
    "check.compat_tol_factor": (_float, 10.0, None),
    "check.c_max": (_float, 100.0, None),
    "check.r0": (_float, 2.0, None),
    "check.residual_factor": (_float, 5.0, None),
    "check.maxprinciple_tol": (_float, 1e-12, None),
    "check.har_a": (_float, 1.0, None),
    "check.growth_tol": (_float, 0.05, None),
    "check.apriori_p": (_float, 2.0, None),
    "check.apriori_ceiling": (_float, 1e6, None),
    "reg.fields": (_names, ["u", "y", "z"], None),
    "reg.a_list": (_floats, [0.25 * i for i in range(17)], None),
    "reg.k_top": (_int, 0, None),
    "reg.beta": (_float, 0.5, None),
    "reg.min_lags": (_int, 4, None),
    "reg.band.u_time": (_band, None, None),
    "reg.band.y_time": (_band, None, None),
    "reg.band.z_time": (_band, None, None),
    "reg.band.u_space": (_band, None, None),
    "reg.band.z_bessel": (_band, None, None),
    "reg.y_above_z": (_bool, False, None),
    "converge.ladder": (_ladder, [], None),
    "converge.reference": (_str, "auto", ("auto", "analytic", "finest")),
    "converge.min_time_order": (_float, 0.0, None),
    "converge.min_space_order": (_float, 0.0, None),
}

# Keys that do not change any computed number.
NON_SEMANTIC = ("output.dir", "run.workers")


def _raw(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, list):
        if v and isinstance(v[0], list):
            return ", ".join(f"{a}:{b!r}" for a, b in v)
        return ", ".join(str(x) for x in v)
    return str(v)


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["noise.seed"]

    @property
    def hash(self) -> str:
        return config_hash({k: v for k, v in self.values.items() if k not in NON_SEMANTIC})

    def to_text(self) -> str:
        return "".join(f"{k} = {_raw(self.values[k])}\n" for k in sorted(self.values))

    def override(self, **changes) -> "ExperimentConfig":
        """Keyword form uses ``__`` for dots: ``noise__seed=3``."""
        vals = dict(self.values)
        for k, v in changes.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            vals[key] = v
        return validate(vals)


def _coerce(key: str, raw: str):
    if key not in SCHEMA:
        raise ConfigError(f"unknown key {key!r}")
    parser, _, allowed = SCHEMA[key]
    value = parser(key, raw)
    if allowed is not None and value not in allowed:
        raise ConfigError(f"{key}: {value!r} is not one of {', '.join(allowed)}")
    return value


def parse_pairs(text: str, origin: str = "<config>") -> dict:
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key in pairs:
            raise ConfigError(f"{origin}:{lineno}: {key} given twice")
        pairs[key] = _coerce(key, raw)
    return pairs


def build(pairs: dict) -> ExperimentConfig:
    from .scenarios import PRESETS

    values = {k: (list(d) if isinstance(d, list) else d) for k, (_, d, _) in SCHEMA.items()}
    scenario = pairs.get("scenario", "custom")
    if scenario != "custom":
        if scenario not in PRESETS:
            raise ConfigError(f"scenario: unknown preset {scenario!r} (known: {', '.join(sorted(PRESETS))})")
        for key, raw in PRESETS[scenario].items():
            values[key] = _coerce(key, raw)
    values.update(pairs)
    values["scenario"] = scenario
    return validate(values)


def parse_config(text: str, origin: str = "<config>") -> ExperimentConfig:
    return build(parse_pairs(text, origin))


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def preset(name: str, **changes) -> ExperimentConfig:
    cfg = build({"scenario": name})
    return cfg.override(**changes) if changes else cfg


def validate(values: dict) -> ExperimentConfig:
    v = values
    missing = set(SCHEMA) - set(v)
    if missing:
        raise ConfigError(f"missing keys: {', '.join(sorted(missing))}")
    extra = set(v) - set(SCHEMA)
    if extra:
        raise ConfigError(f"unknown keys: {', '.join(sorted(extra))}")

    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(v["replicas"] >= 1, "replicas: must be >= 1")
    need(v["spde.nx"] >= 3, "spde.nx: need at least 3 interior nodes")
    need(v["spde.dt"] > 0, "spde.dt: must be positive")
    need(v["spde.T"] > 0, "spde.T: must be positive")
    steps = v["spde.T"] / v["spde.dt"]
    need(abs(steps - round(steps)) <= 1e-9 * max(1.0, steps),
         f"spde.T / spde.dt = {steps:.6g} is not an integer number of steps")
    nu, mu = v["spde.nu"], v["spde.mu"]
    if nu is not None:
        need(nu > 0, "spde.nu: must be positive")
    if nu is not None and mu is not None:
        need(nu <= mu, f"spde.nu = {nu:g} exceeds spde.mu = {mu:g}; the ellipticity window needs spde.nu <= spde.mu")
    need(v["spde.blowup_ceiling"] > 0, "spde.blowup_ceiling: must be positive")
    need(0 <= v["noise.seed"] < 2**64, "noise.seed: must be a 64-bit unsigned integer")
    need(v["noise.k_trunc"] >= 0, "noise.k_trunc: must be >= 0 (0 means one mode per interior node)")
    need(0 <= v["noise.q_decay"] < 1, "noise.q_decay: must lie in [0, 1)")
    need(v["noise.q_power"] >= 0, "noise.q_power: must be >= 0 (0 selects geometric decay)")
    need(v["run.chunk"] >= 1, "run.chunk: must be >= 1")
    need(v["run.workers"] >= 1, "run.workers: must be >= 1")
    need(v["output.fields"] >= -1, "output.fields: -1 (all), 0 or a replica count")
    need(v["report.mode_k"] >= 1, "report.mode_k: must be >= 1")
    for t in v["report.mode_times"]:
        need(0 <= t <= v["spde.T"], f"report.mode_times: {t:g} outside [0, spde.T]")
    for name in v["checks"]:
        need(name in CHECKS, f"checks: unknown check {name!r} (known: {', '.join(CHECKS)})")
    need(v["check.compat_order"] >= 1, "check.compat_order: must be >= 1")
    need(v["check.r0"] >= 2, "check.r0: must be >= 2")
    need(v["check.c_max"] > 0, "check.c_max: must be positive")
    need(v["check.apriori_p"] >= 2, "check.apriori_p: must be >= 2")
    need(0 < v["reg.beta"] < 1, "reg.beta: must lie in (0, 1)")
    need(all(a >= 0 for a in v["reg.a_list"]), "reg.a_list: entries must be >= 0")
    for f in v["reg.fields"]:
        need(f in ("u", "y", "z"), f"reg.fields: unknown field {f!r}")
    for nx, dt in v["converge.ladder"]:
        need(nx >= 3 and dt > 0, f"converge.ladder: bad level {nx}:{dt}")
    return ExperimentConfig(dict(v))
