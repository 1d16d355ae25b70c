"""Sectioned text configuration for experiments.

One file describes a whole run: the synthetic world, training, the
regulator, the verification grid, and evaluation. The format is
deliberately small: `[section]` headers, `key = value` pairs, blank
lines, and full-line comments starting with # or ;. Every parse error
names its line. A canonical writer makes configs hashable: any two
files that parse to the same experiment serialize (and hash) the same.

configparser is not used on purpose: the error contract here (exact
line numbers for unknown sections, unknown keys, duplicates, and bad
values) is the feature, and it is less code to track lines directly
than to recover them afterwards.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields

from .regulator import AlphaSchedule, RegulatorConfig
from .synth import WorldSpec
from .trainer import TrainConfig


class ConfigError(ValueError):
    """Parse or validation failure; message carries the line number."""

    def __init__(self, line: int | None, message: str):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


@dataclass(frozen=True)
class VerifyConfig:
    """Grid for the bound-verification command."""

    mc_batches: int = 100_000
    seed: int = 0
    p_agree: tuple[float, ...] = (0.6, 0.8, 0.95)
    n_values: tuple[int, ...] = (2, 8, 32, 128)
    eta_values: tuple[float, ...] = (0.1, 0.3, 0.5)
    eta_n_values: tuple[int, ...] = (8, 32)

    def __post_init__(self):
        if self.mc_batches < 2:
            raise ValueError("mc_batches must be >= 2")
        for name in ("p_agree", "n_values", "eta_values", "eta_n_values"):
            if not getattr(self, name):
                raise ValueError(f"{name} must not be empty")
        if any(not 0.0 < p < 1.0 for p in self.p_agree):
            raise ValueError("p_agree entries must lie in (0, 1)")
        if any(n < 2 for n in self.n_values + self.eta_n_values):
            raise ValueError("batch sizes must be >= 2")
        if any(not 0.0 <= e <= 1.0 for e in self.eta_values):
            raise ValueError("eta entries must lie in [0, 1]")


@dataclass(frozen=True)
class EvalConfig:
    """Knobs for retrieval evaluation, histogram, and the sweep."""

    reps: int = 128
    ks: tuple[int, ...] = (1, 5, 10)
    hist_batches: int = 100
    hist_bins: int = 40
    thresholds: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.ks or any(k < 1 for k in self.ks):
            raise ValueError("ks must be positive")
        if self.hist_batches < 1 or self.hist_bins < 1:
            raise ValueError("histogram sizes must be >= 1")
        if not self.thresholds:
            raise ValueError("thresholds must not be empty")
        if list(self.thresholds) != sorted(self.thresholds):
            raise ValueError("thresholds must be ascending")


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldSpec = field(default_factory=lambda: _DEFAULT_WORLD)
    train: TrainConfig = field(default_factory=lambda: _DEFAULT_TRAIN)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


# Defaults reproduce the headline experiment: a crowded duplicate-heavy
# world where the weighted loss beats the plain one.
_DEFAULT_WORLD = WorldSpec(
    n_concepts=64,
    dim_a=32,
    dim_b=48,
    emb_noise=0.1,
    false_neg_rate=0.3,
    partial_overlap=0.5,
    seed=0,
)

_DEFAULT_TRAIN = TrainConfig(
    steps=2000,
    batch_n=64,
    lr=0.05,
    momentum=0.9,
    tau=0.1,
    loss="srcl",
    emb_dim=8,
    teacher_steps=500,
    teacher_emb_dim=32,
    mask_threshold=0.45,
    seed=0,
)


def _parse_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"expected an integer, got {raw!r}")


def _parse_float(raw: str) -> float:
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"expected a number, got {raw!r}")


def _parse_str(raw: str) -> str:
    return raw


def _parse_opt_int(raw: str) -> int | None:
    return None if raw.lower() == "none" else _parse_int(raw)


def _parse_opt_float(raw: str) -> float | None:
    return None if raw.lower() == "none" else _parse_float(raw)


def _parse_int_list(raw: str) -> tuple[int, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list")
    return tuple(_parse_int(p) for p in parts)


def _parse_float_list(raw: str) -> tuple[float, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list")
    return tuple(_parse_float(p) for p in parts)


# section -> key -> value parser; also fixes the canonical field order
_SCHEMAS: dict[str, dict[str, object]] = {
    "world": {
        "n_concepts": _parse_int,
        "dim_a": _parse_int,
        "dim_b": _parse_int,
        "emb_noise": _parse_float,
        "false_neg_rate": _parse_float,
        "partial_overlap": _parse_float,
        "style_dim": _parse_int,
        "style_scale": _parse_float,
        "seed": _parse_int,
    },
    "train": {
        "steps": _parse_int,
        "batch_n": _parse_int,
        "lr": _parse_float,
        "momentum": _parse_float,
        "tau": _parse_float,
        "loss": _parse_str,
        "emb_dim": _parse_int,
        "hidden_dim": _parse_int,
        "teacher_steps": _parse_int,
        "teacher_emb_dim": _parse_opt_int,
        "mask_threshold": _parse_float,
        "seed": _parse_int,
    },
    "regulator": {
        "delta": _parse_float,
        "alpha_schedule": _parse_str,
        "weight_floor": _parse_float,
        "weight_temperature": _parse_opt_float,
    },
    "verify": {
        "mc_batches": _parse_int,
        "seed": _parse_int,
        "p_agree": _parse_float_list,
        "n_values": _parse_int_list,
        "eta_values": _parse_float_list,
        "eta_n_values": _parse_int_list,
    },
    "eval": {
        "reps": _parse_int,
        "ks": _parse_int_list,
        "hist_batches": _parse_int,
        "hist_bins": _parse_int,
        "thresholds": _parse_float_list,
    },
}


def _scan(text: str) -> dict[str, dict[str, object]]:
    """Tokenize and type-check; returns per-section parsed values."""
    values: dict[str, dict[str, object]] = {name: {} for name in _SCHEMAS}
    section: str | None = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.strip()
        if not line or line.startswith(("#", ";")):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(lineno, "unterminated section header")
            name = line[1:-1].strip()
            if name not in _SCHEMAS:
                known = ", ".join(_SCHEMAS)
                raise ConfigError(lineno, f"unknown section [{name}] (known: {known})")
            section = name
            continue
        if "=" not in line:
            raise ConfigError(lineno, f"expected key = value, got {line!r}")
        if section is None:
            raise ConfigError(lineno, "key outside any [section]")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        schema = _SCHEMAS[section]
        if key not in schema:
            raise ConfigError(lineno, f"unknown key {key!r} in [{section}]")
        if key in values[section]:
            raise ConfigError(lineno, f"duplicate key {key!r} in [{section}]")
        try:
            values[section][key] = schema[key](raw)
        except ValueError as exc:
            raise ConfigError(lineno, f"bad value for {section}.{key}: {exc}")
    return values


def _section_line(text: str, section: str) -> int | None:
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        if rawline.strip() == f"[{section}]":
            return lineno
    return None


def _build(text: str, values: dict[str, dict[str, object]]) -> ExperimentConfig:
    def construct(section, factory, base, extra=()):
        kw = {f.name: getattr(base, f.name) for f in fields(base) if f.name not in extra}
        kw.update(values[section])
        try:
            return factory(**kw)
        except ValueError as exc:
            raise ConfigError(_section_line(text, section), f"[{section}] {exc}")

    world = construct("world", WorldSpec, _DEFAULT_WORLD)
    reg_values = dict(values["regulator"])
    kind = reg_values.pop("alpha_schedule", None)
    reg_base = _DEFAULT_TRAIN.regulator
    reg_kw = {
        "delta": reg_values.get("delta", reg_base.delta),
        "weight_floor": reg_values.get("weight_floor", reg_base.weight_floor),
        "weight_temperature": reg_values.get(
            "weight_temperature", reg_base.weight_temperature
        ),
    }
    try:
        schedule = AlphaSchedule(kind) if kind is not None else reg_base.alpha_schedule
        regulator = RegulatorConfig(alpha_schedule=schedule, **reg_kw)
    except ValueError as exc:
        raise ConfigError(_section_line(text, "regulator"), f"[regulator] {exc}")

    train_kw = {
        f.name: getattr(_DEFAULT_TRAIN, f.name)
        for f in fields(TrainConfig)
        if f.name != "regulator"
    }
    train_kw.update(values["train"])
    try:
        train = TrainConfig(regulator=regulator, **train_kw)
    except ValueError as exc:
        raise ConfigError(_section_line(text, "train"), f"[train] {exc}")

    verify = construct("verify", VerifyConfig, VerifyConfig())
    ev = construct("eval", EvalConfig, EvalConfig())
    return ExperimentConfig(world=world, train=train, verify=verify, eval=ev)


def parse_config(text: str, overrides: tuple[str, ...] = ()) -> ExperimentConfig:
    """Parse config text, then apply `section.key=value` overrides."""
    values = _scan(text)
    for i, item in enumerate(overrides, start=1):
        head, eq, raw = item.partition("=")
        dotted = head.strip()
        if not eq or "." not in dotted:
            raise ConfigError(None, f"override {i}: expected section.key=value, got {item!r}")
        section, _, key = dotted.partition(".")
        if section not in _SCHEMAS:
            raise ConfigError(None, f"override {i}: unknown section {section!r}")
        if key not in _SCHEMAS[section]:
            raise ConfigError(None, f"override {i}: unknown key {key!r} in [{section}]")
        try:
            values[section][key] = _SCHEMAS[section][key](raw.strip())
        except ValueError as exc:
            raise ConfigError(None, f"override {i}: bad value for {section}.{key}: {exc}")
    return _build(text, values)


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)  # shortest round-tripping form
    return str(value)


def write_config(cfg: ExperimentConfig) -> str:
    """Canonical serialization: fixed section and key order, all keys."""
    reg = cfg.train.regulator
    sources = {
        "world": cfg.world,
        "train": cfg.train,
        "regulator": reg,
        "verify": cfg.verify,
        "eval": cfg.eval,
    }
    out = []
    for section, schema in _SCHEMAS.items():
        out.append(f"[{section}]")
        for key in schema:
            if section == "regulator" and key == "alpha_schedule":
                value = reg.alpha_schedule.kind
            else:
                value = getattr(sources[section], key)
            out.append(f"{key} = {_format_value(value)}")
        out.append("")
    return "\n".join(out)


def config_sha256(cfg: ExperimentConfig) -> str:
    """Hash of the canonical form, stable across input formatting."""
    return hashlib.sha256(write_config(cfg).encode("utf-8")).hexdigest()


def default_config() -> ExperimentConfig:
    return ExperimentConfig()
