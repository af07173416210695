"""Experiment configuration: regime presets, flat key-value files, JSON echo."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigurationError, IpchainError
from .propagate import BathParameters, Scheme, SchemeConfig, StarOrdering

PRESET_NAMES = ("adiabatic", "intermediate", "nonadiabatic", "custom")

# eta0 is not fixed by the regimes; 1.0 (reorganization energy 2*delta) throughout
PRESETS = {
    "adiabatic": dict(eta0=1.0, omega0=0.25, T0=1.0, dt=5e-2),
    "intermediate": dict(eta0=1.0, omega0=1.0, T0=2.0, dt=5e-3, sv_threshold=1e-4),
    "nonadiabatic": dict(eta0=1.0, omega0=4.0, T0=4.0, dt=1.25e-2),
    "custom": {},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved experiment settings.

    ``t_final`` is in units of ``pi/delta`` (the figures' time axis); ``dt`` is
    in units of ``1/delta``.
    """

    preset: str = "adiabatic"
    scheme: str = "IC"
    eta0: float = 1.0
    omega0: float = 0.25
    T0: float = 1.0
    delta: float = 1.0
    N: int = 60
    local_dim: int = 10
    dt: float = 5e-2
    t_final: float = 2.0
    sv_threshold: float = 1e-3
    max_bond: int = 1000
    omega_max: float | None = None
    quad_points: int | None = None
    record_stride: int = 1
    record_occupations: bool = False
    record_timing: bool = True
    star_ordering: str = StarOrdering.ABS_FREQUENCY_ASCENDING.value
    outdir: str = "results"
    seed: int = 0

    def __post_init__(self):
        if self.preset not in PRESET_NAMES:
            raise ConfigurationError(f"unknown preset {self.preset!r}; choose from {PRESET_NAMES}", key="preset")
        if self.scheme not in {s.value for s in Scheme}:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; choose from C, IC, S", key="scheme")
        checks = [
            ("eta0", self.eta0 >= 0),
            ("omega0", self.omega0 > 0),
            ("T0", self.T0 >= 0),
            ("delta", self.delta > 0),
            ("omega_max", self.omega_max is None or self.omega_max > 0),
            ("quad_points", self.quad_points is None or self.quad_points >= 2 * (self.N + 1)),
        ]
        for key, ok in checks:
            if not ok:
                raise ConfigurationError(f"invalid value {getattr(self, key)!r}", key=key)
        self.scheme_config()  # validates the remaining fields

    def bath(self) -> BathParameters:
        return BathParameters(
            eta0=self.eta0,
            omega0=self.omega0,
            T0=self.T0,
            delta=self.delta,
            omega_max=self.omega_max,
            quad_points=self.quad_points,
        )

    def scheme_config(self, **changes) -> SchemeConfig:
        cfg = self if not changes else dataclasses.replace(self, **changes)
        return SchemeConfig(
            scheme=cfg.scheme,
            N=cfg.N,
            local_dim=cfg.local_dim,
            dt=cfg.dt / cfg.delta,
            t_final=cfg.t_final * math.pi / cfg.delta,
            sv_threshold=cfg.sv_threshold,
            max_bond=cfg.max_bond,
            star_ordering=cfg.star_ordering,
            record_stride=cfg.record_stride,
            record_occupations=cfg.record_occupations,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key, raw):
    """Convert a raw value (string from a file/flag, or a JSON scalar) to the field type."""
    kind = FIELD_TYPES[key]
    if isinstance(raw, str):
        text = raw.strip()
        if "None" in kind and text.lower() in ("none", "null", ""):
            return None
        try:
            if kind.startswith("bool"):
                lowered = text.lower()
                if lowered not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(text)
                return lowered in ("true", "1", "yes")
            if kind.startswith("int"):
                value = float(text)
                if not value.is_integer():
                    raise ValueError(text)
                return int(value)
            if kind.startswith("float"):
                return float(text)
            return text
        except ValueError:
            raise ConfigurationError(f"cannot parse {raw!r} as {kind}", key=key) from None
    if raw is None:
        if "None" not in kind:
            raise ConfigurationError("value may not be null", key=key)
        return None
    if kind.startswith("bool"):
        if not isinstance(raw, bool):
            raise ConfigurationError(f"expected a boolean, got {raw!r}", key=key)
        return raw
    if kind.startswith("int"):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)) or not float(raw).is_integer():
            raise ConfigurationError(f"expected an integer, got {raw!r}", key=key)
        return int(raw)
    if kind.startswith("float"):
        if isinstance(raw, bool) or not isinstance(raw, (int, float)):
            raise ConfigurationError(f"expected a number, got {raw!r}", key=key)
        return float(raw)
    if not isinstance(raw, str):
        raise ConfigurationError(f"expected a string, got {raw!r}", key=key)
    return raw


def read_key_values(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    entries = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value'", key=f"{path}:{lineno}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key in entries:
            raise ConfigurationError(f"line {lineno}: duplicate key", key=key)
        entries[key] = value
    return entries


def resolve(entries: dict) -> ExperimentConfig:
    """Apply preset defaults, then explicit entries; validate the result."""
    unknown = sorted(set(entries) - set(FIELD_TYPES))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown}", key=unknown[0])
    values = {key: _coerce(key, raw) for key, raw in entries.items()}
    preset = values.get("preset", ExperimentConfig.preset)
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r}; choose from {PRESET_NAMES}", key="preset")
    merged = dict(PRESETS[preset])
    merged.update(values)
    try:
        return ExperimentConfig(**merged)
    except IpchainError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def parse_config(path=None, overrides=None) -> ExperimentConfig:
    """Resolve a configuration from an optional file plus ``overrides``.

    ``path`` may be a flat key-value file or a JSON echo written by a previous
    run; ``overrides`` maps keys to values (strings are parsed like file values).
    """
    entries = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"config file {path} does not exist", key="config")
        if path.suffix == ".json":
            try:
                entries = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"invalid JSON: {exc}", key=str(path)) from exc
            if not isinstance(entries, dict):
                raise ConfigurationError("JSON config must be an object", key=str(path))
        else:
            entries = read_key_values(path)
    entries.update(overrides or {})
    return resolve(entries)


def parse_overrides(pairs) -> dict:
    """``["N=3", "scheme=C"]`` -> ``{"N": "3", "scheme": "C"}``."""
    out = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigurationError(f"override {pair!r} is not of the form key=value", key=pair)
        key, value = pair.split("=", 1)
        out[key.strip()] = value.strip()
    return out
