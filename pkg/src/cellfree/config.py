"""Scenario configuration: defaults, validation, YAML round-trip and overrides."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

SCHEMES = ("HybridUA", "SCF1", "SCF2", "SCF1lim", "Border", "LLSFB", "Nearest")
CORRELATION_MODELS = ("uncorrelated", "local_scattering")
POWER_ALLOCATIONS = ("global", "scalable")


class ConfigError(ValueError):
    """Invalid scenario configuration."""

    category = "invalid-config"


@dataclass(frozen=True)
class ScenarioConfig:
    # network size
    K: int = 50
    L: int = 200
    N: int = 4
    U: int = 40
    area_side: float = math.sqrt(8e6)  # m, 8 km^2
    # coherence block
    tau_p: int = 10
    tau_u: int = 0
    tau_d: int = 190
    tau_c: int = 200
    # powers
    ul_power_mw: float = 100.0
    ap_dl_power_mw: float = 200.0
    noise_dbm: float = -94.0
    # large-scale fading
    pathloss_db_1km: float = -148.1
    pathloss_exponent: float = 3.76
    shadow_std_db: float = 10.0
    min_distance_m: float = 1.0
    correlation: str = "uncorrelated"
    asd_deg: float = 15.0
    # association thresholds
    epsilon: float = 0.4
    upsilon: int = 2
    delta: float = 95.0
    border_m: float = 100.0
    scf2_cpus: int = 2
    # DL power allocation
    power_allocation: str = "global"
    power_exponent: float = -0.5
    power_kappa: float = 0.5
    schemes: tuple[str, ...] = SCHEMES
    # Monte Carlo
    n_setups: int = 1
    n_channel_realizations: int = 200
    trial_chunk: int = 25
    compute_se: bool = True
    seed: int = 0

    @property
    def area_km2(self) -> float:
        return self.area_side**2 / 1e6

    @property
    def noise_mw(self) -> float:
        return 10 ** (self.noise_dbm / 10)

    def validate(self) -> "ScenarioConfig":
        problems = []
        for name in ("K", "L", "N", "U", "tau_p", "n_setups", "n_channel_realizations", "trial_chunk"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if min(self.tau_u, self.tau_d) < 0:
            problems.append("tau_u and tau_d must be >= 0")
        if self.tau_p + self.tau_u + self.tau_d != self.tau_c:
            problems.append(
                f"tau_p + tau_u + tau_d = {self.tau_p + self.tau_u + self.tau_d} != tau_c = {self.tau_c}"
            )
        if self.U > self.L:
            problems.append(f"U = {self.U} exceeds L = {self.L}")
        if not 0 < self.delta <= 100:
            problems.append("delta must lie in (0, 100]")
        if self.upsilon < 1:
            problems.append("upsilon must be >= 1")
        if self.scf2_cpus < 1:
            problems.append("scf2_cpus must be >= 1")
        if not self.area_side > 0:
            problems.append("area_side must be > 0")
        if self.ul_power_mw <= 0 or self.ap_dl_power_mw <= 0:
            problems.append("powers must be > 0")
        if self.min_distance_m <= 0:
            problems.append("min_distance_m must be > 0")
        if self.correlation not in CORRELATION_MODELS:
            problems.append(f"correlation must be one of {CORRELATION_MODELS}")
        if self.power_allocation not in POWER_ALLOCATIONS:
            problems.append(f"power_allocation must be one of {POWER_ALLOCATIONS}")
        unknown = [s for s in self.schemes if s not in SCHEMES]
        if unknown or not self.schemes:
            problems.append(f"unknown or empty scheme list {list(self.schemes)}; valid: {list(SCHEMES)}")
        if len(set(self.schemes)) != len(self.schemes):
            problems.append("duplicate schemes")
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["schemes"] = list(self.schemes)
        return out


_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


def _coerce(name: str, value):
    if name not in _FIELD_TYPES:
        if name == "area_km2":
            return "area_side", math.sqrt(float(value) * 1e6)
        raise ConfigError(f"unknown config key {name!r}")
    kind = _FIELD_TYPES[name]
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return name, int(value)
        if kind == "float":
            return name, float(value)
        if kind == "str":
            return name, str(value)
        if kind == "bool":
            if isinstance(value, str):
                value = yaml.safe_load(value)
            if not isinstance(value, bool):
                raise ValueError(value)
            return name, value
        # schemes
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return name, tuple(str(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def config_from_dict(data: dict | None, base: ScenarioConfig | None = None) -> ScenarioConfig:
    base = base or ScenarioConfig()
    changes = dict(_coerce(k, v) for k, v in (data or {}).items())
    return base.replace(**changes).validate()


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_dict(data)


def dump_config(config: ScenarioConfig) -> str:
    return yaml.safe_dump(config.to_dict(), sort_keys=False)


def parse_config(text: str) -> ScenarioConfig:
    return config_from_dict(yaml.safe_load(text))


def apply_overrides(config: ScenarioConfig, assignments: list[str]) -> ScenarioConfig:
    """Apply ``key=value`` strings; values are parsed as YAML scalars or lists."""
    data = {}
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        data[key.strip()] = yaml.safe_load(raw)
    return config_from_dict(data, base=config)


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioConfig
    axis: str
    values: tuple = field(default_factory=tuple)
    out_dir: str | None = None

    def configs(self) -> list[ScenarioConfig]:
        if not self.values:
            raise ConfigError("sweep needs a nonempty value list")
        return [config_from_dict({self.axis: v}, base=self.base) for v in self.values]
