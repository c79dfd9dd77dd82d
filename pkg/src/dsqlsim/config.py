"""Scenario configuration: defaults, validation and YAML loading."""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any

import yaml


class ConfigError(ValueError):
    """Invalid or unknown configuration key."""

    def __init__(self, key: str, message: str, line: int | None = None):
        self.key = key
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{key}: {message}")


@dataclass(frozen=True)
class ScenarioConfig:
    # geometry / population (Table IV)
    area_width_m: float = 36000.0
    area_length_m: float = 48000.0
    n_vehicles: int = 50
    n_base_stations: int = 6
    n_rsus: int = 12
    edge_fraction: float = 0.2
    v_min_mps: float = 12.0
    v_max_mps: float = 35.0
    packet_size_bytes: int = 2048
    packet_rate_hz: float = 1.0
    delay_sensitive_fraction: float = 0.5
    sim_duration_s: float = 90.0
    comm_range_m: float = 2000.0
    interference_range_m: float = 1000.0
    time_slot_ms: float = 1.0
    hello_period_ms: float = 100.0
    hrr_window: int = 10
    eviction_horizon: int = 20
    # Q-learning (Table II)
    alpha: float = 0.5
    beta: float = 0.5
    epsilon_explore: float = 0.7
    epsilon_online: float = 0.05
    q_threshold: float = 8.0
    episodes_budget: int = 500
    # perceptron (Table III)
    mlp_learning_rate: float = 0.5
    mlp_batch_size: int = 180
    mlp_epochs: int = 12
    mlp_samples: int = 1800
    hidden_width: int = 8
    mlp_top_k: int = 3
    # privacy
    eta_privacy: float = 1.0
    lambda_j: float = 0.5
    entropy_threshold: float = 0.5
    p_malicious: float = 0.1
    malicious_drop_prob: float = 0.5
    # channel
    p_obstacle: float = 0.1
    path_loss_exp: float = 3.0
    noise_power: float = 1e-13
    tx_power: float = 0.2
    channel_fading: float = 1.0
    bandwidth_hz: float = 10e6
    cb_cellular: float = 100.0
    cb_ul: float = 50.0
    cb_dl: float = 100.0
    cb_11p: float = 27.0
    pd_th_ms: float = 100.0
    pd_bs_ms: float = 20.0
    pd_11p_ms: float = 10.0
    ad: float = 1e-6
    cpu_freq_min_hz: float = 0.5e9
    cpu_freq_max_hz: float = 1.5e9
    d_min_m: float = 1.0
    reward_max: float = 1.0
    th_l: float = 0.5
    th_a: float = 0.5
    seed: int = 42

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    # derived quantities

    @property
    def n_nodes(self) -> int:
        return self.n_vehicles + self.n_base_stations + self.n_rsus

    @property
    def tau_s(self) -> float:
        return self.pd_th_ms / 1000.0

    @property
    def block_units(self) -> int:
        return math.ceil(self.packet_size_bytes / 512)

    @property
    def duration_ticks(self) -> int:
        return int(round(self.sim_duration_s * 1000.0 / self.time_slot_ms))

    @property
    def hello_period_ticks(self) -> int:
        return max(1, int(round(self.hello_period_ms / self.time_slot_ms)))


_POSITIVE = (
    "area_width_m", "area_length_m", "v_min_mps", "v_max_mps", "packet_size_bytes",
    "sim_duration_s", "comm_range_m", "interference_range_m", "time_slot_ms",
    "hello_period_ms", "hrr_window", "eviction_horizon", "mlp_learning_rate",
    "mlp_batch_size", "mlp_samples", "hidden_width", "mlp_top_k", "eta_privacy",
    "path_loss_exp", "noise_power", "tx_power", "channel_fading", "bandwidth_hz",
    "cb_cellular", "cb_ul", "cb_dl", "cb_11p", "pd_th_ms", "pd_bs_ms", "pd_11p_ms",
    "ad", "cpu_freq_min_hz", "cpu_freq_max_hz", "d_min_m", "q_threshold",
)
_NONNEGATIVE = (
    "n_vehicles", "n_base_stations", "n_rsus", "packet_rate_hz", "mlp_epochs",
    "episodes_budget", "reward_max", "seed",
)
_UNIT_INTERVAL = (
    "edge_fraction", "delay_sensitive_fraction", "epsilon_explore", "epsilon_online",
    "lambda_j", "p_malicious", "malicious_drop_prob", "p_obstacle",
)


def validate(cfg: ScenarioConfig) -> None:
    """Raise ConfigError naming the first violated invariant."""
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f.name, f"expected a number, got {value!r}")
        if f.type == "int" and not float(value).is_integer():
            raise ConfigError(f.name, f"expected an integer, got {value!r}")
        if not math.isfinite(value):
            raise ConfigError(f.name, "must be finite")
    for name in _POSITIVE:
        if getattr(cfg, name) <= 0:
            raise ConfigError(name, "must be strictly positive")
    for name in _NONNEGATIVE:
        if getattr(cfg, name) < 0:
            raise ConfigError(name, "must be non-negative")
    for name in _UNIT_INTERVAL:
        if not 0.0 <= getattr(cfg, name) <= 1.0:
            raise ConfigError(name, "must lie in [0, 1]")
    if cfg.v_min_mps > cfg.v_max_mps:
        raise ConfigError("v_min_mps", f"v_min_mps={cfg.v_min_mps} exceeds v_max_mps={cfg.v_max_mps}")
    if cfg.cpu_freq_min_hz > cfg.cpu_freq_max_hz:
        raise ConfigError("cpu_freq_min_hz", "exceeds cpu_freq_max_hz")
    if not 0.0 < cfg.alpha <= 1.0:
        raise ConfigError("alpha", "must lie in (0, 1]")
    if not 0.0 <= cfg.beta < 1.0:
        raise ConfigError("beta", "must lie in [0, 1)")
    for name in ("th_l", "th_a", "entropy_threshold"):
        if not 0.0 < getattr(cfg, name) < 1.0:
            raise ConfigError(name, "must lie in (0, 1)")
    # pseudonym entropy is at most 1 bit here, so the interference bound stays <= 1
    if (cfg.lambda_j + 1.0) / 4.0 > 1.0:
        raise ConfigError("lambda_j", "interference bound (lambda_j + H)/4 would exceed 1")
    if cfg.n_vehicles + cfg.n_base_stations + cfg.n_rsus < 1:
        raise ConfigError("n_vehicles", "scenario has no nodes")
    if cfg.hello_period_ms < cfg.time_slot_ms:
        raise ConfigError("hello_period_ms", "shorter than one time slot")


FIELD_NAMES = tuple(f.name for f in fields(ScenarioConfig))
_FIELD_TYPES = {f.name: f.type for f in fields(ScenarioConfig)}


_SCI = re.compile(r"^[-+]?(\d+\.?\d*|\.\d+)[eE][-+]?\d+$")


def _coerce(key: str, value: Any, line: int | None):
    kind = _FIELD_TYPES[key]
    # YAML 1.1 reads "1e-13" (no dot) as a string
    if isinstance(value, str) and _SCI.match(value.strip()):
        value = float(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(key, f"expected a number, got {value!r}", line)
    if kind == "int":
        if not float(value).is_integer():
            raise ConfigError(key, f"expected an integer, got {value!r}", line)
        return int(value)
    return float(value)


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse a YAML key/value document; unknown keys are an error."""
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("<document>", str(exc).splitlines()[0],
                          mark.line + 1 if mark else None) from exc
    base = base or ScenarioConfig()
    if root is None:
        return base
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError("<document>", "top level must be a mapping", root.start_mark.line + 1)
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for key_node, value_node in root.value:
        key = key_node.value
        line = key_node.start_mark.line + 1
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown configuration key", line)
        if key in values:
            raise ConfigError(key, "duplicate key", line)
        raw = yaml.safe_load(yaml.serialize(value_node))
        values[key] = _coerce(key, raw, line)
        lines[key] = line
    try:
        return dataclasses.replace(base, **values)
    except ConfigError as exc:
        raise ConfigError(exc.key, str(exc).split(": ", 1)[-1], lines.get(exc.key)) from None


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


def dump_config(cfg: ScenarioConfig) -> str:
    return "".join(f"{f.name}: {getattr(cfg, f.name)!r}\n" for f in fields(cfg))


def default_config_path() -> Path:
    return Path(__file__).parent / "data" / "default.yaml"
