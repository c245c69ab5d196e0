"""Scenario configuration and its plain-text key/value file format.

A config file holds one `key = value` pair per line; `#` starts a comment.
Keys mirror the ScenarioConfig fields. Two prefixed families exist:
`latency.<knob> = constant:<s> | normal:<mean>:<sd> | lognormal:<mu>:<sigma> |
live` overrides one latency knob, and `rate.<class> = <amount>` sets the
toll for a vehicle class (the default table is replaced as soon as one
`rate.` key appears).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Tuple

from .latency import DelaySpec, LatencyModel

FAULT_KINDS: Tuple[str, ...] = (
    "none",
    "no_user_credential",
    "bad_payment_nonce",
    "wrong_payment_amount",
    "wrong_payment_address",
    "insufficient_balance",
    "unresponsive_peer",
    "tampered_channel",
)

MODES: Tuple[str, ...] = ("calibrated", "live")


class ConfigError(Exception):
    pass


def _default_rates() -> Dict[str, int]:
    return {"light": 5, "heavy": 12}


@dataclass
class ScenarioConfig:
    seed: int = 1
    trials: int = 1000
    mode: str = "calibrated"
    comm_range_m: float = 600.0
    speed_kmh: float = 130.0
    epsilon_m: float = 100.0
    reestablish_timeout_s: float = 2.0
    deadline_s: float = 60.0
    settle_poll_s: float = 1.0
    overhead_s: float = 0.038
    difficulty_bits: int = 0
    reuse_channel: bool = False
    fault: str = "none"
    direction: str = "entry"
    vehicle_class: str = "light"
    rate_table: Dict[str, int] = field(default_factory=_default_rates)
    user_funds: int = 1000
    announce_interval_s: float = 1.0
    tip_strategy: str = "uniform"
    gantry_name: str = "A1 North Gantry"
    gantry_id: str = "PT-A1-017"
    gantry_lat: float = 38.736946
    gantry_lon: float = -9.142685
    user_offset_m: float = 20.0
    user_name: str = "Alice Motorist"
    user_vat: str = "PT123456789"
    user_plate: str = "AA-12-34"
    latency: LatencyModel = field(default_factory=LatencyModel.calibrated)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.fault not in FAULT_KINDS:
            raise ConfigError(f"unknown fault {self.fault!r}")
        for name, value in (
            ("trials", self.trials),
            ("comm_range_m", self.comm_range_m),
            ("speed_kmh", self.speed_kmh),
            ("epsilon_m", self.epsilon_m),
            ("reestablish_timeout_s", self.reestablish_timeout_s),
            ("deadline_s", self.deadline_s),
            ("settle_poll_s", self.settle_poll_s),
            ("announce_interval_s", self.announce_interval_s),
        ):
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if self.overhead_s < 0:
            raise ConfigError("overhead_s must be non-negative")
        if self.difficulty_bits < 0:
            raise ConfigError("difficulty_bits must be non-negative")
        if self.user_funds < 0:
            raise ConfigError("user_funds must be non-negative")
        if not self.rate_table:
            raise ConfigError("rate table is empty")
        for cls_name, amount in self.rate_table.items():
            if not isinstance(amount, int) or amount <= 0:
                raise ConfigError(f"toll for {cls_name!r} must be a positive integer")
        if self.vehicle_class not in self.rate_table:
            raise ConfigError(f"vehicle class {self.vehicle_class!r} has no rate entry")

    def effective_latency(self) -> LatencyModel:
        """Live mode flips the compute knobs to measurement."""
        return self.latency.as_live() if self.mode == "live" else self.latency

    @property
    def gantry_location(self) -> Tuple[float, float]:
        return (self.gantry_lat, self.gantry_lon)

    # file format ------------------------------------------------------------

    def to_lines(self) -> List[str]:
        lines = []
        for key in _SCALAR_FIELDS:
            lines.append(f"{key} = {_format_value(getattr(self, key))}")
        for cls_name in sorted(self.rate_table):
            lines.append(f"rate.{cls_name} = {self.rate_table[cls_name]}")
        for knob in _LATENCY_KNOBS:
            lines.append(f"latency.{knob} = {self.latency.knob(knob).spec_string()}")
        return lines

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "ScenarioConfig":
        config = cls()
        rates_touched = False
        for lineno, raw in enumerate(lines, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            if key.startswith("rate."):
                if not rates_touched:
                    config.rate_table = {}
                    rates_touched = True
                config.rate_table[key[len("rate.") :]] = _parse_int(key, value)
            elif key.startswith("latency."):
                knob = key[len("latency.") :]
                config.latency = config.latency.with_knob(knob, DelaySpec.parse(value))
            elif key in _SCALAR_FIELDS:
                setattr(config, key, _parse_scalar(key, value))
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        config.validate()
        return config

    @classmethod
    def from_file(cls, path) -> "ScenarioConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_lines(fh)

    def with_overrides(self, **kwargs) -> "ScenarioConfig":
        config = replace(self, **kwargs)
        config.validate()
        return config


_SCALAR_TYPES = {
    "seed": int,
    "trials": int,
    "mode": str,
    "comm_range_m": float,
    "speed_kmh": float,
    "epsilon_m": float,
    "reestablish_timeout_s": float,
    "deadline_s": float,
    "settle_poll_s": float,
    "overhead_s": float,
    "difficulty_bits": int,
    "reuse_channel": bool,
    "fault": str,
    "direction": str,
    "vehicle_class": str,
    "user_funds": int,
    "announce_interval_s": float,
    "tip_strategy": str,
    "gantry_name": str,
    "gantry_id": str,
    "gantry_lat": float,
    "gantry_lon": float,
    "user_offset_m": float,
    "user_name": str,
    "user_vat": str,
    "user_plate": str,
}
_SCALAR_FIELDS = tuple(_SCALAR_TYPES)
_LATENCY_KNOBS = (
    "network_one_way",
    "pairwise_handshake_compute",
    "proof_compute",
    "tip_selection",
    "pow",
    "broadcast",
)


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{key} expects an integer, got {value!r}") from None


def _parse_scalar(key: str, value: str):
    target = _SCALAR_TYPES[key]
    if target is bool:
        lowered = value.lower()
        if lowered in ("true", "yes", "1"):
            return True
        if lowered in ("false", "no", "0"):
            return False
        raise ConfigError(f"{key} expects true/false, got {value!r}")
    if target is int:
        return _parse_int(key, value)
    if target is float:
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{key} expects a number, got {value!r}") from None
    return value


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)
