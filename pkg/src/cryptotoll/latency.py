"""Per-phase latency models for the discrete-event harness.

Each knob is a DelaySpec: constant, normal (truncated at zero), lognormal,
or live. "live" means the harness times the real local computation instead
of sampling. Calibrated defaults reproduce the measured phase means:
35 ms one-way network legs, 49.4 ms handshake compute and 396.45 ms proof
compute (so phase totals of 119.4 ms and roughly 466.5 ms once the legs are
added), and 0.43 / 1.02 / 0.06 s for tip selection, proof-of-work and
broadcast. Proof-of-work keeps the widest dispersion of the set.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Tuple

PHASE_KNOBS: Tuple[str, ...] = (
    "network_one_way",
    "pairwise_handshake_compute",
    "proof_compute",
    "tip_selection",
    "pow",
    "broadcast",
)

# knobs that model local computation; flipped to live measurement in live mode
COMPUTE_KNOBS: Tuple[str, ...] = (
    "pairwise_handshake_compute",
    "proof_compute",
    "tip_selection",
    "pow",
)

_KINDS = ("constant", "normal", "lognormal", "live")


class LatencyError(Exception):
    pass


@dataclass(frozen=True)
class DelaySpec:
    """One delay distribution. Parameters: constant(a) | normal(a=mean, b=sd)
    | lognormal(a=mu, b=sigma) | live (no parameters)."""

    kind: str
    a: float = 0.0
    b: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise LatencyError(f"unknown delay kind {self.kind!r}")

    def sample(self, rng) -> float:
        if self.kind == "constant":
            return max(0.0, self.a)
        if self.kind == "normal":
            return max(0.0, rng.gauss(self.a, self.b))
        if self.kind == "lognormal":
            return rng.lognormvariate(self.a, self.b)
        raise LatencyError("live delays are measured, not sampled")

    @property
    def mean(self) -> float:
        if self.kind == "constant":
            return self.a
        if self.kind == "normal":
            return self.a
        if self.kind == "lognormal":
            return math.exp(self.a + self.b * self.b / 2.0)
        raise LatencyError("live delays have no configured mean")

    def spec_string(self) -> str:
        if self.kind == "live":
            return "live"
        if self.kind == "constant":
            return f"constant:{self.a!r}"
        return f"{self.kind}:{self.a!r}:{self.b!r}"

    @classmethod
    def parse(cls, text: str) -> "DelaySpec":
        parts = text.strip().split(":")
        kind = parts[0]
        if kind == "live":
            if len(parts) != 1:
                raise LatencyError("live takes no parameters")
            return cls("live")
        try:
            if kind == "constant":
                (value,) = parts[1:]
                return cls("constant", float(value))
            if kind in ("normal", "lognormal"):
                a, b = parts[1:]
                return cls(kind, float(a), float(b))
        except (ValueError, TypeError) as exc:
            raise LatencyError(f"bad delay spec {text!r}") from exc
        raise LatencyError(f"unknown delay kind {kind!r}")


def _lognormal_mu(mean: float, sigma: float) -> float:
    return math.log(mean) - sigma * sigma / 2.0


@dataclass(frozen=True)
class LatencyModel:
    network_one_way: DelaySpec
    pairwise_handshake_compute: DelaySpec
    proof_compute: DelaySpec
    tip_selection: DelaySpec
    pow: DelaySpec
    broadcast: DelaySpec

    @classmethod
    def calibrated(cls) -> "LatencyModel":
        return cls(
            network_one_way=DelaySpec("normal", 0.035, 0.003),
            pairwise_handshake_compute=DelaySpec("normal", 0.0494, 0.004),
            proof_compute=DelaySpec("normal", 0.39645, 0.02),
            tip_selection=DelaySpec("normal", 0.43, 0.03),
            pow=DelaySpec("lognormal", _lognormal_mu(1.02, 0.15), 0.15),
            broadcast=DelaySpec("normal", 0.06, 0.005),
        )

    def as_live(self) -> "LatencyModel":
        """Compute knobs flip to live measurement; network stays simulated."""
        updates = {knob: DelaySpec("live") for knob in COMPUTE_KNOBS}
        return replace(self, **updates)

    def knob(self, name: str) -> DelaySpec:
        if name not in PHASE_KNOBS:
            raise LatencyError(f"unknown latency knob {name!r}")
        return getattr(self, name)

    def with_knob(self, name: str, spec: DelaySpec) -> "LatencyModel":
        if name not in PHASE_KNOBS:
            raise LatencyError(f"unknown latency knob {name!r}")
        return replace(self, **{name: spec})
