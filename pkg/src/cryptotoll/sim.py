"""Feasibility harness: seeded trial runs, ECDFs, and the window check.

The communication window is the time a vehicle spends inside radio range:
window = (2 * range_m) / (speed_kmh / 3.6). Trials replay the full session
on a simulated clock; each trial owns a private RNG stream derived from
(seed, trial index), so a fixed config and seed reproduce every sample,
transcript and report byte for byte in calibrated mode.

Output directory layout (all schemas stable):
  config.txt            resolved key/value config echo
  samples_<phase>.tsv   one line per trial: "<trial>\t<elapsed seconds>"
  transcripts.jsonl     one canonical JSON transcript per session
  report.json           the feasibility report
"""
from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .config import ScenarioConfig
from .protocol import SessionTranscript, World, run_toll_session

BASE_PHASES: Tuple[str, ...] = (
    "trigger",
    "handshake",
    "overhead",
    "gantry_proof",
    "user_proof",
    "payment_request",
    "tip_selection",
    "pow",
    "broadcast",
)
CREDENTIAL_PARTS: Tuple[str, ...] = ("handshake", "gantry_proof", "user_proof", "overhead")
PAYMENT_PARTS: Tuple[str, ...] = ("tip_selection", "pow", "broadcast")
TOTAL_PHASES: Tuple[str, ...] = ("credential_total", "payment_total", "session_total")
ALL_PHASES: Tuple[str, ...] = BASE_PHASES + TOTAL_PHASES


class HarnessError(Exception):
    pass


class MissingPhase(HarnessError):
    pass


class EmptySamples(HarnessError):
    pass


@dataclass(frozen=True)
class PhaseSample:
    trial: int
    phase: str
    elapsed_s: float


@dataclass
class TrialResults:
    config: ScenarioConfig
    samples: List[PhaseSample]
    transcripts: List[SessionTranscript]

    def values(self, phase: str) -> List[float]:
        return [s.elapsed_s for s in self.samples if s.phase == phase]


def window(comm_range_m: float, speed_kmh: float) -> float:
    """Seconds inside radio range: twice the range at constant speed."""
    if comm_range_m <= 0:
        raise ValueError("communication range must be positive")
    if speed_kmh <= 0:
        raise ValueError("speed must be positive")
    return (2.0 * comm_range_m) / (speed_kmh / 3.6)


def trial_rng(seed: int, trial: int) -> random.Random:
    """Private RNG stream per (seed, trial); string seeding is version-stable."""
    return random.Random(f"{seed}:{trial}")


def run_single_session(
    config: ScenarioConfig, trial: int = 0, session_ref: Optional[str] = None
) -> Tuple[SessionTranscript, Dict[str, float]]:
    rng = trial_rng(config.seed, trial)
    world = World.build(config, rng)
    ref = session_ref if session_ref is not None else f"session-{trial:05d}"
    return run_toll_session(world, ref)


def run_trials(config: ScenarioConfig) -> TrialResults:
    """config.trials independent sessions, a fresh world per trial."""
    config.validate()
    samples: List[PhaseSample] = []
    transcripts: List[SessionTranscript] = []
    for trial in range(config.trials):
        transcript, durations = run_single_session(config, trial)
        transcripts.append(transcript)
        for phase in BASE_PHASES:
            if phase in durations:
                samples.append(PhaseSample(trial, phase, durations[phase]))
        if all(phase in durations for phase in CREDENTIAL_PARTS):
            samples.append(
                PhaseSample(
                    trial,
                    "credential_total",
                    sum(durations[p] for p in CREDENTIAL_PARTS),
                )
            )
        if all(phase in durations for phase in PAYMENT_PARTS):
            samples.append(
                PhaseSample(trial, "payment_total", sum(durations[p] for p in PAYMENT_PARTS))
            )
        if all(phase in durations for phase in BASE_PHASES):
            samples.append(
                PhaseSample(trial, "session_total", sum(durations[p] for p in BASE_PHASES))
            )
    return TrialResults(config=config, samples=samples, transcripts=transcripts)


def cdf(samples: Iterable[PhaseSample], phase: str) -> List[Tuple[float, float]]:
    """Empirical CDF points for one phase; the last fraction is exactly 1.0."""
    values = [s.elapsed_s for s in samples if s.phase == phase]
    if not values:
        raise EmptySamples(f"no samples for phase {phase!r}")
    return ecdf_points(values)


def ecdf_points(values: Sequence[float]) -> List[Tuple[float, float]]:
    if not values:
        raise EmptySamples("empty sample set")
    n = len(values)
    points: List[Tuple[float, float]] = []
    for i, value in enumerate(sorted(values), start=1):
        fraction = i / n
        if points and points[-1][0] == value:
            points[-1] = (value, fraction)
        else:
            points.append((value, fraction))
    return points


def percentile(values: Sequence[float], q: float) -> float:
    """Nearest-rank percentile, q in [0, 1]."""
    if not values:
        raise EmptySamples("empty sample set")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be within [0, 1]")
    ordered = sorted(values)
    index = min(len(ordered) - 1, max(0, math.ceil(q * len(ordered)) - 1))
    return ordered[index]


@dataclass(frozen=True)
class PhaseStats:
    count: int
    mean: float
    p50: float
    p90: float
    p99: float
    minimum: float
    maximum: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "PhaseStats":
        if not values:
            raise EmptySamples("empty sample set")
        return cls(
            count=len(values),
            mean=sum(values) / len(values),
            p50=percentile(values, 0.50),
            p90=percentile(values, 0.90),
            p99=percentile(values, 0.99),
            minimum=min(values),
            maximum=max(values),
        )

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "p50": self.p50,
            "p90": self.p90,
            "p99": self.p99,
            "min": self.minimum,
            "max": self.maximum,
        }


@dataclass
class FeasibilityReport:
    window_s: float
    trials: int
    phases: Dict[str, PhaseStats]
    fraction_within_window: float
    margin_s: float

    @property
    def total_mean_s(self) -> float:
        return self.phases["session_total"].mean

    def to_dict(self) -> dict:
        return {
            "window_s": self.window_s,
            "trials": self.trials,
            "fraction_within_window": self.fraction_within_window,
            "margin_s": self.margin_s,
            "total_mean_s": self.total_mean_s,
            "phases": {name: stats.to_dict() for name, stats in sorted(self.phases.items())},
        }


def feasibility_report(samples: Sequence[PhaseSample], window_s: float) -> FeasibilityReport:
    """Aggregate per-phase stats and the window verdict; needs every phase."""
    by_phase: Dict[str, List[float]] = {}
    for sample in samples:
        by_phase.setdefault(sample.phase, []).append(sample.elapsed_s)
    for phase in ALL_PHASES:
        if phase not in by_phase:
            raise MissingPhase(f"samples missing phase {phase!r}")
    totals = by_phase["session_total"]
    within = sum(1 for value in totals if value <= window_s)
    return FeasibilityReport(
        window_s=window_s,
        trials=len(totals),
        phases={name: PhaseStats.of(values) for name, values in by_phase.items()},
        fraction_within_window=within / len(totals),
        margin_s=window_s - percentile(totals, 0.99),
    )


# output files ----------------------------------------------------------------


def sample_file_name(phase: str) -> str:
    return f"samples_{phase}.tsv"


def write_run_outputs(out_dir, results: TrialResults, report: FeasibilityReport) -> List[str]:
    """Write config echo, per-phase samples, transcripts and the report."""
    os.makedirs(out_dir, exist_ok=True)
    written: List[str] = []

    config_path = os.path.join(out_dir, "config.txt")
    with open(config_path, "w", encoding="utf-8") as fh:
        for line in results.config.to_lines():
            fh.write(line + "\n")
    written.append(config_path)

    by_phase: Dict[str, List[PhaseSample]] = {}
    for sample in results.samples:
        by_phase.setdefault(sample.phase, []).append(sample)
    for phase in ALL_PHASES:
        if phase not in by_phase:
            continue
        path = os.path.join(out_dir, sample_file_name(phase))
        with open(path, "w", encoding="utf-8") as fh:
            for sample in by_phase[phase]:
                fh.write(f"{sample.trial}\t{sample.elapsed_s:.9f}\n")
        written.append(path)

    transcripts_path = os.path.join(out_dir, "transcripts.jsonl")
    with open(transcripts_path, "w", encoding="utf-8") as fh:
        for transcript in results.transcripts:
            fh.write(json.dumps(transcript.to_record(), sort_keys=True, separators=(",", ":")))
            fh.write("\n")
    written.append(transcripts_path)

    report_path = os.path.join(out_dir, "report.json")
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    written.append(report_path)
    return written


def read_samples(in_dir) -> List[PhaseSample]:
    samples: List[PhaseSample] = []
    for name in sorted(os.listdir(in_dir)):
        if not name.startswith("samples_") or not name.endswith(".tsv"):
            continue
        phase = name[len("samples_") : -len(".tsv")]
        with open(os.path.join(in_dir, name), "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                trial_text, value_text = line.split("\t")
                samples.append(PhaseSample(int(trial_text), phase, float(value_text)))
    if not samples:
        raise EmptySamples(f"no sample files under {in_dir!r}")
    return samples


def read_transcripts(in_dir) -> List[SessionTranscript]:
    path = os.path.join(in_dir, "transcripts.jsonl")
    transcripts: List[SessionTranscript] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                transcripts.append(SessionTranscript.from_record(json.loads(line)))
    return transcripts


def read_run_config(in_dir) -> ScenarioConfig:
    return ScenarioConfig.from_file(os.path.join(in_dir, "config.txt"))
