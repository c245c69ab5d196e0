"""Deterministic simulator for a credential-gated highway tolling exchange.

A vehicle-side wallet and a gantry establish a pairwise encrypted channel,
swap verifiable credential proofs, and settle a micro-payment on a DAG
ledger, all on a simulated clock so the whole exchange can be checked
against the vehicle's communication window.
"""
from .config import FAULT_KINDS, MODES, ConfigError, ScenarioConfig
from .latency import DelaySpec, LatencyModel
from .protocol import (
    ENFORCEMENT,
    SETTLED,
    EnforcementRecord,
    PaymentRequest,
    SessionTranscript,
    World,
    run_toll_session,
)
from .sim import (
    FeasibilityReport,
    PhaseSample,
    TrialResults,
    cdf,
    feasibility_report,
    run_single_session,
    run_trials,
    window,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DelaySpec",
    "ENFORCEMENT",
    "EnforcementRecord",
    "FAULT_KINDS",
    "FeasibilityReport",
    "LatencyModel",
    "MODES",
    "PaymentRequest",
    "PhaseSample",
    "ScenarioConfig",
    "SETTLED",
    "SessionTranscript",
    "TrialResults",
    "World",
    "cdf",
    "feasibility_report",
    "run_single_session",
    "run_toll_session",
    "run_trials",
    "window",
    "__version__",
]
