import math
import random

import pytest

from cryptotoll.latency import COMPUTE_KNOBS, PHASE_KNOBS, DelaySpec, LatencyError, LatencyModel


def test_spec_string_parse_roundtrip():
    for spec in (
        DelaySpec("constant", 0.25),
        DelaySpec("normal", 0.035, 0.003),
        DelaySpec("lognormal", -0.2, 0.15),
        DelaySpec("live"),
    ):
        assert DelaySpec.parse(spec.spec_string()) == spec


@pytest.mark.parametrize("text", ["gamma:1:2", "normal:1", "constant:a", "live:3", "normal:1:2:3"])
def test_parse_rejects_malformed(text):
    with pytest.raises(LatencyError):
        DelaySpec.parse(text)


def test_unknown_kind_rejected_at_construction():
    with pytest.raises(LatencyError):
        DelaySpec("weibull", 1.0)


def test_samples_are_non_negative_and_match_means():
    rng = random.Random(8)
    n = 20_000
    for spec in (DelaySpec("normal", 0.05, 0.05), DelaySpec("lognormal", -0.5, 0.4)):
        values = [spec.sample(rng) for _ in range(n)]
        assert all(v >= 0.0 for v in values)
        if spec.kind == "lognormal":
            expected = math.exp(spec.a + spec.b**2 / 2)
            assert sum(values) / n == pytest.approx(expected, rel=0.03)
            assert spec.mean == pytest.approx(expected)


def test_constant_and_zero_variance_normal_are_exact():
    rng = random.Random(0)
    assert DelaySpec("constant", 0.42).sample(rng) == 0.42
    assert DelaySpec("normal", 0.035, 0.0).sample(rng) == 0.035


def test_live_neither_samples_nor_reports_mean():
    live = DelaySpec("live")
    with pytest.raises(LatencyError):
        live.sample(random.Random(0))
    with pytest.raises(LatencyError):
        _ = live.mean


def test_calibrated_knob_means():
    model = LatencyModel.calibrated()
    assert model.network_one_way.mean == pytest.approx(0.035)
    assert model.pairwise_handshake_compute.mean == pytest.approx(0.0494)
    assert model.proof_compute.mean == pytest.approx(0.39645)
    assert model.tip_selection.mean == pytest.approx(0.43)
    assert model.pow.mean == pytest.approx(1.02)
    assert model.broadcast.mean == pytest.approx(0.06)
    # phase composition: handshake = 2 legs + compute, proof = 2 legs + compute
    assert 2 * 0.035 + model.pairwise_handshake_compute.mean == pytest.approx(0.1194)
    assert 2 * 0.035 + model.proof_compute.mean == pytest.approx(0.46645)


def test_as_live_flips_only_compute_knobs():
    model = LatencyModel.calibrated()
    live = model.as_live()
    for knob in COMPUTE_KNOBS:
        assert live.knob(knob).kind == "live"
    assert live.network_one_way == model.network_one_way
    assert live.broadcast == model.broadcast


def test_knob_access_and_replacement():
    model = LatencyModel.calibrated()
    assert set(PHASE_KNOBS) == {
        "network_one_way",
        "pairwise_handshake_compute",
        "proof_compute",
        "tip_selection",
        "pow",
        "broadcast",
    }
    changed = model.with_knob("broadcast", DelaySpec("constant", 0.1))
    assert changed.broadcast == DelaySpec("constant", 0.1)
    assert model.broadcast.kind == "normal"  # original untouched
    with pytest.raises(LatencyError):
        model.knob("unknown")
    with pytest.raises(LatencyError):
        model.with_knob("unknown", DelaySpec("live"))
