"""Acceptance suite: one test per criterion, one PASS/FAIL line each.

The lines collected in RESULTS are echoed in the terminal summary so a full
run shows the per-criterion verdicts at a glance.
"""
import json
import os
import random

import pytest

from cryptotoll import encoding
from cryptotoll.cli import main as cli_main
from cryptotoll.config import ScenarioConfig
from cryptotoll.identity_ledger import (
    CredDefRecord,
    IdentityLedger,
    NymRecord,
    PermissionDenied,
    Role,
    SchemaRecord,
)
from cryptotoll.protocol import ENFORCEMENT, SETTLED, TRANSCRIPT_PHASES, World, run_toll_session
from cryptotoll.sim import feasibility_report, run_trials, window
from cryptotoll import tangle as tangle_mod
from cryptotoll.tangle import (
    SenderKeys,
    TangleState,
    attach_bundle,
    build_value_bundle,
    do_pow,
    validate_pow,
)
from cryptotoll import crypto
from cryptotoll.wallet import (
    ProofRejected,
    ProofRequest,
    UnknownCredDef,
    Wallet,
    create_proof,
    issue_credential,
    proof_fields,
    proof_from_fields,
    verify_proof,
)

RESULTS = []


def record(number: int, description: str, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    line = f"[{verdict}] criterion {number}: {description} — {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def honest_batch():
    """One shared 1000-trial calibrated run for criteria 2-4."""
    config = ScenarioConfig(trials=1000, seed=1)
    results = run_trials(config)
    report = feasibility_report(
        results.samples, window(config.comm_range_m, config.speed_kmh)
    )
    return config, results, report


def within(value: float, target: float, rel: float) -> bool:
    return abs(value - target) <= rel * target


def test_criterion_1_window_arithmetic():
    value = window(600, 130)
    ok = abs(value - 33.23) <= 0.05
    record(1, "window(600 m, 130 km/h) = 33.23 s ± 0.05", ok, f"computed {value:.4f} s")


def test_criterion_2_credential_phase_calibration(honest_batch):
    _, _, report = honest_batch
    checks = {
        "credential_total": (report.phases["credential_total"].mean, 1.0903),
        "handshake": (report.phases["handshake"].mean, 0.1194),
        "gantry_proof": (report.phases["gantry_proof"].mean, 0.4670),
        "user_proof": (report.phases["user_proof"].mean, 0.4659),
    }
    failures = [
        f"{name} {measured*1000:.1f} ms vs {target*1000:.1f} ms"
        for name, (measured, target) in checks.items()
        if not within(measured, target, 0.05)
    ]
    detail = ", ".join(
        f"{name}={measured*1000:.1f}ms (target {target*1000:.1f})"
        for name, (measured, target) in checks.items()
    )
    record(2, "credential phase means within ±5% over 1000 trials", not failures, detail)


def test_criterion_3_payment_phase_calibration(honest_batch):
    _, _, report = honest_batch
    checks = {
        "tip_selection": (report.phases["tip_selection"].mean, 0.43),
        "pow": (report.phases["pow"].mean, 1.02),
        "broadcast": (report.phases["broadcast"].mean, 0.06),
        "payment_total": (report.phases["payment_total"].mean, 1.51),
    }
    failures = [name for name, (measured, target) in checks.items() if not within(measured, target, 0.05)]
    detail = ", ".join(
        f"{name}={measured:.4f}s (target {target})" for name, (measured, target) in checks.items()
    )
    record(3, "payment phase means within ±5% over 1000 trials", not failures, detail)


def test_criterion_4_end_to_end_window(honest_batch):
    _, _, report = honest_batch
    mean_ok = within(report.total_mean_s, 2.6, 0.05)
    all_within = report.fraction_within_window == 1.0
    detail = (
        f"mean={report.total_mean_s:.4f}s (target 2.6 ± 5%), "
        f"{report.fraction_within_window * 100:.1f}% of {report.trials} trials "
        f"within {report.window_s:.2f}s, margin={report.margin_s:.2f}s"
    )
    record(4, "session mean 2.6 s ± 5% and 100% of trials inside the window", mean_ok and all_within, detail)


def test_criterion_5_pow_attempts_geometric():
    runs = 500
    rng = random.Random(2024)
    details = []
    ok = True
    for difficulty in (8, 12, 16):
        total = 0
        for i in range(runs):
            contents = f"acceptance-pow-{difficulty}-{i}-{rng.getrandbits(64)}".encode()
            total += do_pow(contents, difficulty) + 1
        mean = total / runs
        expected = 2**difficulty
        ok = ok and within(mean, expected, 0.25)
        details.append(f"d={difficulty}: mean {mean:.0f} vs 2^{difficulty}={expected}")
    record(5, "live PoW mean attempts within ±25% of 2^d over 500 runs", ok, "; ".join(details))


def test_criterion_6_tangle_invariants_bulk():
    rng = random.Random(606)
    stores = [crypto.KeyStore() for _ in range(3)]
    senders = [
        SenderKeys(keystore=store, keypair=store.generate_keypair(bytes([60 + i]) * 32))
        for i, store in enumerate(stores)
    ]
    state = TangleState.genesis({s.address: 100_000 for s in senders})
    supply = state.total_supply()
    attaches = 10_000
    difficulty = 4
    violations = []

    def full_tip_scan():
        referenced = set()
        for tx in state.transactions.values():
            if tx.trunk_ref:
                referenced.add(tx.trunk_ref)
            if tx.branch_ref:
                referenced.add(tx.branch_ref)
        return set(state.transactions) - referenced

    for step in range(attaches):
        sender = senders[rng.randrange(3)]
        recipient = rng.choice([s.address for s in senders] + ["addr-external"])
        bundle = build_value_bundle(
            sender, sender.address, recipient, rng.randint(1, 3), f"{step:032x}", float(step)
        )
        attached = attach_bundle(state, bundle, difficulty, rng)
        if sum(tx.value for tx in attached.transactions) != 0:
            violations.append(f"step {step}: bundle does not sum to zero")
        if sum(state.balances.values()) != supply:
            violations.append(f"step {step}: balance sum drifted")
        if (step + 1) % 1000 == 0 and state.tips != full_tip_scan():
            violations.append(f"step {step}: tip set diverged from brute force")

    if state.tips != full_tip_scan():
        violations.append("final tip set diverged from brute force")
    for tx in state.transactions.values():
        if tx.id == state.genesis_id:
            continue
        if not tx.trunk_ref or not tx.branch_ref:
            violations.append(f"{tx.id[:12]}: outdegree below 2")
        elif tx.trunk_ref not in state.transactions or tx.branch_ref not in state.transactions:
            violations.append(f"{tx.id[:12]}: dangling approval reference")
        if not validate_pow(tx, state.attach_difficulty[tx.id]):
            violations.append(f"{tx.id[:12]}: stored PoW fails revalidation")
    for bundle_hash in list(state._bundles):
        if bundle_hash == tangle_mod.GENESIS_BUNDLE:
            continue
        members = state.bundle(bundle_hash).transactions
        if sum(tx.value for tx in members) != 0:
            violations.append(f"bundle {bundle_hash[:12]} does not sum to zero")

    detail = (
        f"{attaches} attaches, {len(state.transactions)} transactions, "
        f"{len(state.tips)} tips, {len(violations)} violations"
    )
    record(6, "tangle invariants hold after 10000 randomized attaches", not violations, detail)
    assert violations == []


def _random_identity_universe(rng):
    trustee = Wallet(label="trustee", rng=rng)
    t_did, t_verkey = trustee.create_did()
    ledger = IdentityLedger.genesis(t_did, encoding.hexb(t_verkey))
    issuer = Wallet(label="issuer", rng=rng)
    i_did, i_verkey = issuer.create_did()
    ledger.submit(
        NymRecord(did=i_did, verkey=encoding.hexb(i_verkey), role=Role.TRUST_ANCHOR, submitter_did=""),
        t_did,
    )
    return ledger, issuer, i_did


def test_criterion_7_identity_suite():
    rng = random.Random(707)
    ledger, issuer, issuer_did = _random_identity_universe(rng)

    accepted = 0
    rejected = 0
    round_trips = 1000
    for i in range(round_trips):
        attr_names = tuple(f"attr{j}_{i % 7}" for j in range(rng.randint(2, 6)))
        schema_seq = ledger.submit(
            SchemaRecord(name=f"schema{i}", version="1.0", attribute_names=attr_names, issuer_did=issuer_did),
            issuer_did,
        )
        issuer_signing_did = issuer.first_did()
        cred_def_seq = ledger.submit(
            CredDefRecord(
                schema_ref=schema_seq,
                issuer_did=issuer_did,
                issuer_signing_verkey=encoding.hexb(issuer.verkey_of(issuer_signing_did)),
            ),
            issuer_did,
        )
        holder = Wallet(label=f"holder{i}", rng=rng)
        holder.create_did()
        holder.create_master_secret()
        attributes = {name: f"value-{rng.getrandbits(32):08x}" for name in attr_names}
        credential = issue_credential(issuer, ledger, cred_def_seq, attributes, holder.holder_commitment())
        holder.store_credential(credential, issuer_did)

        reveal_count = rng.randint(1, len(attr_names))
        request = ProofRequest(
            name="acceptance",
            requested_attributes=tuple(rng.sample(list(attr_names), reveal_count)),
            accepted_issuers=(issuer_did,),
            request_nonce=encoding.hexb(crypto.new_nonce(rng)),
        )
        proof = create_proof(holder, request)
        revealed = verify_proof(ledger, request, proof)
        if revealed == {name: attributes[name] for name in request.requested_attributes}:
            accepted += 1

        # single-field mutation: pick one field, damage it, expect rejection
        fields = proof_fields(proof)
        field = rng.choice(sorted(fields))
        mutated = {k: (dict(v) if isinstance(v, dict) else v) for k, v in fields.items()}
        if field == "revealed":
            name = rng.choice(sorted(mutated["revealed"]))
            mutated["revealed"][name] = mutated["revealed"][name] + "-tampered"
        elif field == "attr_digests":
            name = rng.choice(sorted(mutated["attr_digests"]))
            digest = mutated["attr_digests"][name]
            mutated["attr_digests"][name] = ("0" if digest[0] != "0" else "1") + digest[1:]
        elif field == "cred_def_ref":
            mutated["cred_def_ref"] = 1  # genesis NYM, not a cred def
        elif field in ("issuer_signature", "holder_signature", "request_nonce", "holder_verkey", "holder_binding"):
            value = mutated[field]
            mutated[field] = ("0" if value[0] != "0" else "1") + value[1:]
        try:
            verify_proof(ledger, request, proof_from_fields(mutated))
        except (ProofRejected, UnknownCredDef):
            rejected += 1

    # full permission matrix against the declared hierarchy
    matrix_ok = True
    roles = (Role.TRUSTEE, Role.STEWARD, Role.TRUST_ANCHOR, Role.IDENTITY_OWNER)
    for submitter_role in roles:
        for target_role in roles:
            m_ledger = IdentityLedger.genesis("did:t", "00" * 64)
            for role in (Role.STEWARD, Role.TRUST_ANCHOR, Role.IDENTITY_OWNER):
                m_ledger.submit(
                    NymRecord(did=f"did:{role.value}", verkey="11" * 64, role=role, submitter_did=""),
                    "did:t",
                )
            submitter_did = "did:t" if submitter_role is Role.TRUSTEE else f"did:{submitter_role.value}"
            expected = submitter_role.rank >= Role.TRUST_ANCHOR.rank and (
                submitter_role is Role.TRUSTEE or target_role.rank < submitter_role.rank
            )
            nym = NymRecord(did="did:new", verkey="22" * 64, role=target_role, submitter_did="")
            try:
                m_ledger.submit(nym, submitter_did)
                outcome = True
            except PermissionDenied:
                outcome = False
            matrix_ok = matrix_ok and (outcome == expected)

    ok = accepted == round_trips and rejected == round_trips and matrix_ok
    detail = (
        f"{accepted}/{round_trips} round trips accepted, "
        f"{rejected}/{round_trips} mutations rejected, matrix={'ok' if matrix_ok else 'MISMATCH'}"
    )
    record(7, "identity round trips, mutations and permission matrix", ok, detail)


def _transcript_is_well_formed(transcript) -> bool:
    if transcript.status not in (SETTLED, ENFORCEMENT):
        return False
    order = [transcript.phase_at[p] for p in TRANSCRIPT_PHASES if p in transcript.phase_at]
    if any(later < earlier for earlier, later in zip(order, order[1:])):
        return False
    if transcript.status == SETTLED:
        if transcript.settled_at is None or transcript.payment is None:
            return False
        if transcript.enforcement is not None:
            return False
    else:
        if transcript.enforcement is None or transcript.settled_at is not None:
            return False
        if transcript.enforcement.missed_at < 0:
            return False
    try:
        encoding.canonical_bytes(transcript.to_record())
    except (TypeError, ValueError):
        return False
    return True


def test_criterion_8_fault_robustness():
    spec_faults = (
        "no_user_credential",
        "bad_payment_nonce",
        "insufficient_balance",
        "unresponsive_peer",
        "tampered_channel",
    )
    triple_faults = ("bad_payment_nonce", "wrong_payment_amount", "wrong_payment_address")
    seeds = 200
    sessions = 0
    malformed = 0
    triple_not_enforced = 0

    for fault in spec_faults + ("wrong_payment_amount", "wrong_payment_address"):
        for k in range(seeds):
            config = ScenarioConfig(fault=fault, seed=5000 + k)
            world = World.build(config, random.Random(f"{config.seed}:0"))
            transcript, _ = run_toll_session(world, f"acc8-{fault}-{k}")
            sessions += 1
            if not _transcript_is_well_formed(transcript):
                malformed += 1
            if fault in triple_faults and transcript.status != ENFORCEMENT:
                triple_not_enforced += 1

    ok = malformed == 0 and triple_not_enforced == 0
    detail = (
        f"{sessions} sessions over {len(spec_faults) + 2} faults x {seeds} seeds, "
        f"{malformed} malformed transcripts, "
        f"{triple_not_enforced} unenforced settlement-triple mismatches"
    )
    record(8, "every faulty session terminates cleanly; triple mismatch enforces", ok, detail)


def test_criterion_9_byte_identical_reruns(tmp_path):
    config_path = tmp_path / "scenario.cfg"
    config_path.write_text("trials = 40\nseed = 77\n", encoding="utf-8")
    out_a, out_b = str(tmp_path / "a"), str(tmp_path / "b")
    rc_a = cli_main(["run", "--config", str(config_path), "--out", out_a])
    rc_b = cli_main(["run", "--config", str(config_path), "--out", out_b])
    mismatched = []
    names = sorted(os.listdir(out_a))
    if names != sorted(os.listdir(out_b)):
        mismatched.append("file sets differ")
    else:
        for name in names:
            with open(os.path.join(out_a, name), "rb") as fa, open(os.path.join(out_b, name), "rb") as fb:
                if fa.read() != fb.read():
                    mismatched.append(name)
    ok = rc_a == 0 and rc_b == 0 and not mismatched
    detail = f"{len(names)} files compared, mismatches: {mismatched or 'none'}"
    record(9, "fixed config+seed reruns are byte-identical", ok, detail)
