"""Toll session orchestration: announcement, channel, mutual proofs, payment.

Flow per vehicle pass: the gantry announces itself in plaintext; the user
either reuses a remembered pairwise relationship for the announced location
(encrypted ping, pong echoes the nonce) or runs a fresh two-message
handshake; the user validates the gantry's tolling credential and aborts if
it fails; the gantry validates the user's client credential, a failure being
recorded as evidence rather than aborting; if both proofs verified the
gantry sends the payment request (amount from the rate table, its payment
address, a fresh nonce); the user attaches a three-transaction bundle whose
credit fragment carries that nonce and broadcasts it; the operator polls its
own node for the (address, nonce, amount) triple until the deadline and the
session ends Settled or with an EnforcementRecord.

Honest-path wire traffic is fixed: 1 announcement + 2 handshake messages +
2 per proof exchange + 1 payment request = 8 point-to-point messages, plus
1 payment-bundle broadcast. Gantry-to-operator handoff is backhaul and not
counted.

Transcript records are one canonical JSON object per session with keys:
session, status (settled|enforcement), channel_mode (new|reused), direction,
phases (name -> completion time), gantry_proof_ok, user_proof_ok,
gantry_attributes, user_attributes, payment {amount, pay_to, nonce},
settled_at, enforcement {plate, payment_nonce, missed_at, evidence},
failure.
"""
from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from . import channel as channel_mod
from . import crypto, encoding, tangle, wallet as wallet_mod
from .channel import (
    AuthFailure,
    ChannelError,
    ConnectionRequest,
    PairwiseChannel,
    PeerUnresponsive,
    complete_connection,
    haversine_m,
    initiate_connection,
    lookup_known_peer,
    reestablish,
    respond_connection,
)
from .config import ScenarioConfig
from .identity_ledger import IdentityLedger, NymRecord, Role, SchemaRecord, CredDefRecord
from .latency import LatencyModel
from .network import SimClock, SimNetwork
from .tangle import SenderKeys, TangleNetwork, TangleState
from .wallet import (
    NoMatchingCredential,
    ProofRejected,
    ProofRequest,
    Wallet,
    create_proof,
    issue_credential,
    proof_fields,
    proof_from_fields,
    proof_request_fields,
    proof_request_from_fields,
    verify_proof,
)

GANTRY_SCHEMA_NAME = "tolling-charge"
GANTRY_SCHEMA_VERSION = "1.0"
GANTRY_ATTRIBUTES: Tuple[str, ...] = ("name", "localization", "identifier_code")

USER_SCHEMA_NAME = "client-identification"
USER_SCHEMA_VERSION = "1.0"
USER_ATTRIBUTES: Tuple[str, ...] = ("name", "vat_number", "vehicle_plate")

HONEST_PATH_MESSAGES = 8
HONEST_PATH_BROADCASTS = 1

SETTLED = "settled"
ENFORCEMENT = "enforcement"


class ProtocolError(Exception):
    pass


class UnknownVehicleClass(ProtocolError):
    pass


class _Abort(Exception):
    """Internal: ends the session early; maps to an enforcement transcript."""

    def __init__(self, reason: str) -> None:
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class RateTable:
    rates: Dict[str, int]

    def amount_for(self, vehicle_class: str) -> int:
        try:
            return self.rates[vehicle_class]
        except KeyError:
            raise UnknownVehicleClass(f"no rate for vehicle class {vehicle_class!r}") from None


@dataclass(frozen=True)
class Announcement:
    gantry_label: str
    location: Tuple[float, float]
    interval_s: float

    def to_bytes(self) -> bytes:
        return encoding.canonical_bytes(
            {
                "type": "announce",
                "gantry": self.gantry_label,
                "lat": self.location[0],
                "lon": self.location[1],
                "interval_s": self.interval_s,
            }
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "Announcement":
        obj = encoding.decode_record(data)
        if obj.get("type") != "announce":
            raise ProtocolError("not an announcement")
        return cls(
            gantry_label=obj["gantry"],
            location=(float(obj["lat"]), float(obj["lon"])),
            interval_s=float(obj["interval_s"]),
        )


@dataclass(frozen=True)
class PaymentRequest:
    amount: int
    pay_to: str
    payment_nonce: str  # hex


@dataclass(frozen=True)
class EnforcementRecord:
    session_ref: str
    plate: Optional[str]
    payment_nonce: Optional[str]
    missed_at: float
    evidence: str = "camera-capture"


@dataclass
class SessionTranscript:
    session_ref: str
    direction: str
    status: str = ENFORCEMENT
    channel_mode: str = "new"
    phase_at: Dict[str, float] = field(default_factory=dict)
    gantry_proof_ok: bool = False
    user_proof_ok: bool = False
    gantry_attributes: Optional[Dict[str, str]] = None
    user_attributes: Optional[Dict[str, str]] = None
    payment: Optional[Dict[str, object]] = None
    settled_at: Optional[float] = None
    enforcement: Optional[EnforcementRecord] = None
    failure: Optional[str] = None

    def to_record(self) -> dict:
        enforcement = None
        if self.enforcement is not None:
            enforcement = {
                "plate": self.enforcement.plate,
                "payment_nonce": self.enforcement.payment_nonce,
                "missed_at": self.enforcement.missed_at,
                "evidence": self.enforcement.evidence,
            }
        return {
            "session": self.session_ref,
            "status": self.status,
            "channel_mode": self.channel_mode,
            "direction": self.direction,
            "phases": dict(sorted(self.phase_at.items())),
            "gantry_proof_ok": self.gantry_proof_ok,
            "user_proof_ok": self.user_proof_ok,
            "gantry_attributes": self.gantry_attributes,
            "user_attributes": self.user_attributes,
            "payment": self.payment,
            "settled_at": self.settled_at,
            "enforcement": enforcement,
            "failure": self.failure,
        }

    @classmethod
    def from_record(cls, obj: dict) -> "SessionTranscript":
        enforcement = None
        if obj.get("enforcement") is not None:
            e = obj["enforcement"]
            enforcement = EnforcementRecord(
                session_ref=obj["session"],
                plate=e["plate"],
                payment_nonce=e["payment_nonce"],
                missed_at=e["missed_at"],
                evidence=e["evidence"],
            )
        return cls(
            session_ref=obj["session"],
            direction=obj["direction"],
            status=obj["status"],
            channel_mode=obj["channel_mode"],
            phase_at=dict(obj["phases"]),
            gantry_proof_ok=obj["gantry_proof_ok"],
            user_proof_ok=obj["user_proof_ok"],
            gantry_attributes=obj["gantry_attributes"],
            user_attributes=obj["user_attributes"],
            payment=obj["payment"],
            settled_at=obj["settled_at"],
            enforcement=enforcement,
            failure=obj["failure"],
        )


# transcript phase labels, in protocol order
TRANSCRIPT_PHASES = (
    "trigger",
    "channel",
    "gantry_proof",
    "user_proof",
    "payment_request",
    "payment_attach",
    "settlement",
)


def format_localization(location: Tuple[float, float]) -> str:
    return f"{location[0]:.6f},{location[1]:.6f}"


def parse_localization(text: str) -> Tuple[float, float]:
    try:
        lat, lon = text.split(",")
        return (float(lat), float(lon))
    except (ValueError, TypeError):
        raise ProtocolError(f"bad localization attribute {text!r}") from None


@dataclass
class OperatorAgent:
    wallet: Wallet
    did: str
    gantry_cred_def_ref: int = 0
    user_cred_def_ref: int = 0


@dataclass
class GantryAgent:
    wallet: Wallet
    label: str
    location: Tuple[float, float]
    endpoint: str
    payment_keys: SenderKeys
    rate_table: RateTable
    verinym: str = ""
    responsive: bool = True
    channel: Optional[PairwiseChannel] = None


@dataclass
class UserAgent:
    wallet: Wallet
    endpoint: str
    gps_location: Tuple[float, float]
    payment_keys: SenderKeys
    verinym: str = ""
    channel: Optional[PairwiseChannel] = None


class _Meter:
    """Charges compute knobs to the clock: sampled, or measured when live."""

    def __init__(self, latency: LatencyModel, rng, clock: SimClock) -> None:
        self.latency = latency
        self.rng = rng
        self.clock = clock

    def charge(self, knob: str) -> None:
        spec = self.latency.knob(knob)
        if spec.kind != "live":
            self.clock.advance(spec.sample(self.rng))

    def run(self, knob: str, fn, *args, **kwargs):
        spec = self.latency.knob(knob)
        if spec.kind != "live":
            return fn(*args, **kwargs)
        start = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        finally:
            self.clock.advance(max(0.0, time.perf_counter() - start))


@dataclass
class World:
    config: ScenarioConfig
    rng: object
    clock: SimClock
    net: SimNetwork
    meter: _Meter
    ledger: IdentityLedger
    node: TangleState
    operator_view: TangleState
    tangle_net: TangleNetwork
    operator: OperatorAgent
    gantry: GantryAgent
    user: UserAgent
    decoy_address: str = ""

    @classmethod
    def build(cls, config: ScenarioConfig, rng) -> "World":
        config.validate()
        latency = config.effective_latency()
        clock = SimClock()
        net = SimNetwork(clock, latency.network_one_way, rng)
        meter = _Meter(latency, rng, clock)

        def seed() -> bytes:
            return rng.getrandbits(8 * crypto.SEED_BYTES).to_bytes(crypto.SEED_BYTES, "big")

        trustee_wallet = Wallet("trustee", rng=rng)
        trustee_did, trustee_verkey = trustee_wallet.create_did(seed())
        ledger = IdentityLedger.genesis(trustee_did, encoding.hexb(trustee_verkey))

        operator_wallet = Wallet("operator", rng=rng)
        operator_did, operator_verkey = operator_wallet.create_did(seed())
        ledger.submit(
            NymRecord(
                did=operator_did,
                verkey=encoding.hexb(operator_verkey),
                role=Role.TRUST_ANCHOR,
                submitter_did=trustee_did,
            ),
            submitter_did=trustee_did,
        )
        operator = OperatorAgent(wallet=operator_wallet, did=operator_did)

        gantry_schema_ref = ledger.submit(
            SchemaRecord(
                name=GANTRY_SCHEMA_NAME,
                version=GANTRY_SCHEMA_VERSION,
                attribute_names=GANTRY_ATTRIBUTES,
                issuer_did=operator_did,
            ),
            submitter_did=operator_did,
        )
        user_schema_ref = ledger.submit(
            SchemaRecord(
                name=USER_SCHEMA_NAME,
                version=USER_SCHEMA_VERSION,
                attribute_names=USER_ATTRIBUTES,
                issuer_did=operator_did,
            ),
            submitter_did=operator_did,
        )
        operator.gantry_cred_def_ref = ledger.submit(
            CredDefRecord(
                schema_ref=gantry_schema_ref,
                issuer_did=operator_did,
                issuer_signing_verkey=encoding.hexb(operator_verkey),
            ),
            submitter_did=operator_did,
        )
        operator.user_cred_def_ref = ledger.submit(
            CredDefRecord(
                schema_ref=user_schema_ref,
                issuer_did=operator_did,
                issuer_signing_verkey=encoding.hexb(operator_verkey),
            ),
            submitter_did=operator_did,
        )

        gantry_wallet = Wallet("gantry", rng=rng)
        gantry_verinym, gantry_verkey = gantry_wallet.create_did(seed())
        ledger.submit(
            NymRecord(
                did=gantry_verinym,
                verkey=encoding.hexb(gantry_verkey),
                role=Role.IDENTITY_OWNER,
                submitter_did=operator_did,
            ),
            submitter_did=operator_did,
        )
        user_wallet = Wallet("user", rng=rng)
        user_verinym, user_verkey = user_wallet.create_did(seed())
        ledger.submit(
            NymRecord(
                did=user_verinym,
                verkey=encoding.hexb(user_verkey),
                role=Role.IDENTITY_OWNER,
                submitter_did=operator_did,
            ),
            submitter_did=operator_did,
        )

        gantry_wallet.create_master_secret()
        user_wallet.create_master_secret()

        gantry_location = config.gantry_location
        gantry_credential = issue_credential(
            operator_wallet,
            ledger,
            operator.gantry_cred_def_ref,
            {
                "name": config.gantry_name,
                "localization": format_localization(gantry_location),
                "identifier_code": config.gantry_id,
            },
            gantry_wallet.holder_commitment(),
        )
        gantry_wallet.store_credential(gantry_credential, issuer_did=operator_did)

        if config.fault != "no_user_credential":
            user_credential = issue_credential(
                operator_wallet,
                ledger,
                operator.user_cred_def_ref,
                {
                    "name": config.user_name,
                    "vat_number": config.user_vat,
                    "vehicle_plate": config.user_plate,
                },
                user_wallet.holder_commitment(),
            )
            user_wallet.store_credential(user_credential, issuer_did=operator_did)

        user_payment_keys = SenderKeys(user_wallet.keystore, user_wallet.keystore.generate_keypair(seed()))
        gantry_payment_keys = SenderKeys(
            gantry_wallet.keystore, gantry_wallet.keystore.generate_keypair(seed())
        )
        decoy_keys = SenderKeys(user_wallet.keystore, user_wallet.keystore.generate_keypair(seed()))

        funds = 0 if config.fault == "insufficient_balance" else config.user_funds
        allocations = {user_payment_keys.address: funds}
        node = TangleState.genesis(allocations)
        operator_view = TangleState.genesis(allocations)
        tangle_net = TangleNetwork(
            clock,
            latency.broadcast,
            rng,
            peers=[operator_view],
            difficulty_bits=config.difficulty_bits,
        )

        # user GPS sits a small offset north of the gantry, within epsilon
        user_gps = (
            gantry_location[0] + config.user_offset_m / 111320.0,
            gantry_location[1],
        )

        gantry = GantryAgent(
            wallet=gantry_wallet,
            label=config.gantry_name,
            location=gantry_location,
            endpoint="gantry",
            payment_keys=gantry_payment_keys,
            rate_table=RateTable(dict(config.rate_table)),
            verinym=gantry_verinym,
        )
        user = UserAgent(
            wallet=user_wallet,
            endpoint="user",
            gps_location=user_gps,
            payment_keys=user_payment_keys,
            verinym=user_verinym,
        )

        world = cls(
            config=config,
            rng=rng,
            clock=clock,
            net=net,
            meter=meter,
            ledger=ledger,
            node=node,
            operator_view=operator_view,
            tangle_net=tangle_net,
            operator=operator,
            gantry=gantry,
            user=user,
            decoy_address=decoy_keys.address,
        )

        if config.reuse_channel or config.fault == "unresponsive_peer":
            world._pre_establish()
        if config.fault == "unresponsive_peer":
            gantry.responsive = False
        if config.fault == "tampered_channel":
            # corrupt one encrypted post-handshake message (sends 4..8)
            net.corrupt_send_index = rng.randint(4, 8)
        return world

    def _pre_establish(self) -> None:
        """Create a remembered relationship without touching clock or network."""
        request = initiate_connection(self.user.wallet, self.rng)
        frame, _ = respond_connection(self.gantry.wallet, request, now=self.clock.now)
        complete_connection(
            self.user.wallet,
            frame,
            now=self.clock.now,
            peer_location=self.gantry.location,
        )


def _channel_for(wallet: Wallet, record, world: World, local: str, remote: str) -> PairwiseChannel:
    return PairwiseChannel(wallet, record, network=world.net, local=local, remote=remote)


def _expect_delivery(world: World, endpoint: str, context: str):
    delivery = world.net.recv(endpoint)
    if delivery is None:
        raise _Abort(f"{context}: expected message never arrived")
    return delivery


def _establish_channel(world: World, announcement: Announcement) -> str:
    """Returns 'reused' or 'new'; leaves bound channels on both agents."""
    config = world.config
    user, gantry = world.user, world.gantry
    meter = world.meter

    record = lookup_known_peer(user.wallet.pairwise, user.gps_location, config.epsilon_m)
    if record is not None:
        user_channel = _channel_for(user.wallet, record, world, user.endpoint, gantry.endpoint)
        gantry_record = gantry.wallet.pairwise.get(record.my_did)

        def pump() -> None:
            delivery = world.net.recv(gantry.endpoint)
            if delivery is None or not gantry.responsive or gantry_record is None:
                return  # ping dropped
            gantry_channel = _channel_for(
                gantry.wallet, gantry_record, world, gantry.endpoint, user.endpoint
            )
            channel_mod.answer_ping(gantry_channel, delivery.payload)

        try:
            reestablish(user_channel, world.rng, config.reestablish_timeout_s, pump)
            user.channel = user_channel
            gantry.channel = _channel_for(
                gantry.wallet, gantry_record, world, gantry.endpoint, user.endpoint
            )
            return "reused"
        except PeerUnresponsive:
            pass  # fall back to a fresh handshake

    meter.charge("pairwise_handshake_compute")
    request = meter.run("pairwise_handshake_compute", initiate_connection, user.wallet, world.rng)
    world.net.send(user.endpoint, gantry.endpoint, request.to_bytes())

    delivery = _expect_delivery(world, gantry.endpoint, "handshake")
    parsed = ConnectionRequest.from_bytes(delivery.payload)
    frame, gantry_record = meter.run(
        "pairwise_handshake_compute", respond_connection, gantry.wallet, parsed, world.clock.now
    )
    world.net.send(gantry.endpoint, user.endpoint, frame)

    delivery = _expect_delivery(world, user.endpoint, "handshake")
    user_record = meter.run(
        "pairwise_handshake_compute",
        complete_connection,
        user.wallet,
        delivery.payload,
        world.clock.now,
        announcement.location,
    )
    user.channel = _channel_for(user.wallet, user_record, world, user.endpoint, gantry.endpoint)
    gantry.channel = _channel_for(gantry.wallet, gantry_record, world, gantry.endpoint, user.endpoint)
    return "new"


def _recv_channel(world: World, receiver_channel: PairwiseChannel, context: str) -> dict:
    delivery = _expect_delivery(world, receiver_channel.local, context)
    try:
        payload = receiver_channel.decrypt(delivery.payload)
    except AuthFailure as exc:
        raise _Abort(f"{context}: {exc}") from None
    return encoding.decode_record(payload)


def _gantry_proof_exchange(world: World, transcript: SessionTranscript, announcement: Announcement) -> None:
    """User validates the gantry; any failure aborts the session."""
    config = world.config
    meter = world.meter
    meter.charge("proof_compute")

    request = ProofRequest(
        name=GANTRY_SCHEMA_NAME,
        requested_attributes=GANTRY_ATTRIBUTES,
        accepted_issuers=(world.operator.did,),
        request_nonce=encoding.hexb(crypto.new_nonce(world.rng)),
    )
    world.user.channel.send(
        encoding.canonical_bytes({"type": "proof_req", "request": proof_request_fields(request)})
    )

    obj = _recv_channel(world, world.gantry.channel, "gantry proof request")
    gantry_request = proof_request_from_fields(obj["request"])
    try:
        proof = meter.run(
            "proof_compute",
            create_proof,
            world.gantry.wallet,
            gantry_request,
            world.gantry.channel.record.my_did,
        )
    except NoMatchingCredential as exc:
        world.gantry.channel.send(
            encoding.canonical_bytes({"type": "proof_fail", "reason": str(exc)})
        )
        obj = _recv_channel(world, world.user.channel, "gantry proof")
        raise _Abort(f"gantry cannot prove identity: {obj.get('reason')}") from None
    world.gantry.channel.send(encoding.canonical_bytes({"type": "proof", "proof": proof_fields(proof)}))

    obj = _recv_channel(world, world.user.channel, "gantry proof")
    if obj.get("type") != "proof":
        raise _Abort(f"gantry proof refused: {obj.get('reason')}")
    try:
        attributes = meter.run(
            "proof_compute", verify_proof, world.ledger, request, proof_from_fields(obj["proof"])
        )
    except ProofRejected as exc:
        raise _Abort(f"gantry validation failed: {exc}") from None
    announced = announcement.location
    credential_location = parse_localization(attributes["localization"])
    if haversine_m(announced, credential_location) > config.epsilon_m:
        raise _Abort("gantry localization does not match the announcement")
    transcript.gantry_proof_ok = True
    transcript.gantry_attributes = attributes


def _user_proof_exchange(world: World, transcript: SessionTranscript) -> None:
    """Gantry validates the user; failure is recorded, not fatal."""
    meter = world.meter
    meter.charge("proof_compute")

    request = ProofRequest(
        name=USER_SCHEMA_NAME,
        requested_attributes=USER_ATTRIBUTES,
        accepted_issuers=(world.operator.did,),
        request_nonce=encoding.hexb(crypto.new_nonce(world.rng)),
    )
    world.gantry.channel.send(
        encoding.canonical_bytes({"type": "proof_req", "request": proof_request_fields(request)})
    )

    obj = _recv_channel(world, world.user.channel, "user proof request")
    user_request = proof_request_from_fields(obj["request"])
    try:
        proof = meter.run(
            "proof_compute",
            create_proof,
            world.user.wallet,
            user_request,
            world.user.channel.record.my_did,
        )
        world.user.channel.send(
            encoding.canonical_bytes({"type": "proof", "proof": proof_fields(proof)})
        )
    except NoMatchingCredential as exc:
        world.user.channel.send(
            encoding.canonical_bytes({"type": "proof_fail", "reason": str(exc)})
        )

    obj = _recv_channel(world, world.gantry.channel, "user proof")
    if obj.get("type") != "proof":
        transcript.failure = f"user proof refused: {obj.get('reason')}"
        return
    try:
        attributes = meter.run(
            "proof_compute", verify_proof, world.ledger, request, proof_from_fields(obj["proof"])
        )
    except ProofRejected as exc:
        transcript.failure = f"user validation failed: {exc}"
        return
    transcript.user_proof_ok = True
    transcript.user_attributes = attributes


def _send_payment_request(world: World) -> PaymentRequest:
    """Gantry side: build the triple from the rate table and send it."""
    config = world.config
    amount = world.gantry.rate_table.amount_for(config.vehicle_class)
    request = PaymentRequest(
        amount=amount,
        pay_to=world.gantry.payment_keys.address,
        payment_nonce=encoding.hexb(crypto.new_nonce(world.rng)),
    )
    world.gantry.channel.send(
        encoding.canonical_bytes(
            {
                "type": "pay_req",
                "amount": request.amount,
                "pay_to": request.pay_to,
                "payment_nonce": request.payment_nonce,
            }
        )
    )
    return request


def _receive_payment_request(world: World) -> PaymentRequest:
    obj = _recv_channel(world, world.user.channel, "payment request")
    if obj.get("type") != "pay_req":
        raise _Abort("expected a payment request")
    return PaymentRequest(
        amount=int(obj["amount"]),
        pay_to=obj["pay_to"],
        payment_nonce=obj["payment_nonce"],
    )


def _flip_nonce(nonce_hex: str) -> str:
    raw = bytearray(encoding.unhexb(nonce_hex))
    raw[0] ^= 0xFF
    return encoding.hexb(bytes(raw))


def _execute_payment(world: World, received: PaymentRequest, durations: Dict[str, float]) -> bool:
    """User side: tip selection, per-member work, broadcast. False if unpayable."""
    config = world.config
    meter = world.meter
    clock = world.clock

    amount = received.amount
    pay_to = received.pay_to
    nonce = received.payment_nonce
    if config.fault == "bad_payment_nonce":
        nonce = _flip_nonce(nonce)
    elif config.fault == "wrong_payment_amount" and amount > 1:
        amount -= 1
    elif config.fault == "wrong_payment_address":
        pay_to = world.decoy_address

    start = clock.now
    meter.charge("tip_selection")
    tips = meter.run("tip_selection", tangle.tip_select, world.node, world.rng, config.tip_strategy)
    durations["tip_selection"] = clock.now - start

    start = clock.now
    meter.charge("pow")
    try:
        bundle = tangle.build_value_bundle(
            world.user.payment_keys,
            world.user.payment_keys.address,
            pay_to,
            amount,
            nonce,
            timestamp=clock.now,
        )
        attached = meter.run(
            "pow",
            tangle.attach_bundle,
            world.node,
            bundle,
            config.difficulty_bits,
            world.rng,
            tips,
        )
    except tangle.InsufficientBalance as exc:
        durations.pop("tip_selection", None)
        raise _Abort(f"payment failed: {exc}") from None
    durations["pow"] = clock.now - start

    start = clock.now
    world.tangle_net.broadcast(attached)
    durations["broadcast"] = clock.now - start
    return True


def _settle(
    world: World,
    transcript: SessionTranscript,
    request: Optional[PaymentRequest],
    request_at: Optional[float],
) -> None:
    """Operator side: poll for the exact triple until the deadline."""
    config = world.config
    clock = world.clock
    if request is None or request_at is None:
        transcript.status = ENFORCEMENT
        transcript.enforcement = EnforcementRecord(
            session_ref=transcript.session_ref,
            plate=(transcript.user_attributes or {}).get("vehicle_plate"),
            payment_nonce=None,
            missed_at=clock.now,
        )
        transcript.phase_at["settlement"] = clock.now
        return

    deadline = request_at + config.deadline_s
    poll = config.settle_poll_s
    elapsed = clock.now - request_at
    k = int(elapsed // poll) + 1
    found = None
    while True:
        poll_at = request_at + k * poll
        if poll_at > deadline:
            break
        clock.advance(poll_at - clock.now)
        found = tangle.find_payment(
            world.operator_view, request.pay_to, request.payment_nonce, request.amount
        )
        if found is not None:
            break
        k += 1

    if found is not None:
        transcript.status = SETTLED
        transcript.settled_at = clock.now
        transcript.payment = {
            "amount": request.amount,
            "pay_to": request.pay_to,
            "nonce": request.payment_nonce,
        }
    else:
        if clock.now < deadline:
            clock.advance(deadline - clock.now)
        transcript.status = ENFORCEMENT
        transcript.enforcement = EnforcementRecord(
            session_ref=transcript.session_ref,
            plate=(transcript.user_attributes or {}).get("vehicle_plate"),
            payment_nonce=request.payment_nonce,
            missed_at=clock.now,
        )
    transcript.phase_at["settlement"] = clock.now


def run_toll_session(world: World, session_ref: str = "session-0") -> Tuple[SessionTranscript, Dict[str, float]]:
    """One vehicle pass; returns the transcript and per-phase durations."""
    config = world.config
    clock = world.clock
    transcript = SessionTranscript(session_ref=session_ref, direction=config.direction)
    durations: Dict[str, float] = {}

    @contextmanager
    def span(label: str, transcript_phase: Optional[str] = None):
        start = clock.now
        yield
        durations[label] = clock.now - start
        if transcript_phase is not None:
            transcript.phase_at[transcript_phase] = clock.now

    payment_request: Optional[PaymentRequest] = None
    payment_request_at: Optional[float] = None
    try:
        with span("trigger", "trigger"):
            announcement = Announcement(
                gantry_label=world.gantry.label,
                location=world.gantry.location,
                interval_s=config.announce_interval_s,
            )
            world.net.send(world.gantry.endpoint, world.user.endpoint, announcement.to_bytes())
            delivery = _expect_delivery(world, world.user.endpoint, "announcement")
            announcement = Announcement.from_bytes(delivery.payload)

        with span("handshake", "channel"):
            transcript.channel_mode = _establish_channel(world, announcement)

        with span("overhead"):
            clock.advance(config.overhead_s)

        with span("gantry_proof", "gantry_proof"):
            _gantry_proof_exchange(world, transcript, announcement)

        with span("user_proof", "user_proof"):
            _user_proof_exchange(world, transcript)

        if transcript.gantry_proof_ok and transcript.user_proof_ok:
            with span("payment_request", "payment_request"):
                payment_request = _send_payment_request(world)
                payment_request_at = clock.now
                received = _receive_payment_request(world)

            with span("payment_attach", "payment_attach"):
                _execute_payment(world, received, durations)
    except _Abort as exc:
        transcript.failure = str(exc.reason)
    except ChannelError as exc:
        transcript.failure = f"channel error: {exc}"

    _settle(world, transcript, payment_request, payment_request_at)
    return transcript, durations
