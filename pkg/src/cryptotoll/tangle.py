"""DAG payment ledger: bundles, tip selection, proof-of-work, broadcast.

A value transfer is a three-transaction bundle in fixed order: debit
(-amount at the sender address), credit (+amount at the receiver, its
message fragment carrying the correlation nonce), and a zero-value
debit-signature transaction holding the sender's signature material. Bundle
members chain trunk-wise to each other and the last member anchors to the
two tips chosen by a single two-run tip selection, so every non-genesis
vertex approves exactly two transactions (trunk and branch, possibly equal).

Proof-of-work is per transaction: the digest of the transaction contents
concatenated with the work nonce must end in at least `difficulty_bits` zero
bits, and that digest doubles as the transaction id. Confirmation,
reattachment and promotion are out of scope.
"""
from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

from . import crypto, encoding
from .crypto import KeyPair, KeyStore
from .latency import DelaySpec
from .network import SimClock


class TangleError(Exception):
    pass


class NonPositiveAmount(TangleError):
    pass


class InsufficientBalance(TangleError):
    pass


class BadDebitSignature(TangleError):
    pass


class UnknownReference(TangleError):
    pass


_ADDR_TRUNC_BYTES = 16


def address_from_verkey(verkey: bytes) -> str:
    digest = crypto.hash_bytes(b"pay-addr:" + verkey)
    token = base64.b32encode(digest[:_ADDR_TRUNC_BYTES]).decode("ascii")
    return token.rstrip("=").lower()


@dataclass(frozen=True)
class SenderKeys:
    """Signing capability for a payment address."""

    keystore: KeyStore
    keypair: KeyPair

    @property
    def address(self) -> str:
        return address_from_verkey(self.keypair.verkey)


@dataclass(frozen=True)
class TangleTx:
    id: str  # hex digest; equals the winning proof-of-work digest
    trunk_ref: str
    branch_ref: str
    address: str
    value: int
    signature_message_fragment: str  # hex
    bundle_hash: str  # hex
    pow_nonce: int
    timestamp: float


@dataclass(frozen=True)
class Bundle:
    transactions: Tuple[TangleTx, ...]  # [debit, credit, debit-signature]
    bundle_hash: str

    @property
    def debit(self) -> TangleTx:
        return self.transactions[0]

    @property
    def credit(self) -> TangleTx:
        return self.transactions[1]

    @property
    def debit_signature(self) -> TangleTx:
        return self.transactions[2]

    @property
    def attached(self) -> bool:
        return all(tx.id for tx in self.transactions)


def tx_contents(tx: TangleTx) -> bytes:
    return encoding.canonical_bytes(
        {
            "address": tx.address,
            "value": tx.value,
            "fragment": tx.signature_message_fragment,
            "bundle_hash": tx.bundle_hash,
            "trunk": tx.trunk_ref,
            "branch": tx.branch_ref,
            "timestamp": tx.timestamp,
        }
    )


def _meets_difficulty(digest: bytes, difficulty_bits: int) -> bool:
    if difficulty_bits <= 0:
        return True
    mask = (1 << difficulty_bits) - 1
    return int.from_bytes(digest, "big") & mask == 0


def do_pow(contents: bytes, difficulty_bits: int) -> int:
    """Smallest nonce whose digest ends in `difficulty_bits` zero bits.

    The search starts at zero, so the attempt count is nonce + 1; over random
    contents the count is geometric with mean about 2**difficulty_bits.
    """
    if difficulty_bits < 0:
        raise ValueError("difficulty must be non-negative")
    base = hashlib.sha256(contents)
    nonce = 0
    while True:
        trial = base.copy()
        trial.update(nonce.to_bytes(8, "big"))
        if _meets_difficulty(trial.digest(), difficulty_bits):
            return nonce
        nonce += 1


def pow_digest(contents: bytes, nonce: int) -> bytes:
    trial = hashlib.sha256(contents)
    trial.update(nonce.to_bytes(8, "big"))
    return trial.digest()


def validate_pow(tx: TangleTx, difficulty_bits: int) -> bool:
    digest = pow_digest(tx_contents(tx), tx.pow_nonce)
    return digest.hex() == tx.id and _meets_difficulty(digest, difficulty_bits)


GENESIS_BUNDLE = "genesis"


class TangleState:
    """One node's view: transactions, maintained tip set, balances, indexes."""

    def __init__(self) -> None:
        self.transactions: Dict[str, TangleTx] = {}
        self.tips: Set[str] = set()
        self.balances: Dict[str, int] = {}
        self.genesis_id: str = ""
        self.attach_difficulty: Dict[str, int] = {}
        self.allocations: Dict[str, int] = {}
        self._bundles: Dict[str, List[str]] = {}
        self._credit_index: Dict[Tuple[str, str], List[str]] = {}

    @classmethod
    def genesis(cls, allocations: Dict[str, int]) -> "TangleState":
        for address, value in allocations.items():
            if not isinstance(value, int) or value < 0:
                raise TangleError(f"allocation for {address!r} must be a non-negative integer")
        state = cls()
        state.allocations = dict(sorted(allocations.items()))
        contents = encoding.canonical_bytes({"genesis": state.allocations})
        tx = TangleTx(
            id=crypto.hash_bytes(contents).hex(),
            trunk_ref="",
            branch_ref="",
            address="",
            value=0,
            signature_message_fragment="",
            bundle_hash=GENESIS_BUNDLE,
            pow_nonce=0,
            timestamp=0.0,
        )
        state.genesis_id = tx.id
        state.transactions[tx.id] = tx
        state.tips = {tx.id}
        state.balances = dict(state.allocations)
        state.attach_difficulty[tx.id] = 0
        state._bundles[GENESIS_BUNDLE] = [tx.id]
        return state

    def balance(self, address: str) -> int:
        return self.balances.get(address, 0)

    def total_supply(self) -> int:
        return sum(self.allocations.values())

    def has_bundle(self, bundle_hash: str) -> bool:
        return bundle_hash in self._bundles

    def bundle(self, bundle_hash: str) -> Bundle:
        ids = self._bundles[bundle_hash]
        return Bundle(
            transactions=tuple(self.transactions[i] for i in ids),
            bundle_hash=bundle_hash,
        )

    def _insert(self, txs: Sequence[TangleTx], difficulty_bits: int) -> None:
        """Add attached bundle members (debit, credit, signature order)."""
        for tx in txs:
            self.transactions[tx.id] = tx
            self.attach_difficulty[tx.id] = difficulty_bits
        referenced = set()
        for tx in txs:
            referenced.add(tx.trunk_ref)
            referenced.add(tx.branch_ref)
        self.tips -= referenced
        for tx in txs:
            if tx.id not in referenced:
                self.tips.add(tx.id)
        debit, credit, _ = txs
        self.balances[debit.address] = self.balance(debit.address) + debit.value
        self.balances[credit.address] = self.balance(credit.address) + credit.value
        bundle_hash = txs[0].bundle_hash
        self._bundles[bundle_hash] = [tx.id for tx in txs]
        key = (credit.address, credit.signature_message_fragment)
        self._credit_index.setdefault(key, []).append(bundle_hash)

    def receive_bundle(self, bundle: Bundle, difficulty_bits: int) -> bool:
        """Apply a broadcast bundle; idempotent. Returns False on a repeat."""
        if bundle.bundle_hash in self._bundles:
            return False
        if not bundle.attached:
            raise TangleError("cannot receive an unattached bundle")
        known = set(self.transactions)
        member_ids = {tx.id for tx in bundle.transactions}
        for tx in bundle.transactions:
            for ref in (tx.trunk_ref, tx.branch_ref):
                if ref not in known and ref not in member_ids:
                    raise UnknownReference(f"reference {ref!r} not on this node")
            if not validate_pow(tx, difficulty_bits):
                raise TangleError(f"transaction {tx.id} fails proof-of-work validation")
        self._insert(bundle.transactions, difficulty_bits)
        return True

    # line-delimited dump/load ----------------------------------------------

    def dump_lines(self) -> List[str]:
        records: List[dict] = [{"kind": "TANGLE", "allocations": self.allocations}]
        for tx in self.transactions.values():
            records.append(
                {
                    "kind": "TX",
                    "id": tx.id,
                    "trunk_ref": tx.trunk_ref,
                    "branch_ref": tx.branch_ref,
                    "address": tx.address,
                    "value": tx.value,
                    "fragment": tx.signature_message_fragment,
                    "bundle_hash": tx.bundle_hash,
                    "pow_nonce": tx.pow_nonce,
                    "timestamp": tx.timestamp,
                    "difficulty": self.attach_difficulty.get(tx.id, 0),
                }
            )
        return encoding.dump_lines(records)

    @classmethod
    def load_lines(cls, lines: Iterable[str]) -> "TangleState":
        state: Optional[TangleState] = None
        pending: List[Tuple[TangleTx, int]] = []
        for obj in encoding.load_lines(lines):
            kind = obj.get("kind")
            if kind == "TANGLE":
                state = cls.genesis({k: int(v) for k, v in obj["allocations"].items()})
            elif kind == "TX":
                tx = TangleTx(
                    id=obj["id"],
                    trunk_ref=obj["trunk_ref"],
                    branch_ref=obj["branch_ref"],
                    address=obj["address"],
                    value=int(obj["value"]),
                    signature_message_fragment=obj["fragment"],
                    bundle_hash=obj["bundle_hash"],
                    pow_nonce=int(obj["pow_nonce"]),
                    timestamp=float(obj["timestamp"]),
                )
                pending.append((tx, int(obj["difficulty"])))
            else:
                raise TangleError(f"unknown record kind {kind!r}")
        if state is None:
            raise TangleError("dump has no header record")
        by_bundle: Dict[str, List[Tuple[TangleTx, int]]] = {}
        for tx, difficulty in pending:
            if tx.bundle_hash == GENESIS_BUNDLE:
                if tx.id != state.genesis_id:
                    raise TangleError("genesis does not match allocations")
                continue
            by_bundle.setdefault(tx.bundle_hash, []).append((tx, difficulty))
        for bundle_hash, members in by_bundle.items():
            if len(members) != 3:
                raise TangleError(f"bundle {bundle_hash} does not have three members")
            txs = tuple(tx for tx, _ in members)
            state.receive_bundle(Bundle(transactions=txs, bundle_hash=bundle_hash), members[0][1])
        return state


def _uniform_tip(state: TangleState, rng) -> str:
    return rng.choice(sorted(state.tips))


TIP_STRATEGIES = {"uniform": _uniform_tip}


def tip_select(state: TangleState, rng, strategy: str = "uniform") -> Tuple[str, str]:
    """Two independent strategy runs; the two tips may coincide."""
    if not state.tips:
        raise TangleError("no tips to select from")
    try:
        pick = TIP_STRATEGIES[strategy]
    except KeyError:
        raise TangleError(f"unknown tip selection strategy {strategy!r}") from None
    return pick(state, rng), pick(state, rng)


def build_value_bundle(
    sender_keys: SenderKeys,
    from_address: str,
    to_address: str,
    amount: int,
    message_nonce: str,
    timestamp: float = 0.0,
) -> Bundle:
    """Unattached three-member bundle; the credit fragment carries the nonce."""
    if not isinstance(amount, int) or amount <= 0:
        raise NonPositiveAmount(f"amount must be a positive integer, got {amount!r}")
    essence = encoding.canonical_bytes(
        {
            "from": from_address,
            "to": to_address,
            "amount": amount,
            "nonce": message_nonce,
            "timestamp": timestamp,
        }
    )
    bundle_hash = crypto.hash_bytes(b"bundle:" + essence).hex()
    signature = sender_keys.keystore.sign(
        sender_keys.keypair.sigkey_handle, b"bundle:" + encoding.unhexb(bundle_hash)
    )
    signature_material = encoding.canonical_bytes(
        {
            "verkey": encoding.hexb(sender_keys.keypair.verkey),
            "signature": encoding.hexb(signature),
        }
    )

    def draft(address: str, value: int, fragment: str) -> TangleTx:
        return TangleTx(
            id="",
            trunk_ref="",
            branch_ref="",
            address=address,
            value=value,
            signature_message_fragment=fragment,
            bundle_hash=bundle_hash,
            pow_nonce=0,
            timestamp=timestamp,
        )

    members = (
        draft(from_address, -amount, ""),
        draft(to_address, amount, message_nonce),
        draft(from_address, 0, encoding.hexb(signature_material)),
    )
    return Bundle(transactions=members, bundle_hash=bundle_hash)


def verify_debit_signature(bundle: Bundle) -> bool:
    try:
        material = encoding.decode_record(
            encoding.unhexb(bundle.debit_signature.signature_message_fragment)
        )
        verkey = encoding.unhexb(material["verkey"])
        signature = encoding.unhexb(material["signature"])
    except (ValueError, KeyError, TypeError):
        return False
    if address_from_verkey(verkey) != bundle.debit.address:
        return False
    # the declared hash must match the essence recomputed from the members,
    # otherwise a signature could be replayed onto altered amounts/addresses
    essence = encoding.canonical_bytes(
        {
            "from": bundle.debit.address,
            "to": bundle.credit.address,
            "amount": bundle.credit.value,
            "nonce": bundle.credit.signature_message_fragment,
            "timestamp": bundle.debit.timestamp,
        }
    )
    if crypto.hash_bytes(b"bundle:" + essence).hex() != bundle.bundle_hash:
        return False
    return crypto.verify(verkey, b"bundle:" + encoding.unhexb(bundle.bundle_hash), signature)


def attach_bundle(
    state: TangleState,
    bundle: Bundle,
    difficulty_bits: int,
    rng,
    tips: Optional[Tuple[str, str]] = None,
    strategy: str = "uniform",
) -> Bundle:
    """Anchor, work and insert a bundle; returns the attached bundle.

    One two-run tip selection anchors the whole bundle (pass `tips` to pin
    it). Proof-of-work runs per member. The previously selected tips stop
    being tips; the new bundle head becomes one.
    """
    if bundle.attached:
        raise TangleError("bundle is already attached")
    if not verify_debit_signature(bundle):
        raise BadDebitSignature("debit signature does not verify for the from-address")
    debit = bundle.debit
    amount = -debit.value
    if amount <= 0:
        raise NonPositiveAmount("bundle debits a non-positive amount")
    if state.balance(debit.address) < amount:
        raise InsufficientBalance(
            f"address {debit.address!r} holds {state.balance(debit.address)}, needs {amount}"
        )
    if tips is None:
        tips = tip_select(state, rng, strategy)
    else:
        for ref in tips:
            if ref not in state.transactions:
                raise UnknownReference(f"pinned tip {ref!r} not on this node")
    trunk_tip, branch_tip = tips

    # members chain trunk-wise; only the last anchors to both selected tips
    attached_reversed: List[TangleTx] = []
    next_trunk = trunk_tip
    for draft in reversed(bundle.transactions):
        tx = replace(draft, trunk_ref=next_trunk, branch_ref=branch_tip)
        contents = tx_contents(tx)
        nonce = do_pow(contents, difficulty_bits)
        tx = replace(tx, pow_nonce=nonce, id=pow_digest(contents, nonce).hex())
        attached_reversed.append(tx)
        next_trunk = tx.id
    members = tuple(reversed(attached_reversed))
    state._insert(members, difficulty_bits)
    return Bundle(transactions=members, bundle_hash=bundle.bundle_hash)


def find_payment(
    state: TangleState, to_address: str, message_nonce: str, amount: int
) -> Optional[Bundle]:
    """Indexed lookup of an attached credit matching (address, nonce, amount)."""
    for bundle_hash in state._credit_index.get((to_address, message_nonce), []):
        bundle = state.bundle(bundle_hash)
        if bundle.credit.value == amount:
            return bundle
    return None


class TangleNetwork:
    """Gossip fan-out: a broadcast reaches every peer after one sampled delay."""

    def __init__(
        self,
        clock: SimClock,
        delay: DelaySpec,
        rng,
        peers: Sequence[TangleState] = (),
        difficulty_bits: int = 0,
    ) -> None:
        self.clock = clock
        self.delay = delay
        self.rng = rng
        self.peers: List[TangleState] = list(peers)
        self.difficulty_bits = difficulty_bits
        self.broadcasts_sent = 0

    def broadcast(self, bundle: Bundle) -> None:
        self.broadcasts_sent += 1
        self.clock.advance(self.delay.sample(self.rng))
        for peer in self.peers:
            peer.receive_bundle(bundle, self.difficulty_bits)
