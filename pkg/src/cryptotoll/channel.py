"""Pairwise DID connections and the encrypted channel built on them.

The handshake is two messages. The initiator sends a plaintext connection
request carrying a fresh relationship DID, its verkey and a nonce; the
responder answers with its own fresh DID and verkey plus the echoed nonce,
sealed to the requester's verkey. Only the initiating side contributes a
nonce; the echo is what correlates the response with the request.

Established relationships are remembered per peer and can be reused when the
same peer is met again, keyed by location: the nearest stored peer within
epsilon meters wins, ties broken by lowest DID. Reuse starts with an
encrypted ping carrying a fresh nonce; a missing pong within the timeout
raises PeerUnresponsive and the caller falls back to a fresh handshake.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Tuple

from . import crypto, encoding
from .crypto import AuthenticationFailure
from .network import SimNetwork
from .wallet import Wallet

EARTH_RADIUS_M = 6371000.0
DEFAULT_EPSILON_M = 100.0
DEFAULT_REESTABLISH_TIMEOUT_S = 2.0


class ChannelError(Exception):
    pass


class MalformedRequest(ChannelError):
    pass


class DecryptFailure(ChannelError):
    pass


class AuthFailure(ChannelError):
    """Garbled or tampered traffic on an established channel."""


class PeerUnresponsive(ChannelError):
    pass


class ChannelNonceMismatch(ChannelError):
    """Response or pong correlates with no outstanding nonce."""


@dataclass(frozen=True)
class ConnectionRequest:
    did: str
    verkey: str  # hex
    nonce: str  # hex

    def to_bytes(self) -> bytes:
        return encoding.canonical_bytes(
            {"type": "conn_req", "did": self.did, "verkey": self.verkey, "nonce": self.nonce}
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "ConnectionRequest":
        try:
            obj = encoding.decode_record(data)
            if obj.get("type") != "conn_req":
                raise ValueError("wrong message type")
            verkey = encoding.unhexb(obj["verkey"])
            nonce = encoding.unhexb(obj["nonce"])
        except (ValueError, KeyError, TypeError) as exc:
            raise MalformedRequest(f"cannot parse connection request: {exc}") from None
        if len(verkey) != crypto.VERKEY_BYTES:
            raise MalformedRequest("verkey has wrong length")
        if len(nonce) != crypto.NONCE_BYTES:
            raise MalformedRequest("nonce has wrong length")
        return cls(did=obj["did"], verkey=obj["verkey"], nonce=obj["nonce"])


@dataclass(frozen=True)
class PairwiseRecord:
    my_did: str
    my_verkey: str  # hex
    their_did: str
    their_verkey: str  # hex
    peer_location: Optional[Tuple[float, float]]  # (lat, lon) degrees
    established_at: float  # simulated seconds


@dataclass
class _Pending:
    my_did: str
    nonce: str


class PairwiseChannel:
    """Authenticated-box transport over one pairwise relationship."""

    def __init__(
        self,
        wallet: Wallet,
        record: PairwiseRecord,
        network: Optional[SimNetwork] = None,
        local: str = "",
        remote: str = "",
    ) -> None:
        self.wallet = wallet
        self.record = record
        self.network = network
        self.local = local
        self.remote = remote

    def _require_network(self) -> SimNetwork:
        if self.network is None:
            raise ChannelError("channel has no network binding")
        return self.network

    def encrypt(self, payload: bytes) -> bytes:
        ct = self.wallet.keystore.auth_encrypt(
            self.wallet.handle_of(self.record.my_did),
            encoding.unhexb(self.record.their_verkey),
            payload,
        )
        return encoding.canonical_bytes({"type": "chan", "ct": encoding.hexb(ct)})

    def decrypt(self, frame: bytes) -> bytes:
        try:
            obj = encoding.decode_record(frame)
            if obj.get("type") != "chan":
                raise ValueError("wrong frame type")
            ct = encoding.unhexb(obj["ct"])
        except (ValueError, KeyError, TypeError):
            raise AuthFailure("garbled channel frame") from None
        try:
            return self.wallet.keystore.auth_decrypt(
                self.wallet.handle_of(self.record.my_did),
                encoding.unhexb(self.record.their_verkey),
                ct,
            )
        except (AuthenticationFailure, ValueError):
            raise AuthFailure("channel authentication failed") from None

    def send(self, payload: bytes) -> None:
        self._require_network().send(self.local, self.remote, self.encrypt(payload))

    def recv(self) -> Optional[bytes]:
        """Next decrypted payload, or None when the inbox is empty."""
        delivery = self._require_network().recv(self.local)
        if delivery is None:
            return None
        return self.decrypt(delivery.payload)


def initiate_connection(user_wallet: Wallet, rng) -> ConnectionRequest:
    """Fresh relationship DID + nonce; the request is sent in plaintext."""
    did, verkey = user_wallet.create_did()
    nonce = encoding.hexb(crypto.new_nonce(rng))
    request = ConnectionRequest(did=did, verkey=encoding.hexb(verkey), nonce=nonce)
    user_wallet._pending[nonce] = _Pending(my_did=did, nonce=nonce)
    return request


def respond_connection(
    gantry_wallet: Wallet,
    request: ConnectionRequest,
    now: float = 0.0,
) -> Tuple[bytes, PairwiseRecord]:
    """Accept a request: store the new relationship and seal the response."""
    did, verkey = gantry_wallet.create_did()
    record = PairwiseRecord(
        my_did=did,
        my_verkey=encoding.hexb(verkey),
        their_did=request.did,
        their_verkey=request.verkey,
        peer_location=None,
        established_at=now,
    )
    gantry_wallet.pairwise[request.did] = record
    body = encoding.canonical_bytes(
        {"did": did, "verkey": encoding.hexb(verkey), "nonce": request.nonce}
    )
    ciphertext = crypto.seal(encoding.unhexb(request.verkey), body, gantry_wallet.keystore.suite)
    frame = encoding.canonical_bytes({"type": "conn_resp", "ct": encoding.hexb(ciphertext)})
    return frame, record


def complete_connection(
    user_wallet: Wallet,
    response_frame: bytes,
    now: float = 0.0,
    peer_location: Optional[Tuple[float, float]] = None,
) -> PairwiseRecord:
    """Unseal the response, check the nonce echo, store the relationship."""
    try:
        obj = encoding.decode_record(response_frame)
        if obj.get("type") != "conn_resp":
            raise ValueError("wrong frame type")
        ciphertext = encoding.unhexb(obj["ct"])
    except (ValueError, KeyError, TypeError):
        raise DecryptFailure("garbled connection response") from None

    body = None
    pending_hit: Optional[_Pending] = None
    for pending in user_wallet._pending.values():
        handle = user_wallet.handle_of(pending.my_did)
        try:
            body = user_wallet.keystore.unseal(handle, ciphertext)
        except (AuthenticationFailure, ValueError):
            continue
        pending_hit = pending
        break
    if body is None or pending_hit is None:
        raise DecryptFailure("response does not decrypt under any pending request key")

    try:
        inner = encoding.decode_record(body)
        their_did = inner["did"]
        their_verkey = encoding.unhexb(inner["verkey"])
        nonce = inner["nonce"]
    except (ValueError, KeyError, TypeError):
        raise DecryptFailure("connection response body malformed") from None
    if len(their_verkey) != crypto.VERKEY_BYTES:
        raise DecryptFailure("responder verkey has wrong length")
    if nonce != pending_hit.nonce:
        raise ChannelNonceMismatch("response echoes a nonce from no pending request")

    del user_wallet._pending[pending_hit.nonce]
    record = PairwiseRecord(
        my_did=pending_hit.my_did,
        my_verkey=encoding.hexb(user_wallet.verkey_of(pending_hit.my_did)),
        their_did=their_did,
        their_verkey=inner["verkey"],
        peer_location=peer_location,
        established_at=now,
    )
    user_wallet.pairwise[their_did] = record
    return record


def haversine_m(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """Great-circle distance in meters between two (lat, lon) points."""
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(h))


def lookup_known_peer(
    store: Dict[str, PairwiseRecord],
    observed_location: Tuple[float, float],
    epsilon_m: float = DEFAULT_EPSILON_M,
) -> Optional[PairwiseRecord]:
    """Nearest stored peer within epsilon meters; ties break on lowest DID."""
    best: Optional[PairwiseRecord] = None
    best_distance = math.inf
    for their_did in sorted(store):
        record = store[their_did]
        if record.peer_location is None:
            continue
        distance = haversine_m(record.peer_location, observed_location)
        if distance <= epsilon_m and distance < best_distance:
            best = record
            best_distance = distance
    return best


def reestablish(
    channel: PairwiseChannel,
    rng,
    timeout_s: float = DEFAULT_REESTABLISH_TIMEOUT_S,
    pump: Optional[Callable[[], None]] = None,
) -> None:
    """Encrypted ping with a fresh nonce; the pong must echo it.

    `pump` gives the peer a chance to service its inbox between the ping and
    the pong check (the harness wires the responding agent in here). No pong
    within the timeout advances the clock to the deadline and raises
    PeerUnresponsive.
    """
    nonce = encoding.hexb(crypto.new_nonce(rng))
    deadline = channel._require_network().clock.now + timeout_s
    channel.send(encoding.canonical_bytes({"type": "ping", "nonce": nonce}))
    if pump is not None:
        pump()
    delivery = channel._require_network().recv(channel.local)
    if delivery is None:
        clock = channel._require_network().clock
        if clock.now < deadline:
            clock.advance(deadline - clock.now)
        raise PeerUnresponsive(f"no pong within {timeout_s} s")
    payload = channel.decrypt(delivery.payload)
    obj = encoding.decode_record(payload)
    if obj.get("type") != "pong" or obj.get("nonce") != nonce:
        raise ChannelNonceMismatch("pong does not echo the ping nonce")


def answer_ping(channel: PairwiseChannel, frame: bytes) -> None:
    """Responder half of reestablishment: echo the ping nonce back."""
    payload = channel.decrypt(frame)
    obj = encoding.decode_record(payload)
    if obj.get("type") != "ping":
        raise ChannelError("expected a ping")
    channel.send(encoding.canonical_bytes({"type": "pong", "nonce": obj["nonce"]}))
