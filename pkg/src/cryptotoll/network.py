"""Simulated clock and point-to-point medium.

Delivery is synchronous in program order: a send advances the shared clock
by one sampled one-way delay and appends the payload to the destination
inbox, so per-direction ordering is FIFO by construction. A single message
index can be marked for corruption to model a tampered channel.
"""
from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass
from typing import Deque, Dict, Optional

from .latency import DelaySpec


class SimClock:
    """Monotone simulated time in seconds."""

    def __init__(self, start: float = 0.0) -> None:
        self.now = float(start)

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("clock cannot move backwards")
        self.now += dt
        return self.now


@dataclass
class Delivery:
    src: str
    dst: str
    payload: bytes


class SimNetwork:
    """Named endpoints with FIFO inboxes over a sampled-latency medium."""

    def __init__(self, clock: SimClock, one_way: DelaySpec, rng) -> None:
        self.clock = clock
        self.one_way = one_way
        self.rng = rng
        self.inboxes: Dict[str, Deque[Delivery]] = defaultdict(deque)
        self.messages_sent = 0
        # 1-based index of the next send to corrupt, or None
        self.corrupt_send_index: Optional[int] = None

    def send(self, src: str, dst: str, payload: bytes) -> None:
        self.messages_sent += 1
        self.clock.advance(self.one_way.sample(self.rng))
        if self.corrupt_send_index == self.messages_sent:
            payload = _flip_byte(payload)
        self.inboxes[dst].append(Delivery(src=src, dst=dst, payload=payload))

    def recv(self, name: str) -> Optional[Delivery]:
        inbox = self.inboxes[name]
        if not inbox:
            return None
        return inbox.popleft()

    def pending(self, name: str) -> int:
        return len(self.inboxes[name])


def _flip_byte(payload: bytes) -> bytes:
    if not payload:
        return payload
    mid = len(payload) // 2
    corrupted = bytearray(payload)
    corrupted[mid] ^= 0xFF
    return bytes(corrupted)
