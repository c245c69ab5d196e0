"""Canonical byte encoding shared by wire messages and dump files.

A record is a JSON object rendered with sorted keys and compact separators,
so the same mapping always produces the same bytes. Dump files are
line-delimited: one record per line, stable field order (sorted keys).
Binary values (keys, nonces, signatures, digests) are hex strings at this
boundary; callers convert with hexb/unhexb.
"""
from __future__ import annotations

import json
from typing import Any, Iterable, Iterator, List


def canonical_bytes(record: dict) -> bytes:
    return json.dumps(record, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_record(data: bytes) -> dict:
    obj = json.loads(data.decode("utf-8"))
    if not isinstance(obj, dict):
        raise ValueError("record is not an object")
    return obj


def hexb(value: bytes) -> str:
    return value.hex()


def unhexb(value: str) -> bytes:
    return bytes.fromhex(value)


def dump_lines(records: Iterable[dict]) -> List[str]:
    return [canonical_bytes(r).decode("utf-8") for r in records]


def load_lines(lines: Iterable[str]) -> Iterator[dict]:
    for line in lines:
        line = line.strip()
        if line:
            yield decode_record(line.encode("utf-8"))


def write_delimited(path: Any, records: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in dump_lines(records):
            fh.write(line + "\n")


def read_delimited(path: Any) -> List[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return list(load_lines(fh))
