"""Append-only, role-gated identity ledger with query-time supersession.

Records are never removed or rewritten. Updating a DID means appending a new
NYM record; resolution returns the record with the highest sequence number,
so older entries still exist but are ignored by queries.

Write permissions form a strict hierarchy: Trustee > Steward > TrustAnchor >
IdentityOwner. NYM, SCHEMA and CRED_DEF submissions all require TrustAnchor
or better; in addition a new NYM's role must sit strictly below the
submitter's role (a Trustee may also mint Trustees), and a party may always
rotate its own verkey as long as it does not raise its own role.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Tuple, Union

from . import encoding


class LedgerError(Exception):
    pass


class PermissionDenied(LedgerError):
    pass


class UnknownSubmitter(LedgerError):
    pass


class DanglingReference(LedgerError):
    pass


class NotFound(LedgerError):
    pass


class OutOfRange(LedgerError):
    pass


class Role(enum.Enum):
    TRUSTEE = "TRUSTEE"
    STEWARD = "STEWARD"
    TRUST_ANCHOR = "TRUST_ANCHOR"
    IDENTITY_OWNER = "IDENTITY_OWNER"

    @property
    def rank(self) -> int:
        return _RANK[self]


_RANK = {
    Role.TRUSTEE: 3,
    Role.STEWARD: 2,
    Role.TRUST_ANCHOR: 1,
    Role.IDENTITY_OWNER: 0,
}


@dataclass(frozen=True)
class NymRecord:
    did: str
    verkey: str  # hex
    role: Role
    submitter_did: str
    seq_no: int = 0


@dataclass(frozen=True)
class SchemaRecord:
    name: str
    version: str
    attribute_names: Tuple[str, ...]
    issuer_did: str
    seq_no: int = 0


@dataclass(frozen=True)
class CredDefRecord:
    schema_ref: int
    issuer_did: str
    issuer_signing_verkey: str  # hex
    seq_no: int = 0


Record = Union[NymRecord, SchemaRecord, CredDefRecord]

# Minimum submitter role per record kind.
_WRITE_FLOOR = Role.TRUST_ANCHOR.rank


class IdentityLedger:
    """Permissioned append-only record store."""

    def __init__(self) -> None:
        self._records: List[Record] = []

    @classmethod
    def genesis(cls, trustee_did: str, trustee_verkey: str) -> "IdentityLedger":
        """New ledger holding a single self-submitted Trustee NYM."""
        ledger = cls()
        ledger._append(
            NymRecord(
                did=trustee_did,
                verkey=trustee_verkey,
                role=Role.TRUSTEE,
                submitter_did=trustee_did,
            )
        )
        return ledger

    def __len__(self) -> int:
        return len(self._records)

    def _append(self, record: Record) -> int:
        seq_no = len(self._records) + 1
        self._records.append(replace(record, seq_no=seq_no))
        return seq_no

    def submit(self, record: Record, submitter_did: str) -> int:
        """Validate against the role rules and append; returns the new seq_no."""
        submitter = self._lookup_nym(submitter_did)
        if submitter is None:
            raise UnknownSubmitter(f"submitter {submitter_did!r} has no NYM")

        if isinstance(record, NymRecord):
            self._check_nym(record, submitter)
        elif isinstance(record, SchemaRecord):
            self._check_schema(record, submitter)
        elif isinstance(record, CredDefRecord):
            self._check_cred_def(record, submitter)
        else:
            raise LedgerError(f"unknown record type {type(record).__name__}")
        record = replace(record, submitter_did=submitter_did) if isinstance(record, NymRecord) else record
        return self._append(record)

    def _check_nym(self, record: NymRecord, submitter: NymRecord) -> None:
        existing = self._lookup_nym(record.did)
        if existing is not None and submitter.did == record.did:
            # self-update (key rotation); may not escalate own role
            if record.role.rank > existing.role.rank:
                raise PermissionDenied("cannot raise own role")
            return
        if submitter.role.rank < _WRITE_FLOOR:
            raise PermissionDenied(f"{submitter.role.value} may not create NYMs for others")
        if record.role.rank >= submitter.role.rank and submitter.role is not Role.TRUSTEE:
            raise PermissionDenied(
                f"{submitter.role.value} may not grant role {record.role.value}"
            )

    def _check_schema(self, record: SchemaRecord, submitter: NymRecord) -> None:
        if submitter.role.rank < _WRITE_FLOOR:
            raise PermissionDenied(f"{submitter.role.value} may not publish schemas")
        if len(set(record.attribute_names)) != len(record.attribute_names):
            raise LedgerError("duplicate attribute names in schema")

    def _check_cred_def(self, record: CredDefRecord, submitter: NymRecord) -> None:
        if submitter.role.rank < _WRITE_FLOOR:
            raise PermissionDenied(f"{submitter.role.value} may not publish credential definitions")
        if record.issuer_did != submitter.did:
            raise PermissionDenied("credential definitions are published by their issuer")
        schema = None
        if 1 <= record.schema_ref <= len(self._records):
            candidate = self._records[record.schema_ref - 1]
            if isinstance(candidate, SchemaRecord):
                schema = candidate
        if schema is None:
            raise DanglingReference(f"schema_ref {record.schema_ref} does not resolve to a schema")

    def _lookup_nym(self, did: str) -> Optional[NymRecord]:
        # highest seq_no wins; older entries remain but are ignored
        for record in reversed(self._records):
            if isinstance(record, NymRecord) and record.did == did:
                return record
        return None

    def resolve_did(self, did: str) -> NymRecord:
        record = self._lookup_nym(did)
        if record is None:
            raise NotFound(f"no NYM for {did!r}")
        return record

    def resolve_record(self, seq_no: int) -> Record:
        if not 1 <= seq_no <= len(self._records):
            raise OutOfRange(f"seq_no {seq_no} outside 1..{len(self._records)}")
        return self._records[seq_no - 1]

    def records(self) -> Tuple[Record, ...]:
        return tuple(self._records)

    # line-delimited dump/load -------------------------------------------------

    def dump_lines(self) -> List[str]:
        return encoding.dump_lines(_record_fields(r) for r in self._records)

    @classmethod
    def load_lines(cls, lines: Iterable[str]) -> "IdentityLedger":
        ledger = cls()
        for obj in encoding.load_lines(lines):
            record = _record_from_fields(obj)
            ledger._records.append(record)
            if record.seq_no != len(ledger._records):
                raise LedgerError("sequence numbers not contiguous")
        return ledger


def _record_fields(record: Record) -> dict:
    if isinstance(record, NymRecord):
        return {
            "kind": "NYM",
            "seq_no": record.seq_no,
            "did": record.did,
            "verkey": record.verkey,
            "role": record.role.value,
            "submitter_did": record.submitter_did,
        }
    if isinstance(record, SchemaRecord):
        return {
            "kind": "SCHEMA",
            "seq_no": record.seq_no,
            "name": record.name,
            "version": record.version,
            "attribute_names": list(record.attribute_names),
            "issuer_did": record.issuer_did,
        }
    return {
        "kind": "CRED_DEF",
        "seq_no": record.seq_no,
        "schema_ref": record.schema_ref,
        "issuer_did": record.issuer_did,
        "issuer_signing_verkey": record.issuer_signing_verkey,
    }


def _record_from_fields(obj: dict) -> Record:
    kind = obj.get("kind")
    if kind == "NYM":
        return NymRecord(
            did=obj["did"],
            verkey=obj["verkey"],
            role=Role(obj["role"]),
            submitter_did=obj["submitter_did"],
            seq_no=obj["seq_no"],
        )
    if kind == "SCHEMA":
        return SchemaRecord(
            name=obj["name"],
            version=obj["version"],
            attribute_names=tuple(obj["attribute_names"]),
            issuer_did=obj["issuer_did"],
            seq_no=obj["seq_no"],
        )
    if kind == "CRED_DEF":
        return CredDefRecord(
            schema_ref=obj["schema_ref"],
            issuer_did=obj["issuer_did"],
            issuer_signing_verkey=obj["issuer_signing_verkey"],
            seq_no=obj["seq_no"],
        )
    raise LedgerError(f"unknown record kind {kind!r}")
