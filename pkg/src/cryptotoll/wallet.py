"""Holder/issuer wallet: DIDs, master secret, credentials, proofs.

Credentials are issuer-signed attribute digests bound to the holder by a
hash commitment over the holder's master secret. A proof reveals exactly the
requested attribute subset; the full digest map travels with the proof so the
issuer signature still verifies, and a holder signature over the revealed
values plus the request nonce prevents replay against another request.

DIDs are a base32-encoded truncation of the verkey. Signing keys stay inside
the wallet's keystore; export writes them only under an explicit test-fixture
flag.
"""
from __future__ import annotations

import base64
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from . import crypto, encoding
from .crypto import KeyPair, KeyStore
from .identity_ledger import (
    CredDefRecord,
    IdentityLedger,
    OutOfRange,
    SchemaRecord,
)

_DID_TRUNC_BYTES = 16


class WalletError(Exception):
    pass


class AlreadyExists(WalletError):
    pass


class SchemaMismatch(WalletError):
    pass


class UnknownCredDef(WalletError):
    pass


class NotIssuer(WalletError):
    pass


class NoMatchingCredential(WalletError):
    pass


class ProofRejected(WalletError):
    """Base class for every proof verification failure."""


class BadIssuerSignature(ProofRejected):
    pass


class UntrustedIssuer(ProofRejected):
    pass


class NonceMismatch(ProofRejected):
    pass


class AttributeSetMismatch(ProofRejected):
    pass


class BadHolderSignature(ProofRejected):
    pass


def did_from_verkey(verkey: bytes) -> str:
    token = base64.b32encode(verkey[:_DID_TRUNC_BYTES]).decode("ascii")
    return token.rstrip("=").lower()


@dataclass(frozen=True)
class Credential:
    cred_def_ref: int
    attributes: Dict[str, str]
    holder_binding: str  # hex digest committing to the holder master secret
    issuer_signature: str  # hex


@dataclass(frozen=True)
class ProofRequest:
    name: str
    requested_attributes: Tuple[str, ...]
    accepted_issuers: Tuple[str, ...]
    request_nonce: str  # hex


@dataclass(frozen=True)
class Proof:
    revealed: Dict[str, str]
    cred_def_ref: int
    holder_binding: str
    attr_digests: Dict[str, str]  # full map, hidden attributes included
    issuer_signature: str
    request_nonce: str
    holder_verkey: str  # hex
    holder_signature: str  # hex


@dataclass
class _StoredCredential:
    credential: Credential
    issuer_did: str


@dataclass
class Wallet:
    """Per-party key and credential store."""

    label: str
    rng: object = None
    keystore: KeyStore = field(default_factory=KeyStore)
    dids: Dict[str, KeyPair] = field(default_factory=dict)
    master_secret: Optional[bytes] = field(default=None, repr=False)
    pairwise: Dict[str, object] = field(default_factory=dict)
    _pending: Dict[str, object] = field(default_factory=dict)
    _credentials: List[_StoredCredential] = field(default_factory=list)
    _did_order: List[str] = field(default_factory=list)

    def create_did(self, seed: Optional[bytes] = None) -> Tuple[str, bytes]:
        """New DID + keypair; with a seed the result is reproducible."""
        if seed is None:
            if self.rng is None:
                raise WalletError("wallet has no RNG; pass an explicit seed")
            seed = self.rng.getrandbits(8 * crypto.SEED_BYTES).to_bytes(crypto.SEED_BYTES, "big")
        pair = self.keystore.generate_keypair(seed)
        did = did_from_verkey(pair.verkey)
        if did not in self.dids:
            self._did_order.append(did)
        self.dids[did] = pair
        return did, pair.verkey

    def create_master_secret(self) -> None:
        if self.master_secret is not None:
            raise AlreadyExists("wallet already holds a master secret")
        if self.rng is None:
            raise WalletError("wallet has no RNG")
        self.master_secret = self.rng.getrandbits(8 * crypto.SEED_BYTES).to_bytes(
            crypto.SEED_BYTES, "big"
        )

    def holder_commitment(self) -> str:
        if self.master_secret is None:
            raise WalletError("no master secret")
        return encoding.hexb(crypto.hash_bytes(b"holder-binding:" + self.master_secret))

    def handle_of(self, did: str) -> str:
        return self.dids[did].sigkey_handle

    def verkey_of(self, did: str) -> bytes:
        return self.dids[did].verkey

    def sign_with(self, did: str, message: bytes) -> bytes:
        return self.keystore.sign(self.handle_of(did), message)

    def controls_verkey(self, verkey_hex: str) -> Optional[str]:
        for did, pair in self.dids.items():
            if encoding.hexb(pair.verkey) == verkey_hex:
                return did
        return None

    def store_credential(self, credential: Credential, issuer_did: str) -> None:
        self._credentials.append(_StoredCredential(credential, issuer_did))

    def credentials(self) -> Tuple[Credential, ...]:
        return tuple(s.credential for s in self._credentials)

    def first_did(self) -> str:
        if not self._did_order:
            raise WalletError("wallet holds no DID")
        return self._did_order[0]

    # export/import --------------------------------------------------------

    def export_lines(self, include_signing_keys: bool = False) -> List[str]:
        """Line-delimited dump. Secrets only under the explicit fixture flag."""
        records: List[dict] = [{"kind": "WALLET", "label": self.label}]
        for did in self._did_order:
            pair = self.dids[did]
            rec = {"kind": "DID", "did": did, "verkey": encoding.hexb(pair.verkey)}
            if include_signing_keys:
                rec["seed"] = encoding.hexb(self.keystore._export_seed(pair.sigkey_handle))
            records.append(rec)
        if self.master_secret is not None and include_signing_keys:
            records.append({"kind": "MASTER_SECRET", "value": encoding.hexb(self.master_secret)})
        for stored in self._credentials:
            cred = stored.credential
            records.append(
                {
                    "kind": "CREDENTIAL",
                    "cred_def_ref": cred.cred_def_ref,
                    "attributes": dict(sorted(cred.attributes.items())),
                    "holder_binding": cred.holder_binding,
                    "issuer_signature": cred.issuer_signature,
                    "issuer_did": stored.issuer_did,
                }
            )
        return encoding.dump_lines(records)

    @classmethod
    def import_lines(cls, lines: Iterable[str], rng=None) -> "Wallet":
        wallet: Optional[Wallet] = None
        for obj in encoding.load_lines(lines):
            kind = obj.get("kind")
            if kind == "WALLET":
                wallet = cls(label=obj["label"], rng=rng)
            elif wallet is None:
                raise WalletError("dump does not start with a WALLET record")
            elif kind == "DID":
                if "seed" in obj:
                    did, _ = wallet.create_did(encoding.unhexb(obj["seed"]))
                    if did != obj["did"]:
                        raise WalletError("seed does not reproduce the recorded DID")
                else:
                    # public-only entry: usable for lookups, not for signing
                    pair = KeyPair(verkey=encoding.unhexb(obj["verkey"]), sigkey_handle="")
                    wallet.dids[obj["did"]] = pair
                    wallet._did_order.append(obj["did"])
            elif kind == "MASTER_SECRET":
                wallet.master_secret = encoding.unhexb(obj["value"])
            elif kind == "CREDENTIAL":
                wallet.store_credential(
                    Credential(
                        cred_def_ref=obj["cred_def_ref"],
                        attributes=dict(obj["attributes"]),
                        holder_binding=obj["holder_binding"],
                        issuer_signature=obj["issuer_signature"],
                    ),
                    issuer_did=obj["issuer_did"],
                )
            else:
                raise WalletError(f"unknown wallet record kind {kind!r}")
        if wallet is None:
            raise WalletError("empty wallet dump")
        return wallet


def _attribute_digests(attributes: Dict[str, str]) -> Dict[str, str]:
    return {
        name: encoding.hexb(crypto.hash_bytes(f"attr:{name}:{value}".encode("utf-8")))
        for name, value in attributes.items()
    }


def _credential_payload(cred_def_ref: int, attr_digests: Dict[str, str], holder_binding: str) -> bytes:
    return encoding.canonical_bytes(
        {
            "cred_def_ref": cred_def_ref,
            "attr_digests": dict(sorted(attr_digests.items())),
            "holder_binding": holder_binding,
        }
    )


def _proof_payload(revealed: Dict[str, str], request_nonce: str) -> bytes:
    return encoding.canonical_bytes(
        {"revealed": dict(sorted(revealed.items())), "request_nonce": request_nonce}
    )


def _resolve_cred_def(ledger: IdentityLedger, cred_def_ref: int) -> CredDefRecord:
    try:
        record = ledger.resolve_record(cred_def_ref)
    except OutOfRange:
        raise UnknownCredDef(f"no record at seq_no {cred_def_ref}") from None
    if not isinstance(record, CredDefRecord):
        raise UnknownCredDef(f"record {cred_def_ref} is not a credential definition")
    return record


def issue_credential(
    issuer_wallet: Wallet,
    ledger: IdentityLedger,
    cred_def_ref: int,
    attributes: Dict[str, str],
    holder_commitment: str,
) -> Credential:
    """Sign a full attribute set against an on-ledger credential definition."""
    cred_def = _resolve_cred_def(ledger, cred_def_ref)
    schema = ledger.resolve_record(cred_def.schema_ref)
    assert isinstance(schema, SchemaRecord)
    if set(attributes) != set(schema.attribute_names):
        raise SchemaMismatch(
            f"attributes {sorted(attributes)} do not match schema {sorted(schema.attribute_names)}"
        )
    signer_did = issuer_wallet.controls_verkey(cred_def.issuer_signing_verkey)
    if signer_did is None:
        raise NotIssuer("wallet does not hold the credential definition signing key")
    digests = _attribute_digests(attributes)
    payload = _credential_payload(cred_def_ref, digests, holder_commitment)
    signature = issuer_wallet.sign_with(signer_did, payload)
    return Credential(
        cred_def_ref=cred_def_ref,
        attributes=dict(attributes),
        holder_binding=holder_commitment,
        issuer_signature=encoding.hexb(signature),
    )


def create_proof(holder_wallet: Wallet, request: ProofRequest, signer_did: Optional[str] = None) -> Proof:
    """Reveal exactly the requested attributes from a matching stored credential."""
    requested = set(request.requested_attributes)
    match: Optional[_StoredCredential] = None
    for stored in holder_wallet._credentials:
        if requested <= set(stored.credential.attributes) and (
            stored.issuer_did in request.accepted_issuers
        ):
            match = stored
            break
    if match is None:
        raise NoMatchingCredential(
            f"no credential covers {sorted(requested)} from an accepted issuer"
        )
    cred = match.credential
    revealed = {name: cred.attributes[name] for name in sorted(requested)}
    if signer_did is None:
        signer_did = holder_wallet.first_did()
    holder_signature = holder_wallet.sign_with(signer_did, _proof_payload(revealed, request.request_nonce))
    return Proof(
        revealed=revealed,
        cred_def_ref=cred.cred_def_ref,
        holder_binding=cred.holder_binding,
        attr_digests=_attribute_digests(cred.attributes),
        issuer_signature=cred.issuer_signature,
        request_nonce=request.request_nonce,
        holder_verkey=encoding.hexb(holder_wallet.verkey_of(signer_did)),
        holder_signature=encoding.hexb(holder_signature),
    )


def verify_proof(ledger: IdentityLedger, request: ProofRequest, proof: Proof) -> Dict[str, str]:
    """Return the verified attribute map or raise a ProofRejected subclass."""
    if proof.request_nonce != request.request_nonce:
        raise NonceMismatch("proof was built for a different request nonce")
    if set(proof.revealed) != set(request.requested_attributes):
        raise AttributeSetMismatch(
            f"revealed {sorted(proof.revealed)} != requested {sorted(request.requested_attributes)}"
        )
    cred_def = _resolve_cred_def(ledger, proof.cred_def_ref)
    if cred_def.issuer_did not in request.accepted_issuers:
        raise UntrustedIssuer(f"issuer {cred_def.issuer_did!r} not accepted")
    for name, value in proof.revealed.items():
        expected = proof.attr_digests.get(name)
        actual = encoding.hexb(crypto.hash_bytes(f"attr:{name}:{value}".encode("utf-8")))
        if expected != actual:
            raise BadIssuerSignature(f"revealed value for {name!r} does not match signed digest")
    payload = _credential_payload(proof.cred_def_ref, proof.attr_digests, proof.holder_binding)
    if not crypto.verify(
        encoding.unhexb(cred_def.issuer_signing_verkey),
        payload,
        encoding.unhexb(proof.issuer_signature),
    ):
        raise BadIssuerSignature("issuer signature does not verify")
    if not crypto.verify(
        encoding.unhexb(proof.holder_verkey),
        _proof_payload(proof.revealed, proof.request_nonce),
        encoding.unhexb(proof.holder_signature),
    ):
        raise BadHolderSignature("holder signature does not verify")
    return dict(proof.revealed)


def proof_request_fields(request: ProofRequest) -> dict:
    return {
        "name": request.name,
        "requested_attributes": list(request.requested_attributes),
        "accepted_issuers": list(request.accepted_issuers),
        "request_nonce": request.request_nonce,
    }


def proof_request_from_fields(obj: dict) -> ProofRequest:
    return ProofRequest(
        name=obj["name"],
        requested_attributes=tuple(obj["requested_attributes"]),
        accepted_issuers=tuple(obj["accepted_issuers"]),
        request_nonce=obj["request_nonce"],
    )


def proof_fields(proof: Proof) -> dict:
    return {
        "revealed": dict(sorted(proof.revealed.items())),
        "cred_def_ref": proof.cred_def_ref,
        "holder_binding": proof.holder_binding,
        "attr_digests": dict(sorted(proof.attr_digests.items())),
        "issuer_signature": proof.issuer_signature,
        "request_nonce": proof.request_nonce,
        "holder_verkey": proof.holder_verkey,
        "holder_signature": proof.holder_signature,
    }


def proof_from_fields(obj: dict) -> Proof:
    return Proof(
        revealed=dict(obj["revealed"]),
        cred_def_ref=obj["cred_def_ref"],
        holder_binding=obj["holder_binding"],
        attr_digests=dict(obj["attr_digests"]),
        issuer_signature=obj["issuer_signature"],
        request_nonce=obj["request_nonce"],
        holder_verkey=obj["holder_verkey"],
        holder_signature=obj["holder_signature"],
    )
