"""Simulated reputation chain: factory contracts with attested writes.

Each contract is a per-tracker-instance reputation store mapping uid ->
(pk, uploaded, downloaded).  Writes require an auth token proving the writer
is the attested owner; reads are free and unauthenticated.  A contract may
name a referrer (its predecessor before a migration): reads fall through to
the referrer's *local* records — exactly one hop, so state two migrations
back is deliberately unreachable.

Every mutation is appended to a JSON-lines log before it is applied.  The log
is the persistence format: reconstructing a chain from the log rebuilds the
exact state, and byte-level corruption or truncation is reported with the
first bad sequence number.

The auth token is an attestation quote plus a session-scheme signature over
the operation payload by the key bound into the quote's nonce field
(nonce = H(signing pk)[:16]).  Splicing a genuine quote onto a different key
breaks the nonce binding; writing with a key whose quote fails the allowlist
check is rejected outright.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from . import enclave as encl
from . import sigcrypto as sc

ADDR_LEN = 20


class ChainError(Exception):
    pass


class ChainLogCorrupt(ChainError):
    def __init__(self, seq: int, reason: str):
        super().__init__(f"chain log corrupt at seq {seq}: {reason}")
        self.seq = seq
        self.reason = reason


@dataclass(frozen=True)
class ReputationRecord:
    uid: bytes
    pk: bytes
    up: int
    down: int


@dataclass(frozen=True)
class AuthToken:
    quote: encl.AttestationQuote
    sig: bytes

    def to_bytes(self) -> bytes:
        return sc.canonical_encode(
            [(sc.TAG_BYTES, self.quote.to_bytes()), (sc.TAG_SIG, self.sig)]
        )

    def fingerprint(self) -> bytes:
        return sc.hash_data(self.to_bytes())


def make_auth(quote: encl.AttestationQuote, auth_sk: bytes, payload: bytes) -> AuthToken:
    return AuthToken(quote=quote, sig=sc.session_sign(auth_sk, payload))


def auth_nonce_for(pk: bytes) -> bytes:
    """The quote nonce that binds an attestation to a contract signing key."""
    return sc.hash_data(pk)[: encl.NONCE_LEN]


@dataclass
class Contract:
    addr: bytes
    iid: bytes
    referrer: bytes | None
    owner_pk: bytes
    data: dict = field(default_factory=dict)  # uid -> (pk, up, down)


@dataclass
class Chain:
    allowlist: set
    hw_root_pk: bytes
    path: str | None = None
    contracts: dict = field(default_factory=dict)
    nonce: int = 0  # factory deployment counter
    _seq: int = 0
    _fh: object = None

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None


def _init_payload(iid: bytes, ref_addr: bytes | None, pk: bytes) -> bytes:
    return sc.canonical_encode(
        [
            (sc.TAG_ATOM, b"sc-init"),
            (sc.TAG_BYTES, iid),
            (sc.TAG_BYTES, ref_addr or b""),
            (sc.TAG_PUBKEY, pk),
        ]
    )


def _write_payload(addr: bytes, uid: bytes, pk: bytes, up: int, down: int) -> bytes:
    return sc.canonical_encode(
        [
            (sc.TAG_ATOM, b"sc-write"),
            (sc.TAG_BYTES, addr),
            (sc.TAG_BYTES, uid),
            (sc.TAG_PUBKEY, pk),
            (sc.TAG_UINT, sc.enc_uint(up)),
            (sc.TAG_UINT, sc.enc_uint(down)),
        ]
    )


def _derive_addr(nonce: int, init_payload: bytes) -> bytes:
    return sc.hash_data(
        sc.canonical_encode([(sc.TAG_UINT, sc.enc_uint(nonce)), (sc.TAG_BYTES, init_payload)])
    )[:ADDR_LEN]


def _check_auth(chain: Chain, owner_pk: bytes, payload: bytes, auth: AuthToken) -> bool:
    try:
        if not encl.verify_quote(auth.quote, chain.allowlist, chain.hw_root_pk):
            return False
        if auth.quote.nonce != auth_nonce_for(owner_pk):
            return False
        return sc.session_verify(owner_pk, payload, auth.sig)
    except Exception:
        return False


def _append_log(chain: Chain, op: str, addr: bytes, payload: bytes, auth: AuthToken) -> None:
    chain._seq += 1
    if chain._fh is None:
        return
    entry = {
        "seq": chain._seq,
        "op": op,
        "addr": addr.hex(),
        "payload": payload.hex(),
        "auth_fp": auth.fingerprint().hex(),
    }
    chain._fh.write(json.dumps(entry, sort_keys=True, separators=(",", ":")) + "\n")
    chain._fh.flush()


def chain_new(allowlist, hw_root_pk: bytes, path: str | None = None) -> Chain:
    """Fresh chain, or one replayed from an existing log file at *path*."""
    chain = Chain(allowlist=set(allowlist), hw_root_pk=bytes(hw_root_pk), path=path)
    if path is not None and os.path.exists(path) and os.path.getsize(path) > 0:
        _replay(chain, path)
    if path is not None:
        chain._fh = open(path, "a", encoding="ascii")
    return chain


def _replay(chain: Chain, path: str) -> None:
    with open(path, "rb") as fh:
        raw = fh.read()
    for line in raw.split(b"\n"):
        if line == b"":
            continue
        expect = chain._seq + 1
        try:
            entry = json.loads(line)
            seq = entry["seq"]
            op = entry["op"]
            addr = bytes.fromhex(entry["addr"])
            payload = bytes.fromhex(entry["payload"])
            bytes.fromhex(entry["auth_fp"])
        except (ValueError, KeyError, TypeError) as exc:
            raise ChainLogCorrupt(expect, f"unparseable entry ({exc.__class__.__name__})")
        if seq != expect:
            raise ChainLogCorrupt(expect, f"sequence number {seq} where {expect} expected")
        _apply_logged(chain, op, addr, payload, expect)
        chain._seq = expect


def _apply_logged(chain: Chain, op: str, addr: bytes, payload: bytes, seq: int) -> None:
    try:
        fields = sc.canonical_decode(payload)
    except ValueError:
        raise ChainLogCorrupt(seq, "undecodable payload")
    if op == "init":
        if len(fields) != 4 or fields[0][1] != b"sc-init":
            raise ChainLogCorrupt(seq, "bad init payload shape")
        iid, ref, pk = fields[1][1], fields[2][1], fields[3][1]
        want = _derive_addr(chain.nonce, payload)
        if want != addr:
            raise ChainLogCorrupt(seq, "address does not match factory nonce")
        chain.contracts[addr] = Contract(
            addr=addr, iid=iid, referrer=ref or None, owner_pk=pk
        )
        chain.nonce += 1
    elif op == "write":
        if len(fields) != 6 or fields[0][1] != b"sc-write":
            raise ChainLogCorrupt(seq, "bad write payload shape")
        w_addr, uid, pk = fields[1][1], fields[2][1], fields[3][1]
        up, down = sc.dec_uint(fields[4][1]), sc.dec_uint(fields[5][1])
        if w_addr != addr or addr not in chain.contracts:
            raise ChainLogCorrupt(seq, "write to unknown contract")
        chain.contracts[addr].data[uid] = (pk, up, down)
    else:
        raise ChainLogCorrupt(seq, f"unknown op {op!r}")


def sc_init(chain: Chain, iid: bytes, ref_addr: bytes | None, pk: bytes, auth: AuthToken):
    """Deploy a reputation contract; returns its address, or None if the auth
    token does not prove an attested owner bound to *pk*."""
    if ref_addr is not None and ref_addr not in chain.contracts:
        return None
    payload = _init_payload(iid, ref_addr, pk)
    if not _check_auth(chain, pk, payload, auth):
        return None
    addr = _derive_addr(chain.nonce, payload)
    _append_log(chain, "init", addr, payload, auth)
    chain.contracts[addr] = Contract(addr=addr, iid=iid, referrer=ref_addr, owner_pk=pk)
    chain.nonce += 1
    return addr


def sc_read(chain: Chain, addr: bytes, uid: bytes):
    """Record for uid, following at most one referrer hop; None if absent."""
    try:
        contract = chain.contracts[addr]
    except KeyError:
        raise ChainError(f"unknown contract {addr.hex()}")
    if uid in contract.data:
        pk, up, down = contract.data[uid]
        return ReputationRecord(uid=uid, pk=pk, up=up, down=down)
    if contract.referrer is not None:
        parent = chain.contracts.get(contract.referrer)
        if parent is not None and uid in parent.data:
            pk, up, down = parent.data[uid]
            return ReputationRecord(uid=uid, pk=pk, up=up, down=down)
    return None


def sc_write(chain: Chain, addr: bytes, uid: bytes, value, auth: AuthToken) -> bool:
    """Owner-only write of (pk, up, down) for uid; False on any failure."""
    contract = chain.contracts.get(addr)
    if contract is None:
        return False
    try:
        pk, up, down = value
        if not isinstance(pk, (bytes, bytearray)):
            return False
        up, down = int(up), int(down)
        if up < 0 or down < 0:
            return False
    except (TypeError, ValueError):
        return False
    payload = _write_payload(addr, uid, bytes(pk), up, down)
    if not _check_auth(chain, contract.owner_pk, payload, auth):
        return False
    _append_log(chain, "write", addr, payload, auth)
    contract.data[uid] = (bytes(pk), up, down)
    return True


def get_referrer(chain: Chain, addr: bytes):
    try:
        return chain.contracts[addr].referrer
    except KeyError:
        raise ChainError(f"unknown contract {addr.hex()}")


def sc_items(chain: Chain, addr: bytes):
    """Local records of one contract (no referrer hop), as ReputationRecords."""
    try:
        contract = chain.contracts[addr]
    except KeyError:
        raise ChainError(f"unknown contract {addr.hex()}")
    return [
        ReputationRecord(uid=uid, pk=pk, up=up, down=down)
        for uid, (pk, up, down) in contract.data.items()
    ]


def serialize_state(chain: Chain) -> bytes:
    """Canonical byte serialization of all contract state (for equality and
    digest checks; independent of log or file-handle details)."""
    doc = {
        "nonce": chain.nonce,
        "contracts": {
            addr.hex(): {
                "iid": c.iid.hex(),
                "referrer": c.referrer.hex() if c.referrer else None,
                "owner_pk": c.owner_pk.hex(),
                "records": {
                    uid.hex(): [pk.hex(), up, down] for uid, (pk, up, down) in c.data.items()
                },
            }
            for addr, c in chain.contracts.items()
        },
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("ascii")


def state_digest(chain: Chain) -> bytes:
    return sc.hash_data(serialize_state(chain))


def read_log(path: str):
    """Parse a chain log file into entry dicts (used by the CLI dump)."""
    entries = []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if line:
                entries.append(json.loads(line))
    return entries
