"""Receipted piece transfers: per-piece, adaptive, batched, and session modes.

A receipt is a downloader's signed statement that it received piece *i* of a
torrent from a particular sender during an epoch.  Epochs discretize time
into fixed windows; verifiers accept receipts from the current window and the
``delta`` preceding ones, so a receipt is replayable only inside a bounded
horizon and the deduplication set kept by the tracker needs to cover exactly
that horizon.

Attestation policies trade signature count against verification cost:

* per-piece -- one long-term signature per piece (n signatures).
* adaptive  -- full coverage of the first and last runs of pieces plus a
               strided sample in between.
* batch     -- one signature per k pieces, over a Merkle root of
               position-bound piece digests.
* session   -- one long-term signature certifying an ephemeral session key,
               then one cheap session signature per piece.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from . import sigcrypto as sc

DEFAULT_EPOCH_WINDOW = 3600
DEFAULT_EPOCH_DELTA = 2


@dataclass(frozen=True)
class EpochParams:
    window: int = DEFAULT_EPOCH_WINDOW
    delta: int = DEFAULT_EPOCH_DELTA


def epoch_of(t: int, params: EpochParams) -> int:
    if t < 0:
        raise ValueError("time must be non-negative")
    return int(t) // params.window


def epoch_within_skew(epoch: int, now_epoch: int, params: EpochParams, skew: int = 0) -> bool:
    """Acceptance window for a claimed epoch.

    With skew=0 this is the verifier-side rule: the current epoch and the
    ``delta`` before it.  Peers validating each other's receipts allow skew=1
    so a receipt minted just across an epoch boundary by a clock slightly
    ahead or behind is not bounced.
    """
    return now_epoch - params.delta - skew <= epoch <= now_epoch + skew


# ---------------------------------------------------------------------------
# torrent metadata


@dataclass(frozen=True)
class TorrentMeta:
    name: str
    piece_size: int
    length: int
    piece_hashes: tuple
    infohash: bytes

    @property
    def num_pieces(self) -> int:
        return len(self.piece_hashes)


def make_torrent(name: str, piece_hashes, piece_size: int, length: int | None = None) -> TorrentMeta:
    hashes = tuple(bytes(h) for h in piece_hashes)
    if not hashes:
        raise ValueError("a torrent needs at least one piece")
    if any(len(h) != sc.DIGEST_LEN for h in hashes):
        raise ValueError("piece hashes must be digests")
    if length is None:
        length = piece_size * len(hashes)
    if not (piece_size * (len(hashes) - 1) < length <= piece_size * len(hashes)):
        raise ValueError("length inconsistent with piece count")
    fields = [(sc.TAG_ATOM, name.encode()), (sc.TAG_UINT, sc.enc_uint(piece_size))]
    fields += [(sc.TAG_DIGEST, h) for h in hashes]
    infohash = sc.hash_data(sc.canonical_encode(fields))
    return TorrentMeta(
        name=name, piece_size=piece_size, length=length, piece_hashes=hashes, infohash=infohash
    )


def piece_len(meta: TorrentMeta, index: int) -> int:
    if not 0 <= index < meta.num_pieces:
        raise IndexError(index)
    if index == meta.num_pieces - 1:
        return meta.length - meta.piece_size * (meta.num_pieces - 1)
    return meta.piece_size


# ---------------------------------------------------------------------------
# per-piece receipts


@dataclass(frozen=True)
class Receipt:
    infohash: bytes
    sender_pk: bytes
    receiver_pk: bytes
    piece_hash: bytes
    index: int
    epoch: int
    sig: bytes


def receipt_msg(infohash: bytes, sender_pk: bytes, piece_hash: bytes, index: int, epoch: int) -> bytes:
    # No leading atom: a receipt is the only signed message whose first field
    # is a bare byte string, so the encoding is already domain-separated.
    return sc.canonical_encode(
        [
            (sc.TAG_BYTES, infohash),
            (sc.TAG_PUBKEY, sender_pk),
            (sc.TAG_DIGEST, piece_hash),
            (sc.TAG_UINT, sc.enc_uint(index)),
            (sc.TAG_UINT, sc.enc_uint(epoch)),
        ]
    )


def attest(receiver: sc.KeyPair, infohash: bytes, sender_pk: bytes, piece: bytes,
           index: int, t: int, params: EpochParams) -> Receipt:
    """Sign a receipt for a received piece at wall-clock time *t*."""
    piece_hash = sc.hash_data(piece)
    epoch = epoch_of(t, params)
    sig = sc.sign(receiver.sk, receipt_msg(infohash, sender_pk, piece_hash, index, epoch))
    return Receipt(
        infohash=infohash,
        sender_pk=sender_pk,
        receiver_pk=receiver.pk,
        piece_hash=piece_hash,
        index=index,
        epoch=epoch,
        sig=sig,
    )


def verify_receipt(receipt: Receipt, meta: TorrentMeta | None, t_now: int,
                   params: EpochParams, skew: int = 0) -> bool:
    """Check a receipt.  With *meta* the piece digest is bound to the torrent;
    without it only the signature and epoch window are checked."""
    try:
        if meta is not None:
            if receipt.infohash != meta.infohash:
                return False
            if not 0 <= receipt.index < meta.num_pieces:
                return False
            if receipt.piece_hash != meta.piece_hashes[receipt.index]:
                return False
        if not epoch_within_skew(receipt.epoch, epoch_of(t_now, params), params, skew):
            return False
        msg = receipt_msg(
            receipt.infohash, receipt.sender_pk, receipt.piece_hash, receipt.index, receipt.epoch
        )
        return sc.verify(receipt.receiver_pk, msg, receipt.sig)
    except Exception:
        return False


def receipt_id(receipt: Receipt):
    """Replay-detection key: everything the signature commits to, plus the
    signer.  Two receipts with the same id are the same attested event."""
    return (
        receipt.infohash,
        receipt.sender_pk,
        receipt.receiver_pk,
        receipt.piece_hash,
        receipt.index,
        receipt.epoch,
    )


# ---------------------------------------------------------------------------
# adaptive coverage

def adaptive_indices(n: int, head: int, stride: int, tail: int):
    """Indices that get their own receipt under adaptive coverage: the first
    *head* pieces, the last *tail*, and every *stride*-th one in between."""
    if n <= head + tail:
        return list(range(n))
    out = set(range(head)) | set(range(n - tail, n)) | set(range(head, n - tail, stride))
    return sorted(out)


# ---------------------------------------------------------------------------
# batched receipts over a Merkle root


def _merkle_leaf(index: int, piece_hash: bytes) -> bytes:
    return sc.hash_data(
        sc.canonical_encode([(sc.TAG_UINT, sc.enc_uint(index)), (sc.TAG_DIGEST, piece_hash)])
    )


def _merkle_node(left: bytes, right: bytes) -> bytes:
    return sc.hash_data(
        sc.canonical_encode([(sc.TAG_DIGEST, left), (sc.TAG_DIGEST, right)])
    )


def merkle_root(leaves) -> bytes:
    """Root of a binary Merkle tree; an unpaired last node is promoted to the
    next level unchanged."""
    level = list(leaves)
    if not level:
        raise ValueError("empty leaf set")
    while len(level) > 1:
        nxt = [_merkle_node(level[i], level[i + 1]) for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


@dataclass(frozen=True)
class BatchReceipt:
    infohash: bytes
    sender_pk: bytes
    receiver_pk: bytes
    indices: tuple
    piece_hashes: tuple
    epoch: int
    sig: bytes


def _batch_msg(infohash: bytes, sender_pk: bytes, root: bytes, epoch: int) -> bytes:
    return sc.canonical_encode(
        [
            (sc.TAG_ATOM, b"batch-receipt"),
            (sc.TAG_BYTES, infohash),
            (sc.TAG_PUBKEY, sender_pk),
            (sc.TAG_DIGEST, root),
            (sc.TAG_UINT, sc.enc_uint(epoch)),
        ]
    )


def batch_attest(receiver: sc.KeyPair, infohash: bytes, sender_pk: bytes,
                 pieces: dict, t: int, params: EpochParams) -> BatchReceipt:
    """One signature covering several pieces; *pieces* maps index -> content."""
    if not pieces:
        raise ValueError("empty batch")
    indices = tuple(sorted(pieces))
    hashes = tuple(sc.hash_data(pieces[i]) for i in indices)
    root = merkle_root([_merkle_leaf(i, h) for i, h in zip(indices, hashes)])
    epoch = epoch_of(t, params)
    sig = sc.sign(receiver.sk, _batch_msg(infohash, sender_pk, root, epoch))
    return BatchReceipt(
        infohash=infohash,
        sender_pk=sender_pk,
        receiver_pk=receiver.pk,
        indices=indices,
        piece_hashes=hashes,
        epoch=epoch,
        sig=sig,
    )


def verify_batch(br: BatchReceipt, meta: TorrentMeta | None, t_now: int,
                 params: EpochParams, skew: int = 0) -> bool:
    try:
        if len(br.indices) != len(br.piece_hashes) or not br.indices:
            return False
        if list(br.indices) != sorted(set(br.indices)):
            return False
        if meta is not None:
            if br.infohash != meta.infohash:
                return False
            for i, h in zip(br.indices, br.piece_hashes):
                if not 0 <= i < meta.num_pieces or h != meta.piece_hashes[i]:
                    return False
        if not epoch_within_skew(br.epoch, epoch_of(t_now, params), params, skew):
            return False
        root = merkle_root([_merkle_leaf(i, h) for i, h in zip(br.indices, br.piece_hashes)])
        return sc.verify(br.receiver_pk, _batch_msg(br.infohash, br.sender_pk, root, br.epoch), br.sig)
    except Exception:
        return False


def batch_id(br: BatchReceipt):
    return (br.infohash, br.sender_pk, br.receiver_pk, br.indices, br.piece_hashes, br.epoch)


# ---------------------------------------------------------------------------
# session mode: certify an ephemeral key once, then sign cheaply per piece


@dataclass(frozen=True)
class SessionCert:
    infohash: bytes
    sender_pk: bytes
    receiver_pk: bytes
    session_pk: bytes
    epoch: int
    sig: bytes


@dataclass(frozen=True)
class SessionReceipt:
    piece_hash: bytes
    index: int
    epoch: int
    sig: bytes


def _cert_msg(infohash: bytes, sender_pk: bytes, session_pk: bytes, epoch: int) -> bytes:
    return sc.canonical_encode(
        [
            (sc.TAG_ATOM, b"session-cert"),
            (sc.TAG_BYTES, infohash),
            (sc.TAG_PUBKEY, sender_pk),
            (sc.TAG_BYTES, session_pk),
            (sc.TAG_UINT, sc.enc_uint(epoch)),
        ]
    )


def _session_receipt_msg(infohash: bytes, sender_pk: bytes, piece_hash: bytes,
                         index: int, epoch: int) -> bytes:
    return sc.canonical_encode(
        [
            (sc.TAG_ATOM, b"session-receipt"),
            (sc.TAG_BYTES, infohash),
            (sc.TAG_PUBKEY, sender_pk),
            (sc.TAG_DIGEST, piece_hash),
            (sc.TAG_UINT, sc.enc_uint(index)),
            (sc.TAG_UINT, sc.enc_uint(epoch)),
        ]
    )


def open_session(receiver: sc.KeyPair, infohash: bytes, sender_pk: bytes,
                 t: int, params: EpochParams):
    """Mint a session key for one (torrent, sender) exchange and certify it
    with the receiver's long-term key.  Returns (cert, session keypair).  The
    session key is derived deterministically so a re-opened session in the
    same epoch reuses the same key."""
    epoch = epoch_of(t, params)
    seed = hashlib.sha256(
        b"session-key" + receiver.sk + infohash + sender_pk + sc.enc_uint(epoch)
    ).digest()
    skp = sc.session_keygen(seed)
    sig = sc.sign(receiver.sk, _cert_msg(infohash, sender_pk, skp.pk, epoch))
    cert = SessionCert(
        infohash=infohash,
        sender_pk=sender_pk,
        receiver_pk=receiver.pk,
        session_pk=skp.pk,
        epoch=epoch,
        sig=sig,
    )
    return cert, skp


def verify_session_cert(cert: SessionCert, t_now: int, params: EpochParams, skew: int = 0) -> bool:
    try:
        if not epoch_within_skew(cert.epoch, epoch_of(t_now, params), params, skew):
            return False
        msg = _cert_msg(cert.infohash, cert.sender_pk, cert.session_pk, cert.epoch)
        return sc.verify(cert.receiver_pk, msg, cert.sig)
    except Exception:
        return False


def session_attest(session_sk: bytes, cert: SessionCert, piece: bytes,
                   index: int, t: int, params: EpochParams) -> SessionReceipt:
    piece_hash = sc.hash_data(piece)
    epoch = epoch_of(t, params)
    msg = _session_receipt_msg(cert.infohash, cert.sender_pk, piece_hash, index, epoch)
    return SessionReceipt(
        piece_hash=piece_hash, index=index, epoch=epoch, sig=sc.session_sign(session_sk, msg)
    )


def verify_session_receipt(cert: SessionCert, sr: SessionReceipt, meta: TorrentMeta | None,
                           t_now: int, params: EpochParams, skew: int = 0) -> bool:
    """Checks one session receipt against an already-verified cert.  The cert
    itself must be validated separately (once per session, not per piece)."""
    try:
        if meta is not None:
            if cert.infohash != meta.infohash:
                return False
            if not 0 <= sr.index < meta.num_pieces:
                return False
            if sr.piece_hash != meta.piece_hashes[sr.index]:
                return False
        if not epoch_within_skew(sr.epoch, epoch_of(t_now, params), params, skew):
            return False
        msg = _session_receipt_msg(cert.infohash, cert.sender_pk, sr.piece_hash, sr.index, sr.epoch)
        return sc.session_verify(cert.session_pk, msg, sr.sig)
    except Exception:
        return False


def aggregate_session_certs(certs) -> sc.AggregateSignature:
    """Aggregate the long-term signatures of many session certs so a verifier
    can admit a whole report batch with one pairing product."""
    return sc.aggregate([c.sig for c in certs])


def verify_aggregated_certs(certs, agg: sc.AggregateSignature, t_now: int,
                            params: EpochParams, skew: int = 0) -> bool:
    try:
        now_epoch = epoch_of(t_now, params)
        for c in certs:
            if not epoch_within_skew(c.epoch, now_epoch, params, skew):
                return False
        entries = [
            (c.receiver_pk, _cert_msg(c.infohash, c.sender_pk, c.session_pk, c.epoch))
            for c in certs
        ]
        return sc.aggregate_verify(entries, agg)
    except Exception:
        return False


# ---------------------------------------------------------------------------
# policies


@dataclass(frozen=True)
class PerPiecePolicy:
    pass


@dataclass(frozen=True)
class AdaptivePolicy:
    head: int = 100
    stride: int = 10
    tail: int = 100


@dataclass(frozen=True)
class BatchPolicy:
    k: int = 16


@dataclass(frozen=True)
class SessionPolicy:
    pass


@dataclass(frozen=True)
class NullPolicy:
    """No receipts at all — the insecure baseline a swarm runs without
    transfer attestation.  Useful as a control in overhead comparisons."""


def signature_count(policy, n: int) -> int:
    """Long-term-equivalent signatures a downloader issues for an n-piece
    torrent under a policy.  Session mode still issues n (cheap) per-piece
    signatures; its one certifying long-term signature is counted separately
    by the cost model."""
    if n < 0:
        raise ValueError("negative piece count")
    if isinstance(policy, PerPiecePolicy):
        return n
    if isinstance(policy, AdaptivePolicy):
        covered = policy.head + policy.tail
        if n <= covered:
            return n
        return covered + -(-(n - covered) // policy.stride)
    if isinstance(policy, BatchPolicy):
        return -(-n // policy.k)
    if isinstance(policy, SessionPolicy):
        return n
    if isinstance(policy, NullPolicy):
        return 0
    raise TypeError(f"unknown policy {policy!r}")


_POLICY_NAMES = {
    PerPiecePolicy: "per-piece",
    AdaptivePolicy: "adaptive",
    BatchPolicy: "batch",
    SessionPolicy: "session",
    NullPolicy: "null",
}


def policy_to_json(policy) -> dict:
    name = _POLICY_NAMES.get(type(policy))
    if name is None:
        raise TypeError(f"unknown policy {policy!r}")
    doc = {"policy": name}
    if isinstance(policy, AdaptivePolicy):
        doc.update(head=policy.head, stride=policy.stride, tail=policy.tail)
    elif isinstance(policy, BatchPolicy):
        doc.update(k=policy.k)
    return doc


def policy_from_json(doc: dict):
    name = doc["policy"]
    if name == "per-piece":
        return PerPiecePolicy()
    if name == "adaptive":
        return AdaptivePolicy(
            head=int(doc.get("head", 100)),
            stride=int(doc.get("stride", 10)),
            tail=int(doc.get("tail", 100)),
        )
    if name == "batch":
        return BatchPolicy(k=int(doc.get("k", 16)))
    if name == "session":
        return SessionPolicy()
    if name == "null":
        return NullPolicy()
    raise ValueError(f"unknown policy name {name!r}")
