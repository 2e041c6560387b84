"""Enclave-resident tracker: registration, gated announces, receipted reports.

The tracker runs inside an attested enclave and owns one reputation contract.
Registration writes a user's key and starting credit on chain; announces gate
swarm admission on the up/down ratio and hand back peer samples; reports
carry receipt-backed upload claims that are verified in aggregate, credited
exactly, and deduplicated over a bounded epoch horizon.  Migration spins up a
successor instance whose contract names the old one as referrer, so one
previous generation of records stays readable.

All mutating entry points are serial; a rejected call leaves tracker and
contract state exactly as it found them.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction

from . import attestation as at
from . import contract as ct
from . import enclave as encl
from . import sigcrypto as sc

DEFAULT_SAMPLE_CAP = 50

EVENTS = ("started", "stopped", "completed", "none")


@dataclass(frozen=True)
class PublicParams:
    lam: int
    iid: bytes
    min_rep: Fraction
    init_credit: int


def setup(lam: int, min_rep, init_credit: int, rng: random.Random) -> PublicParams:
    if lam not in (128, 256):
        raise ValueError("unsupported security parameter")
    iid = rng.getrandbits(lam).to_bytes(lam // 8, "big")
    return PublicParams(
        lam=lam, iid=iid, min_rep=Fraction(min_rep), init_credit=int(init_credit)
    )


def rep(up: int, down: int):
    """Upload/download ratio; infinite when nothing has been downloaded, so a
    freshly registered user always clears the admission threshold."""
    if up < 0 or down < 0:
        raise ValueError("negative byte counters")
    if down == 0:
        return math.inf
    return Fraction(up, down)


def register_msg(iid: bytes, uid: bytes) -> bytes:
    return sc.canonical_encode(
        [(sc.TAG_ATOM, b"register"), (sc.TAG_BYTES, iid), (sc.TAG_BYTES, uid)]
    )


def announce_msg(uid: bytes, tid: bytes, event: str) -> bytes:
    return sc.canonical_encode(
        [
            (sc.TAG_ATOM, b"announce"),
            (sc.TAG_BYTES, uid),
            (sc.TAG_BYTES, tid),
            (sc.TAG_ATOM, event.encode()),
        ]
    )


# ---------------------------------------------------------------------------
# report payloads


@dataclass(frozen=True)
class ReportPayload:
    uid: bytes
    pk: bytes
    peers: tuple          # (pk_j, uid_j) per receipt
    meta: at.TorrentMeta
    timestamps: tuple     # t_j per receipt, seconds
    agg_sig: sc.AggregateSignature
    delta_up: int
    delta_down: int
    receipts: tuple       # (h_j, j) per receipt


@dataclass(frozen=True)
class SessionReportPayload:
    uid: bytes
    pk: bytes
    peers: tuple          # (pk_j, uid_j) per cert
    meta: at.TorrentMeta
    certs: tuple
    agg_sig: sc.AggregateSignature
    items: tuple          # (cert index, SessionReceipt)
    delta_up: int
    delta_down: int


@dataclass(frozen=True)
class BatchReportPayload:
    uid: bytes
    pk: bytes
    peers: tuple          # (pk_j, uid_j) per batch receipt
    meta: at.TorrentMeta
    batches: tuple        # BatchReceipt per entry
    agg_sig: sc.AggregateSignature
    delta_up: int
    delta_down: int


def build_report(uid: bytes, pk: bytes, meta: at.TorrentMeta, entries,
                 params: at.EpochParams, delta_down: int = 0) -> ReportPayload:
    """Assemble a report from (receipt, downloader uid) pairs the reporter
    collected while seeding.  The aggregate signature replaces the individual
    receipt signatures on the wire."""
    peers, stamps, items, sigs = [], [], [], []
    total = 0
    for receipt, peer_uid in entries:
        if receipt.sender_pk != pk or receipt.infohash != meta.infohash:
            raise ValueError("receipt does not belong to this reporter/torrent")
        peers.append((receipt.receiver_pk, peer_uid))
        stamps.append(receipt.epoch * params.window)
        items.append((receipt.piece_hash, receipt.index))
        sigs.append(receipt.sig)
        total += at.piece_len(meta, receipt.index)
    return ReportPayload(
        uid=uid,
        pk=pk,
        peers=tuple(peers),
        meta=meta,
        timestamps=tuple(stamps),
        agg_sig=sc.aggregate(sigs),
        delta_up=total,
        delta_down=delta_down,
        receipts=tuple(items),
    )


def build_session_report(uid: bytes, pk: bytes, meta: at.TorrentMeta, sessions,
                         delta_down: int = 0) -> SessionReportPayload:
    """*sessions* is a list of (cert, downloader uid, [session receipts])."""
    peers, certs, items = [], [], []
    total = 0
    for ci, (cert, peer_uid, srs) in enumerate(sessions):
        if cert.sender_pk != pk or cert.infohash != meta.infohash:
            raise ValueError("cert does not belong to this reporter/torrent")
        peers.append((cert.receiver_pk, peer_uid))
        certs.append(cert)
        for sr in srs:
            items.append((ci, sr))
            total += at.piece_len(meta, sr.index)
    return SessionReportPayload(
        uid=uid,
        pk=pk,
        peers=tuple(peers),
        meta=meta,
        certs=tuple(certs),
        agg_sig=at.aggregate_session_certs(certs),
        items=tuple(items),
        delta_up=total,
        delta_down=delta_down,
    )


def build_batch_report(uid: bytes, pk: bytes, meta: at.TorrentMeta, entries,
                       delta_down: int = 0) -> BatchReportPayload:
    """*entries* is a list of (BatchReceipt, downloader uid) pairs."""
    peers, batches, sigs = [], [], []
    total = 0
    for br, peer_uid in entries:
        if br.sender_pk != pk or br.infohash != meta.infohash:
            raise ValueError("batch receipt does not belong to this reporter/torrent")
        peers.append((br.receiver_pk, peer_uid))
        batches.append(br)
        sigs.append(br.sig)
        total += sum(at.piece_len(meta, j) for j in br.indices)
    return BatchReportPayload(
        uid=uid,
        pk=pk,
        peers=tuple(peers),
        meta=meta,
        batches=tuple(batches),
        agg_sig=sc.aggregate(sigs),
        delta_up=total,
        delta_down=delta_down,
    )


# ---------------------------------------------------------------------------


@dataclass
class Tracker:
    pp: PublicParams
    epoch: at.EpochParams
    world: encl.EnclaveWorld
    chain: ct.Chain
    addr: bytes
    measurement: bytes
    quote: encl.AttestationQuote
    auth: sc.KeyPair
    sample_cap: int = DEFAULT_SAMPLE_CAP
    swarms: dict = field(default_factory=dict)    # tid -> {pk: (ip, port)}
    torrents: dict = field(default_factory=dict)  # infohash -> TorrentMeta
    index: dict = field(default_factory=dict)     # pk -> uid
    recent: dict = field(default_factory=dict)    # ReceiptID -> insertion epoch
    rng: random.Random = field(default_factory=random.Random)

    # -- provisioning --------------------------------------------------------

    @classmethod
    def launch(cls, world: encl.EnclaveWorld, chain: ct.Chain, pp: PublicParams,
               program_id: bytes, config: bytes,
               epoch: at.EpochParams | None = None,
               sample_cap: int = DEFAULT_SAMPLE_CAP,
               ref_addr: bytes | None = None):
        """Provision a tracker instance: measure, attest, derive the contract
        owner key from the KMS, and deploy the reputation contract.  Returns
        None when the measurement is not allowlisted or deployment fails."""
        m = encl.measure(program_id, config)
        boot_quote = encl.attest_quote(world, m, b"\x00" * encl.NONCE_LEN)
        root = encl.kms_derive(world, boot_quote)
        if root is None:
            return None
        auth = encl.derive_contract_auth_keys(root)
        quote = encl.attest_quote(world, m, ct.auth_nonce_for(auth.pk))
        init_payload = ct._init_payload(pp.iid, ref_addr, auth.pk)
        addr = ct.sc_init(
            chain, pp.iid, ref_addr, auth.pk, ct.make_auth(quote, auth.sk, init_payload)
        )
        if addr is None:
            return None
        tracker = cls(
            pp=pp,
            epoch=epoch or at.EpochParams(),
            world=world,
            chain=chain,
            addr=addr,
            measurement=m,
            quote=quote,
            auth=auth,
            sample_cap=sample_cap,
            rng=random.Random(int.from_bytes(sc.hash_data(root.key.sk + pp.iid)[:8], "big")),
        )
        if ref_addr is not None:
            for rec in ct.sc_items(chain, ref_addr):
                tracker.index[rec.pk] = rec.uid
        return tracker

    def add_torrent(self, meta: at.TorrentMeta) -> None:
        self.torrents[meta.infohash] = meta

    def _auth_for(self, payload: bytes) -> ct.AuthToken:
        return ct.make_auth(self.quote, self.auth.sk, payload)

    def _write(self, uid: bytes, pk: bytes, up: int, down: int) -> bool:
        payload = ct._write_payload(self.addr, uid, pk, up, down)
        return ct.sc_write(self.chain, self.addr, uid, (pk, up, down), self._auth_for(payload))

    # -- user-facing operations ---------------------------------------------

    def register(self, uid: bytes, pk: bytes, sig: bytes) -> bool:
        """The registration signature also serves as proof of possession of
        the announced key, which is what makes aggregate report verification
        safe against rogue-key composition."""
        if not sc.verify(pk, register_msg(self.pp.iid, uid), sig):
            return False
        if ct.sc_read(self.chain, self.addr, uid) is not None:
            return False
        if not self._write(uid, pk, self.pp.init_credit, 0):
            return False
        self.index[pk] = uid
        return True

    def announce(self, uid: bytes, pk: bytes, sig: bytes, tid: bytes, event: str,
                 ip: str, port: int, rng: random.Random | None = None):
        if event not in EVENTS:
            return []
        record = ct.sc_read(self.chain, self.addr, uid)
        if record is None or record.pk != pk:
            return []
        if not sc.verify(pk, announce_msg(uid, tid, event), sig):
            return []
        if event == "started" and rep(record.up, record.down) < self.pp.min_rep:
            return []
        swarm = self.swarms.setdefault(tid, {})
        if event == "stopped":
            swarm.pop(pk, None)
        else:
            swarm[pk] = (ip, port)
        others = sorted(p for p in swarm if p != pk)
        k = min(self.sample_cap, len(others))
        picked = (rng or self.rng).sample(others, k)
        return [(p, swarm[p][0], swarm[p][1]) for p in picked]

    # -- reports -------------------------------------------------------------

    def _resolve(self, pk: bytes, uid: bytes):
        """Downloader resolution goes through the in-enclave index; the
        payload's uid is cross-checked, not trusted."""
        known = self.index.get(pk)
        if known is None or known != uid:
            return None
        return ct.sc_read(self.chain, self.addr, uid)

    def report(self, payload: ReportPayload, now: int) -> bool:
        p = payload
        n = len(p.receipts)
        if not (len(p.peers) == len(p.timestamps) == n) or n == 0:
            return False
        meta = self.torrents.get(p.meta.infohash)
        if meta is None:
            return False
        reporter = self._resolve(p.pk, p.uid)
        if reporter is None or p.delta_down < 0:
            return False
        now_epoch = at.epoch_of(now, self.epoch)
        pairs, rids = [], []
        total = 0
        for (pk_j, uid_j), t_j, (h_j, j) in zip(p.peers, p.timestamps, p.receipts):
            if pk_j == p.pk:
                return False  # no credit for transfers to oneself
            e_j = at.epoch_of(t_j, self.epoch)
            if not at.epoch_within_skew(e_j, now_epoch, self.epoch):
                return False
            rid = (meta.infohash, p.pk, pk_j, h_j, j, e_j)
            if rid in self.recent or rid in rids:
                return False
            if not 0 <= j < meta.num_pieces or h_j != meta.piece_hashes[j]:
                return False
            if self._resolve(pk_j, uid_j) is None:
                return False
            pairs.append((pk_j, at.receipt_msg(meta.infohash, p.pk, h_j, j, e_j)))
            rids.append(rid)
            total += at.piece_len(meta, j)
        if p.delta_up != total:
            return False
        if not sc.aggregate_verify(pairs, p.agg_sig):
            return False
        self._apply_credits(p, now_epoch, rids,
                            [(pk_j, uid_j, at.piece_len(meta, j))
                             for (pk_j, uid_j), (_, j) in zip(p.peers, p.receipts)])
        return True

    def report_session(self, payload: SessionReportPayload, now: int) -> bool:
        p = payload
        if not p.certs or not p.items or len(p.peers) != len(p.certs):
            return False
        meta = self.torrents.get(p.meta.infohash)
        if meta is None:
            return False
        reporter = self._resolve(p.pk, p.uid)
        if reporter is None or p.delta_down < 0:
            return False
        now_epoch = at.epoch_of(now, self.epoch)
        for cert, (pk_j, uid_j) in zip(p.certs, p.peers):
            if cert.sender_pk != p.pk or cert.infohash != meta.infohash:
                return False
            if cert.receiver_pk != pk_j or pk_j == p.pk:
                return False
            if not at.epoch_within_skew(cert.epoch, now_epoch, self.epoch):
                return False
            if self._resolve(pk_j, uid_j) is None:
                return False
        if not at.verify_aggregated_certs(p.certs, p.agg_sig, now, self.epoch):
            return False
        sids = [sc.hash_data(at._cert_msg(c.infohash, c.sender_pk, c.session_pk, c.epoch))
                for c in p.certs]
        rids, credits = [], []
        total = 0
        for ci, sr in p.items:
            if not 0 <= ci < len(p.certs):
                return False
            cert = p.certs[ci]
            if not at.epoch_within_skew(sr.epoch, now_epoch, self.epoch):
                return False
            rid = ("session", sids[ci], sr.index, sr.epoch)
            if rid in self.recent or rid in rids:
                return False
            if not at.verify_session_receipt(cert, sr, meta, now, self.epoch):
                return False
            rids.append(rid)
            size = at.piece_len(meta, sr.index)
            credits.append((cert.receiver_pk, p.peers[ci][1], size))
            total += size
        if p.delta_up != total:
            return False
        self._apply_credits(p, now_epoch, rids, credits)
        return True

    def report_batch(self, payload: BatchReportPayload, now: int) -> bool:
        p = payload
        n = len(p.batches)
        if len(p.peers) != n or n == 0:
            return False
        meta = self.torrents.get(p.meta.infohash)
        if meta is None:
            return False
        reporter = self._resolve(p.pk, p.uid)
        if reporter is None or p.delta_down < 0:
            return False
        now_epoch = at.epoch_of(now, self.epoch)
        pairs, rids, credits = [], [], []
        total = 0
        for br, (pk_j, uid_j) in zip(p.batches, p.peers):
            if br.sender_pk != p.pk or br.infohash != meta.infohash:
                return False
            if br.receiver_pk != pk_j or pk_j == p.pk:
                return False
            if not at.epoch_within_skew(br.epoch, now_epoch, self.epoch):
                return False
            rid = at.batch_id(br)
            if rid in self.recent or rid in rids:
                return False
            if len(br.indices) != len(br.piece_hashes) or not br.indices:
                return False
            if list(br.indices) != sorted(set(br.indices)):
                return False
            size = 0
            for j, h_j in zip(br.indices, br.piece_hashes):
                if not 0 <= j < meta.num_pieces or h_j != meta.piece_hashes[j]:
                    return False
                size += at.piece_len(meta, j)
            if self._resolve(pk_j, uid_j) is None:
                return False
            root = at.merkle_root(
                [at._merkle_leaf(j, h) for j, h in zip(br.indices, br.piece_hashes)])
            pairs.append((pk_j, at._batch_msg(meta.infohash, p.pk, root, br.epoch)))
            rids.append(rid)
            credits.append((pk_j, uid_j, size))
            total += size
        if p.delta_up != total:
            return False
        if not sc.aggregate_verify(pairs, p.agg_sig):
            return False
        self._apply_credits(p, now_epoch, rids, credits)
        return True

    def _apply_credits(self, p, now_epoch: int, rids, downloads) -> None:
        """downloads: (pk_j, uid_j, nbytes) per verified receipt.  Contract
        writes are grouped per uid so each affected record is written once."""
        reporter = ct.sc_read(self.chain, self.addr, p.uid)
        self._write(p.uid, reporter.pk, reporter.up + p.delta_up, reporter.down + p.delta_down)
        per_uid = {}
        for _, uid_j, size in downloads:
            per_uid[uid_j] = per_uid.get(uid_j, 0) + size
        for uid_j, size in per_uid.items():
            rec = ct.sc_read(self.chain, self.addr, uid_j)
            self._write(uid_j, rec.pk, rec.up, rec.down + size)
        for rid in rids:
            self.recent[rid] = now_epoch

    def gc_recent(self, now: int) -> int:
        """Drop dedup entries old enough that the epoch-window check alone
        rejects their receipts; returns how many were removed."""
        horizon = at.epoch_of(now, self.epoch) - self.epoch.delta - 1
        stale = [rid for rid, e in self.recent.items() if e < horizon]
        for rid in stale:
            del self.recent[rid]
        return len(stale)


def migrate(world: encl.EnclaveWorld, chain: ct.Chain, addr_old: bytes,
            pp_new: PublicParams, program_id: bytes, config: bytes,
            epoch: at.EpochParams | None = None,
            sample_cap: int = DEFAULT_SAMPLE_CAP):
    """Stand up a successor tracker whose contract inherits from *addr_old*.
    Returns the new Tracker, or None when attestation or deployment fails.
    Records two migrations back are unreachable by design: the new contract
    reads fall through exactly one referrer hop."""
    if addr_old not in chain.contracts:
        return None
    m = encl.measure(program_id, config)
    probe = encl.attest_quote(world, m, b"\x00" * encl.NONCE_LEN)
    if not encl.verify_quote(probe, chain.allowlist, chain.hw_root_pk):
        return None
    return Tracker.launch(
        world, chain, pp_new, program_id, config,
        epoch=epoch, sample_cap=sample_cap, ref_addr=addr_old,
    )
