"""Authenticated Kademlia fallback for peer discovery when the tracker is down.

Node identity is the truncated hash of a peer's long-term key, so DHT
identities are bound to on-chain registrations.  Storage nodes accept an
announce record only after checking the reputation contract: the key must be
registered, match the record, and clear the admission threshold — the
contract acts as the PKI.  Requesters re-verify every record they retrieve,
so a tampered store can never propagate into a peer's local view.

Everything runs over the simulator's in-process message bus: configurable
drop probability, an explicit dead set, and per-call counters.  No sockets.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from . import contract as ct
from . import sigcrypto as sc
from . import tracker as tr

ID_BITS = 160
ID_LEN = ID_BITS // 8


class JoinError(Exception):
    pass


@dataclass(frozen=True)
class DhtParams:
    k: int = 20
    alpha: int = 3
    ttl_epochs: int = 2


def node_id(pk: bytes) -> bytes:
    return sc.hash_data(pk)[:ID_LEN]


def torrent_key(infohash: bytes) -> bytes:
    return infohash[:ID_LEN]


def xor_distance(a: bytes, b: bytes) -> int:
    return int.from_bytes(a, "big") ^ int.from_bytes(b, "big")


def announce_record_msg(infohash: bytes, pk: bytes, ip: str, port: int) -> bytes:
    return sc.canonical_encode(
        [
            (sc.TAG_ATOM, b"announce"),
            (sc.TAG_BYTES, infohash),
            (sc.TAG_PUBKEY, pk),
            (sc.TAG_BYTES, ip.encode()),
            (sc.TAG_UINT, sc.enc_uint(port)),
        ]
    )


@dataclass(frozen=True)
class AnnounceRecord:
    """Signed claim of swarm membership.  ``uid`` is an unsigned routing hint
    for the storage node's contract lookup; everything the verifier relies on
    is covered by the signature or read from the chain."""

    uid: bytes
    pk: bytes
    ip: str
    port: int
    infohash: bytes
    sig: bytes
    stored_epoch: int | None = None


def make_record(kp: sc.KeyPair, uid: bytes, infohash: bytes, ip: str, port: int) -> AnnounceRecord:
    sig = sc.sign(kp.sk, announce_record_msg(infohash, kp.pk, ip, port))
    return AnnounceRecord(uid=uid, pk=kp.pk, ip=ip, port=port, infohash=infohash, sig=sig)


# ---------------------------------------------------------------------------


@dataclass
class DhtNode:
    kp: sc.KeyPair
    uid: bytes
    ip: str
    port: int
    chain: ct.Chain
    addr_rep: bytes
    min_rep: object
    params: DhtParams = field(default_factory=DhtParams)
    read_delay_epochs: int = 0
    read_budget: int | None = None
    cached_bootstrap: list = field(default_factory=list)

    def __post_init__(self):
        self.nid = node_id(self.kp.pk)
        self.buckets = [[] for _ in range(ID_BITS)]  # entries: (nid, ip, port)
        self.store = {}        # infohash -> {pk: AnnounceRecord}
        self.local_views = {}  # infohash -> {pk: (ip, port)}
        self._read_cache = {}  # uid -> (record, fetched_epoch)
        self._reads_epoch = None
        self._reads_used = 0

    # -- routing table -------------------------------------------------------

    def _bucket_of(self, nid: bytes):
        d = xor_distance(self.nid, nid)
        if d == 0:
            return None
        return self.buckets[d.bit_length() - 1]

    def observe(self, contact) -> None:
        """Contact seen alive: move to most-recent position, or append.  A
        newcomer is dropped when the bucket is full (long-lived contacts are
        the more reliable ones to keep)."""
        nid = contact[0]
        bucket = self._bucket_of(nid)
        if bucket is None:
            return
        for i, (b_nid, _, _) in enumerate(bucket):
            if b_nid == nid:
                bucket.append(bucket.pop(i))
                return
        if len(bucket) < self.params.k:
            bucket.append(tuple(contact))

    def evict(self, nid: bytes) -> None:
        bucket = self._bucket_of(nid)
        if bucket is not None:
            bucket[:] = [c for c in bucket if c[0] != nid]

    def contacts(self):
        for bucket in self.buckets:
            yield from bucket

    def closest_contacts(self, key: bytes, count: int):
        return sorted(self.contacts(), key=lambda c: xor_distance(c[0], key))[:count]

    # -- chain access with staleness/budget knobs ----------------------------

    def chain_read(self, uid: bytes, now_epoch: int):
        """Reputation lookup as this node sees the chain.  A nonzero read
        delay serves cached values for that many epochs; an exhausted read
        budget (reads per epoch) also falls back to cache.  Returns the
        record, None when absent, or the string "no_budget" when a fresh
        read is needed but not affordable."""
        cached = self._read_cache.get(uid)
        if cached is not None and now_epoch - cached[1] < self.read_delay_epochs:
            return cached[0]
        if self.read_budget is not None:
            if self._reads_epoch != now_epoch:
                self._reads_epoch = now_epoch
                self._reads_used = 0
            if self._reads_used >= self.read_budget:
                return cached[0] if cached is not None else "no_budget"
            self._reads_used += 1
        rec = ct.sc_read(self.chain, self.addr_rep, uid)
        self._read_cache[uid] = (rec, now_epoch)
        return rec

    # -- storage -------------------------------------------------------------

    def handle_store(self, record: AnnounceRecord, now_epoch: int):
        """Returns (True, None) or (False, reason).  Cheap chain checks run
        before the signature so junk from adversarial scripts is rejected
        without paying for a pairing."""
        rec = self.chain_read(record.uid, now_epoch)
        if rec == "no_budget":
            return False, "no_budget"
        if rec is None:
            return False, "unknown_uid"
        if rec.pk != record.pk:
            return False, "pk_mismatch"
        if tr.rep(rec.up, rec.down) < self.min_rep:
            return False, "low_rep"
        msg = announce_record_msg(record.infohash, record.pk, record.ip, record.port)
        if not sc.verify(record.pk, msg, record.sig):
            return False, "bad_sig"
        per_torrent = self.store.setdefault(record.infohash, {})
        per_torrent[record.pk] = replace(record, stored_epoch=now_epoch)
        return True, None

    def sweep(self, now_epoch: int) -> int:
        """Evict records past their TTL; returns eviction count."""
        evicted = 0
        for infohash in list(self.store):
            per = self.store[infohash]
            for pk in list(per):
                if now_epoch >= per[pk].stored_epoch + self.params.ttl_epochs:
                    del per[pk]
                    evicted += 1
            if not per:
                del self.store[infohash]
        return evicted

    def stored_records(self, infohash: bytes, now_epoch: int):
        self.sweep(now_epoch)
        return list(self.store.get(infohash, {}).values())

    # -- peer-local announce exchange ---------------------------------------

    def peer_announce(self, frm, now_epoch: int, rng: random.Random, sample_cap: int = tr.DEFAULT_SAMPLE_CAP):
        """Tracker-style announce handled by a peer against its local view.
        *frm* is (uid, pk, sig, infohash, event, ip, port); the signature is
        over the same message the tracker would verify."""
        uid, pk, sig, infohash, event, ip, port = frm
        if event not in tr.EVENTS:
            return []
        rec = self.chain_read(uid, now_epoch)
        if rec == "no_budget" or rec is None or rec.pk != pk:
            return []
        if not sc.verify(pk, tr.announce_msg(uid, infohash, event), sig):
            return []
        if event == "started" and tr.rep(rec.up, rec.down) < self.min_rep:
            return []
        view = self.local_views.setdefault(infohash, {})
        if event == "stopped":
            view.pop(pk, None)
        else:
            view[pk] = (ip, port)
        others = sorted(p for p in view if p != pk)
        picked = rng.sample(others, min(sample_cap, len(others)))
        return [(p, view[p][0], view[p][1]) for p in picked]

    def merge_view(self, infohash: bytes, records) -> None:
        for r in records:
            self.local_views.setdefault(infohash, {})[r.pk] = (r.ip, r.port)


# ---------------------------------------------------------------------------


@dataclass
class DhtNet:
    """In-process message bus.  ``drop_rate`` loses individual RPCs;
    ``dead`` marks nodes that never answer (the caller evicts them)."""

    params: DhtParams = field(default_factory=DhtParams)
    drop_rate: float = 0.0
    latency_ms: int = 20
    rng: random.Random = field(default_factory=random.Random)
    now_epoch: int = 0
    nodes: dict = field(default_factory=dict)      # nid -> DhtNode
    by_addr: dict = field(default_factory=dict)    # (ip, port) -> nid
    dead: set = field(default_factory=set)
    rpc_count: int = 0
    store_rejects: dict = field(default_factory=dict)

    def add_node(self, node: DhtNode) -> None:
        self.nodes[node.nid] = node
        self.by_addr[(node.ip, node.port)] = node.nid

    def contact_of(self, nid: bytes):
        n = self.nodes[nid]
        return (n.nid, n.ip, n.port)

    def _deliver(self, dst_nid: bytes) -> bool:
        self.rpc_count += 1
        if dst_nid in self.dead or dst_nid not in self.nodes:
            return False
        if self.drop_rate and self.rng.random() < self.drop_rate:
            return False
        return True

    def rpc_find_node(self, src: DhtNode, dst_nid: bytes, key: bytes):
        if not self._deliver(dst_nid):
            return None
        dst = self.nodes[dst_nid]
        dst.observe((src.nid, src.ip, src.port))
        return dst.closest_contacts(key, self.params.k)

    def rpc_store(self, src: DhtNode, dst_nid: bytes, record: AnnounceRecord):
        if not self._deliver(dst_nid):
            return None
        dst = self.nodes[dst_nid]
        dst.observe((src.nid, src.ip, src.port))
        ok, reason = dst.handle_store(record, self.now_epoch)
        if not ok:
            self.store_rejects[reason] = self.store_rejects.get(reason, 0) + 1
        return ok

    def rpc_get(self, src: DhtNode, dst_nid: bytes, infohash: bytes):
        if not self._deliver(dst_nid):
            return None
        dst = self.nodes[dst_nid]
        dst.observe((src.nid, src.ip, src.port))
        return dst.stored_records(infohash, self.now_epoch)


# ---------------------------------------------------------------------------
# iterative lookup


def find_closest(net: DhtNet, node: DhtNode, key: bytes, k: int | None = None):
    """Iterative lookup: each round queries the alpha closest unqueried
    candidates in parallel and merges their answers; once a round stops
    improving the k-best frontier, one wide terminal round queries everything
    still unqueried among the k best.  Returns (contacts, rounds); rounds is
    the hop count."""
    k = k or net.params.k
    candidates = {node.nid: (node.nid, node.ip, node.port)}
    for c in node.closest_contacts(key, k):
        candidates[c[0]] = c
    queried = {node.nid}
    failed = set()

    def query(batch):
        for c in batch:
            queried.add(c[0])
            res = net.rpc_find_node(node, c[0], key)
            if res is None:
                node.evict(c[0])
                failed.add(c[0])
                del candidates[c[0]]
                continue
            node.observe(c)
            for found in res:
                if found[0] not in failed:
                    candidates.setdefault(found[0], tuple(found))

    def ranked():
        return sorted(candidates.values(), key=lambda c: xor_distance(c[0], key))

    rounds = 0
    while True:
        frontier = [c for c in ranked()[:k] if c[0] not in queried]
        if not frontier:
            break
        rounds += 1
        best_before = [c[0] for c in ranked()[:k]]
        query(frontier[: net.params.alpha])
        if [c[0] for c in ranked()[:k]] == best_before:
            # converged: flush the rest of the best-k in one parallel round
            flush = [c for c in ranked()[:k] if c[0] not in queried]
            if flush:
                rounds += 1
                query(flush)
            if [c[0] for c in ranked()[:k]] == best_before:
                break
    return ranked()[:k], rounds


def bootstrap(net: DhtNet, node: DhtNode, bootstrap_addrs) -> int:
    """Join via any live node from the given addresses or the node's own
    cached set, then populate the routing table with a self-lookup.  Raises
    JoinError when every contact point is dead."""
    live = 0
    for ip, port in list(bootstrap_addrs) + list(node.cached_bootstrap):
        nid = net.by_addr.get((ip, port))
        if nid is None:
            continue
        res = net.rpc_find_node(node, nid, node.nid)
        if res is None:
            continue
        live += 1
        node.observe(net.contact_of(nid))
        for c in res:
            node.observe(c)
    if not live:
        raise JoinError("no live bootstrap node")
    net.add_node(node)
    find_closest(net, node, node.nid)
    return live


def dht_announce(net: DhtNet, node: DhtNode, infohash: bytes) -> int:
    """Offer a signed membership record to the k nodes closest to the
    torrent key; returns how many accepted."""
    record = make_record(node.kp, node.uid, infohash, node.ip, node.port)
    targets, _ = find_closest(net, node, torrent_key(infohash))
    accepted = 0
    for c in targets:
        if c[0] == node.nid:
            ok, _ = node.handle_store(record, net.now_epoch)
        else:
            ok = net.rpc_store(node, c[0], record)
        if ok:
            accepted += 1
    return accepted


def dht_get_peers(net: DhtNet, node: DhtNode, infohash: bytes):
    """Collect records from the k closest nodes, deduplicate by pk, and
    re-verify every record locally before it can enter the local view."""
    targets, _ = find_closest(net, node, torrent_key(infohash))
    merged = {}
    for c in targets:
        if c[0] == node.nid:
            records = node.stored_records(infohash, net.now_epoch)
        else:
            records = net.rpc_get(node, c[0], infohash)
        if records:
            for r in records:
                merged.setdefault(r.pk, r)
    verified = []
    for r in merged.values():
        ok, _ = _reverify(node, r, net.now_epoch)
        if ok:
            verified.append(r)
    node.merge_view(infohash, verified)
    return verified


def _reverify(node: DhtNode, record: AnnounceRecord, now_epoch: int):
    rec = node.chain_read(record.uid, now_epoch)
    if rec == "no_budget" or rec is None:
        return False, "unknown_uid"
    if rec.pk != record.pk:
        return False, "pk_mismatch"
    if tr.rep(rec.up, rec.down) < node.min_rep:
        return False, "low_rep"
    msg = announce_record_msg(record.infohash, record.pk, record.ip, record.port)
    if not sc.verify(record.pk, msg, record.sig):
        return False, "bad_sig"
    return True, None
