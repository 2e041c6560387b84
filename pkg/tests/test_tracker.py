"""Attested tracker state machine: registration, announces, reports, and
migration between instances."""

import dataclasses
import math
import random
from fractions import Fraction

import pytest

from pbts import attestation as at
from pbts import contract as ct
from pbts import enclave as encl
from pbts import sigcrypto as sc
from pbts import tracker as tr

PROG, CFG = b"tracker-prog", b"cfg"
W = at.DEFAULT_EPOCH_WINDOW
NOW = 6 * W + 30


def test_setup_params():
    pp = tr.setup(128, Fraction(1, 2), 500, random.Random(0))
    assert len(pp.iid) == 16 and pp.init_credit == 500
    assert tr.setup(256, Fraction(1, 2), 0, random.Random(0)).lam == 256
    with pytest.raises(ValueError):
        tr.setup(100, Fraction(1, 2), 0, random.Random(0))


def test_rep_ratio():
    assert tr.rep(0, 0) == math.inf
    assert tr.rep(100, 0) == math.inf
    assert tr.rep(3, 4) == Fraction(3, 4)
    assert tr.rep(10, 0) > Fraction(10**9, 1)  # seeds always clear the gate


class Env:
    def __init__(self, min_rep=Fraction(1, 2), init_credit=4096, users=4, epoch=None):
        self.world = encl.world_new(seed=55)
        self.world.allowlist.add(encl.measure(PROG, CFG))
        self.chain = ct.chain_new(self.world.allowlist, self.world.hw_root_pk)
        self.pp = tr.setup(128, min_rep, init_credit, random.Random(9))
        self.t = tr.Tracker.launch(self.world, self.chain, self.pp, PROG, CFG, epoch=epoch)
        assert self.t is not None
        self.users = []
        for i in range(users):
            kp = sc.keygen(bytes([0x40 + i]) * 32)
            uid = b"u%d" % i
            assert self.t.register(uid, kp.pk, self.reg_sig(kp, uid))
            self.users.append((uid, kp))
        self.contents = [sc.hash_data(b"tracker-piece-%d" % i) for i in range(12)]
        self.meta = at.make_torrent(
            "swarm", [sc.hash_data(c) for c in self.contents], 700, length=700 * 12 - 30)
        self.t.add_torrent(self.meta)

    def reg_sig(self, kp, uid):
        return sc.sign(kp.sk, tr.register_msg(self.pp.iid, uid))

    def ann_sig(self, kp, uid, event):
        return sc.sign(kp.sk, tr.announce_msg(uid, self.meta.infohash, event))

    def receipt(self, recv_i, send_i, piece, t=NOW):
        uid_r, kp_r = self.users[recv_i]
        _, kp_s = self.users[send_i]
        return at.attest(kp_r, self.meta.infohash, kp_s.pk,
                         self.contents[piece], piece, t, self.t.epoch)

    def report_for(self, send_i, entries, t=NOW):
        uid_s, kp_s = self.users[send_i]
        return tr.build_report(uid_s, kp_s.pk, self.meta, entries, self.t.epoch)


@pytest.fixture()
def env():
    return Env()


def test_launch_requires_allowlisted_measurement():
    world = encl.world_new(seed=56)  # empty allowlist
    chain = ct.chain_new(world.allowlist, world.hw_root_pk)
    pp = tr.setup(128, Fraction(1, 2), 0, random.Random(1))
    assert tr.Tracker.launch(world, chain, pp, PROG, CFG) is None


class TestRegister:
    def test_initial_credit(self, env):
        uid, _ = env.users[0]
        rec = ct.sc_read(env.chain, env.t.addr, uid)
        assert (rec.up, rec.down) == (4096, 0)

    def test_duplicate_uid_rejected(self, env):
        _, kp = env.users[0]
        kp2 = sc.keygen(b"\x4f" * 32)
        assert not env.t.register(b"u0", kp2.pk, env.reg_sig(kp2, b"u0"))

    def test_signature_must_match_key_and_uid(self, env):
        kp = sc.keygen(b"\x4e" * 32)
        wrong_uid = env.reg_sig(kp, b"someone-else")
        assert not env.t.register(b"fresh", kp.pk, wrong_uid)
        other = sc.keygen(b"\x4d" * 32)
        assert not env.t.register(b"fresh", kp.pk, env.reg_sig(other, b"fresh"))
        assert env.t.register(b"fresh", kp.pk, env.reg_sig(kp, b"fresh"))


class TestAnnounce:
    def test_join_and_view(self, env):
        pks = []
        for uid, kp in env.users[:3]:
            sample = env.t.announce(uid, kp.pk, env.ann_sig(kp, uid, "started"),
                                    env.meta.infohash, "started", "1.2.3.4", 100)
            # each joiner sees exactly the peers already in the swarm
            assert {pk for pk, _, _ in sample} == set(pks)
            pks.append(kp.pk)

    def test_stopped_removes(self, env):
        for uid, kp in env.users[:3]:
            env.t.announce(uid, kp.pk, env.ann_sig(kp, uid, "started"),
                           env.meta.infohash, "started", "1.2.3.4", 100)
        uid0, kp0 = env.users[0]
        env.t.announce(uid0, kp0.pk, env.ann_sig(kp0, uid0, "stopped"),
                       env.meta.infohash, "stopped", "1.2.3.4", 100)
        uid3, kp3 = env.users[3]
        sample = env.t.announce(uid3, kp3.pk, env.ann_sig(kp3, uid3, "started"),
                                env.meta.infohash, "started", "1.2.3.4", 103)
        pks = {pk for pk, _, _ in sample}
        assert kp0.pk not in pks and len(pks) == 2

    def test_low_rep_blocked_from_started_only(self):
        e = Env(min_rep=Fraction(2, 1), init_credit=100)
        uid, kp = e.users[0]
        # drive u0's ratio below the threshold: down credit without uploads
        rec = ct.sc_read(e.chain, e.t.addr, uid)
        e.t._write(uid, kp.pk, rec.up, rec.up)  # ratio exactly 1 < 2
        assert e.t.announce(uid, kp.pk, e.ann_sig(kp, uid, "started"),
                            e.meta.infohash, "started", "ip", 1) == []
        assert kp.pk not in e.t.swarms.get(e.meta.infohash, {})
        # leaving and finishing stay possible — the gate is on joining
        e.t.announce(uid, kp.pk, e.ann_sig(kp, uid, "completed"),
                     e.meta.infohash, "completed", "ip", 1)
        assert kp.pk in e.t.swarms[e.meta.infohash]

    def test_bad_signature_or_unknown_user(self, env):
        uid, kp = env.users[0]
        assert env.t.announce(uid, kp.pk, b"\x00" * 96, env.meta.infohash,
                              "started", "ip", 1) == []
        ghost = sc.keygen(b"\x4c" * 32)
        assert env.t.announce(b"ghost", ghost.pk, env.ann_sig(ghost, b"ghost", "started"),
                              env.meta.infohash, "started", "ip", 1) == []
        # registered uid with someone else's key
        _, kp1 = env.users[1]
        assert env.t.announce(uid, kp1.pk, env.ann_sig(kp1, uid, "started"),
                              env.meta.infohash, "started", "ip", 1) == []

    def test_unknown_event(self, env):
        uid, kp = env.users[0]
        assert env.t.announce(uid, kp.pk, env.ann_sig(kp, uid, "started"),
                              env.meta.infohash, "scrape", "ip", 1) == []

    def test_sample_respects_cap(self):
        e = Env(users=8)
        e.t.sample_cap = 3
        for uid, kp in e.users[:7]:
            e.t.announce(uid, kp.pk, e.ann_sig(kp, uid, "started"),
                         e.meta.infohash, "started", "ip", 1)
        uid, kp = e.users[7]
        sample = e.t.announce(uid, kp.pk, e.ann_sig(kp, uid, "started"),
                              e.meta.infohash, "started", "ip", 1)
        assert len(sample) == 3
        assert kp.pk not in {pk for pk, _, _ in sample}


class TestReport:
    def test_happy_path_credits_both_sides(self, env):
        r = env.receipt(recv_i=1, send_i=0, piece=2)
        payload = env.report_for(0, [(r, b"u1")])
        assert env.t.report(payload, NOW)
        up0 = ct.sc_read(env.chain, env.t.addr, b"u0")
        down1 = ct.sc_read(env.chain, env.t.addr, b"u1")
        assert up0.up == 4096 + 700 and down1.down == 700

    def test_partial_last_piece_credits_true_bytes(self, env):
        r = env.receipt(recv_i=1, send_i=0, piece=11)
        assert env.t.report(env.report_for(0, [(r, b"u1")]), NOW)
        assert ct.sc_read(env.chain, env.t.addr, b"u0").up == 4096 + 670

    def test_rejections_leave_state_untouched(self, env):
        digest = ct.state_digest(env.chain)
        r1 = env.receipt(1, 0, 2)
        r2 = env.receipt(2, 0, 3)

        payload = env.report_for(0, [(r1, b"u1"), (r2, b"u2")])
        bad_delta = dataclasses.replace(payload, delta_up=payload.delta_up + 1)
        assert not env.t.report(bad_delta, NOW)

        bad_agg = dataclasses.replace(
            payload, agg_sig=sc.AggregateSignature(b"\x11" * 96, 2))
        assert not env.t.report(bad_agg, NOW)

        dup = env.report_for(0, [(r1, b"u1"), (r1, b"u1")])
        assert not env.t.report(dup, NOW)

        wrong_uid = env.report_for(0, [(r1, b"u3")])  # pk/uid cross-check
        assert not env.t.report(wrong_uid, NOW)

        other_meta = at.make_torrent("other", [sc.hash_data(b"q")], 700)
        r_other = dataclasses.replace(r1, infohash=other_meta.infohash)
        foreign = tr.ReportPayload(  # torrent the tracker never indexed
            uid=b"u0", pk=env.users[0][1].pk, peers=((env.users[1][1].pk, b"u1"),),
            meta=other_meta, timestamps=(NOW,), agg_sig=sc.aggregate([r_other.sig]),
            delta_up=700, delta_down=0, receipts=((other_meta.piece_hashes[0], 0),))
        assert not env.t.report(foreign, NOW)

        stale = env.report_for(0, [(env.receipt(1, 0, 4, t=NOW - 3 * W), b"u1")])
        assert not env.t.report(stale, NOW)

        assert ct.state_digest(env.chain) == digest

    def test_empty_report_rejected(self, env):
        payload = tr.ReportPayload(
            uid=b"u0", pk=env.users[0][1].pk, peers=(), meta=env.meta,
            timestamps=(), agg_sig=sc.AggregateSignature(b"\x00" * 96, 0),
            delta_up=0, delta_down=0, receipts=())
        assert not env.t.report(payload, NOW)

    def test_self_receipt_rejected(self, env):
        uid0, kp0 = env.users[0]
        r = at.attest(kp0, env.meta.infohash, kp0.pk, env.contents[0], 0, NOW, env.t.epoch)
        payload = env.report_for(0, [(r, uid0)])
        assert not env.t.report(payload, NOW)

    def test_duplicate_across_reports_rejected(self, env):
        r = env.receipt(1, 0, 5)
        assert env.t.report(env.report_for(0, [(r, b"u1")]), NOW)
        before = ct.sc_read(env.chain, env.t.addr, b"u1").down
        assert not env.t.report(env.report_for(0, [(r, b"u1")]), NOW)
        assert ct.sc_read(env.chain, env.t.addr, b"u1").down == before

    def test_expired_receipt_rejected_even_after_gc(self, env):
        r = env.receipt(1, 0, 6)
        assert env.t.report(env.report_for(0, [(r, b"u1")]), NOW)
        later = NOW + (env.t.epoch.delta + 2) * W
        env.t.gc_recent(later)
        assert at.receipt_id(r) not in {rid for rid in env.t.recent if isinstance(rid, tuple)}
        assert not env.t.report(env.report_for(0, [(r, b"u1")]), later)

    def test_delta_down_negative_rejected(self, env):
        r = env.receipt(1, 0, 7)
        payload = dataclasses.replace(env.report_for(0, [(r, b"u1")]), delta_down=-1)
        assert not env.t.report(payload, NOW)

    def test_reporter_declared_download_credited(self, env):
        r = env.receipt(1, 0, 8)
        payload = tr.build_report(b"u0", env.users[0][1].pk, env.meta,
                                  [(r, b"u1")], env.t.epoch, delta_down=350)
        assert env.t.report(payload, NOW)
        rec = ct.sc_read(env.chain, env.t.addr, b"u0")
        assert rec.down == 350


class TestGc:
    def test_boundaries(self):
        e = Env(epoch=at.EpochParams(window=100, delta=2))
        t1 = 500  # epoch 5
        r = e.receipt(1, 0, 0, t=t1)
        assert e.t.report(e.report_for(0, [(r, b"u1")], t=t1), t1)
        rid = next(iter(e.t.recent))
        # retained through epoch insertion+delta+1; gone one epoch later
        assert e.t.gc_recent((5 + 3) * 100) == 0
        assert rid in e.t.recent
        assert e.t.gc_recent((5 + 4) * 100) == 1
        assert rid not in e.t.recent


class TestSessionReport:
    def test_happy_path(self, env):
        uid1, kp1 = env.users[1]
        uid0, kp0 = env.users[0]
        cert, skp = at.open_session(kp1, env.meta.infohash, kp0.pk, NOW, env.t.epoch)
        srs = [at.session_attest(skp.sk, cert, env.contents[i], i, NOW, env.t.epoch)
               for i in range(3)]
        payload = tr.build_session_report(uid0, kp0.pk, env.meta, [(cert, uid1, srs)])
        assert env.t.report_session(payload, NOW)
        assert ct.sc_read(env.chain, env.t.addr, uid0).up == 4096 + 3 * 700
        # replaying any subset of the same session items is dead
        payload2 = tr.build_session_report(uid0, kp0.pk, env.meta, [(cert, uid1, srs[:1])])
        assert not env.t.report_session(payload2, NOW)

    def test_cert_sender_mismatch(self, env):
        uid1, kp1 = env.users[1]
        uid0, kp0 = env.users[0]
        _, kp2 = env.users[2]
        cert, skp = at.open_session(kp1, env.meta.infohash, kp2.pk, NOW, env.t.epoch)
        sr = at.session_attest(skp.sk, cert, env.contents[0], 0, NOW, env.t.epoch)
        payload = tr.SessionReportPayload(
            uid=uid0, pk=kp0.pk, peers=((kp1.pk, uid1),), meta=env.meta,
            certs=(cert,), agg_sig=at.aggregate_session_certs([cert]),
            items=((0, sr),), delta_up=700, delta_down=0)
        assert not env.t.report_session(payload, NOW)


class TestBatchReport:
    def test_happy_path(self, env):
        uid1, kp1 = env.users[1]
        uid0, kp0 = env.users[0]
        br = at.batch_attest(kp1, env.meta.infohash, kp0.pk,
                             {i: env.contents[i] for i in range(4)}, NOW, env.t.epoch)
        payload = tr.build_batch_report(uid0, kp0.pk, env.meta, [(br, uid1)])
        assert env.t.report_batch(payload, NOW)
        assert ct.sc_read(env.chain, env.t.addr, uid1).down == 4 * 700
        assert not env.t.report_batch(payload, NOW)  # dedup by batch identity

    def test_wrong_piece_hash_rejected(self, env):
        uid1, kp1 = env.users[1]
        uid0, kp0 = env.users[0]
        br = at.batch_attest(kp1, env.meta.infohash, kp0.pk,
                             {0: b"not the real content"}, NOW, env.t.epoch)
        payload = tr.build_batch_report(uid0, kp0.pk, env.meta, [(br, uid1)])
        digest = ct.state_digest(env.chain)
        assert not env.t.report_batch(payload, NOW)
        assert ct.state_digest(env.chain) == digest


class TestMigrate:
    def migrate(self, e):
        return tr.migrate(e.world, e.chain, e.t.addr, e.pp, PROG, CFG, epoch=e.t.epoch)

    def test_records_survive_one_hop(self, env):
        r = env.receipt(1, 0, 2)
        assert env.t.report(env.report_for(0, [(r, b"u1")]), NOW)
        old_addr = env.t.addr
        new = self.migrate(env)
        assert new is not None and new.addr != old_addr
        assert ct.get_referrer(env.chain, new.addr) == old_addr
        rec = ct.sc_read(env.chain, new.addr, b"u0")
        assert rec.up == 4096 + 700

    def test_index_rebuilt_for_reports(self, env):
        new = self.migrate(env)
        new.add_torrent(env.meta)
        r = env.receipt(1, 0, 3)
        payload = env.report_for(0, [(r, b"u1")])
        assert new.report(payload, NOW)
        assert ct.sc_read(env.chain, new.addr, b"u1").down == 700

    def test_two_migrations_back_unreachable(self, env):
        new1 = self.migrate(env)
        env.t = new1
        new2 = self.migrate(env)
        # u0 was written only at the original contract, two hops from new2
        assert ct.sc_read(env.chain, new1.addr, b"u0") is not None
        assert ct.sc_read(env.chain, new2.addr, b"u0") is None

    def test_unattested_world_cannot_migrate(self, env):
        stranger = encl.world_new(seed=777)
        assert tr.migrate(stranger, env.chain, env.t.addr, env.pp, PROG, CFG) is None

    def test_unknown_source_rejected(self, env):
        assert tr.migrate(env.world, env.chain, b"\x00" * 20, env.pp, PROG, CFG) is None
