"""Scenario descriptions for simulated swarms.

A scenario is a frozen value object so a run is fully determined by
(scenario, nothing else) — the seed lives inside it.  The JSON form is the
on-disk interchange format for the CLI; parsing is strict so a typo'd field
fails loudly instead of silently running a different experiment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

from .. import attestation as at

KNOWN_ADVERSARIES = ("inflate", "replay", "forge")


@dataclass(frozen=True)
class Scenario:
    name: str = "swarm"
    seed: int = 0
    peers: int = 6
    seeders: int = 2
    file_size: int = 64 * 1024
    piece_size: int = 4 * 1024
    policy: object = field(default_factory=at.PerPiecePolicy)
    epoch_window: int = at.DEFAULT_EPOCH_WINDOW
    epoch_delta: int = at.DEFAULT_EPOCH_DELTA
    min_rep: Fraction = Fraction(1, 4)
    init_credit: int = 64 * 1024
    bandwidth: float = float(1 << 20)      # bytes/second per connection
    tracker_down: tuple = ()               # ((start_ms, end_ms), ...)
    migrate_on_recovery: bool = False
    adversaries: tuple = ()

    def __post_init__(self):
        if self.peers < 2 or not 1 <= self.seeders < self.peers:
            raise ValueError("need at least one seeder and one leecher")
        if self.file_size <= 0 or self.piece_size <= 0:
            raise ValueError("sizes must be positive")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.epoch_window <= 0 or self.epoch_delta < 0:
            raise ValueError("bad epoch parameters")
        for iv in self.tracker_down:
            a, b = iv
            # outages start strictly after t=0 so the initial announce round
            # always reaches a live tracker
            if not 0 < a < b:
                raise ValueError(f"bad outage interval {iv!r}")
        for a, b in zip(self.tracker_down, self.tracker_down[1:]):
            if a[1] > b[0]:
                raise ValueError("outage intervals must be sorted and disjoint")
        for adv in self.adversaries:
            if adv not in KNOWN_ADVERSARIES:
                raise ValueError(f"unknown adversary {adv!r}")

    @property
    def num_pieces(self) -> int:
        return -(-self.file_size // self.piece_size)

    @property
    def epoch_params(self) -> at.EpochParams:
        return at.EpochParams(window=self.epoch_window, delta=self.epoch_delta)


_FIELDS = {
    "name", "seed", "peers", "seeders", "file_size", "piece_size", "policy",
    "epoch_window", "epoch_delta", "min_rep", "init_credit", "bandwidth",
    "tracker_down", "migrate_on_recovery", "adversaries",
}


def scenario_to_json(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "seed": sc.seed,
        "peers": sc.peers,
        "seeders": sc.seeders,
        "file_size": sc.file_size,
        "piece_size": sc.piece_size,
        "policy": at.policy_to_json(sc.policy),
        "epoch_window": sc.epoch_window,
        "epoch_delta": sc.epoch_delta,
        "min_rep": str(sc.min_rep),
        "init_credit": sc.init_credit,
        "bandwidth": sc.bandwidth,
        "tracker_down": [list(iv) for iv in sc.tracker_down],
        "migrate_on_recovery": sc.migrate_on_recovery,
        "adversaries": list(sc.adversaries),
    }


def scenario_from_json(doc: dict) -> Scenario:
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
    kwargs = {}
    if "name" in doc:
        kwargs["name"] = str(doc["name"])
    for f in ("seed", "peers", "seeders", "file_size", "piece_size",
              "epoch_window", "epoch_delta", "init_credit"):
        if f in doc:
            kwargs[f] = int(doc[f])
    if "policy" in doc:
        kwargs["policy"] = at.policy_from_json(doc["policy"])
    if "min_rep" in doc:
        kwargs["min_rep"] = Fraction(doc["min_rep"])
    if "bandwidth" in doc:
        kwargs["bandwidth"] = float(doc["bandwidth"])
    if "tracker_down" in doc:
        kwargs["tracker_down"] = tuple((int(a), int(b)) for a, b in doc["tracker_down"])
    if "migrate_on_recovery" in doc:
        kwargs["migrate_on_recovery"] = bool(doc["migrate_on_recovery"])
    if "adversaries" in doc:
        kwargs["adversaries"] = tuple(str(a) for a in doc["adversaries"])
    return Scenario(**kwargs)


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        return scenario_from_json(json.load(fh))


def save_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(scenario_to_json(sc), fh, indent=2, sort_keys=True)
        fh.write("\n")
