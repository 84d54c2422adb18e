"""Scripted agent behaviour.

A policy sees a :class:`Snapshot`: what is public to the whole community
plus the node's own private records. Counterparties of other nodes'
transactions are never part of it.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from ..reputation import DIMENSIONS


@dataclass(frozen=True)
class ProposalView:
    id: str
    kind: str
    group: str
    beneficiary: str | None = None
    field: str | None = None
    claimed_value: int = 0
    cost_basis: int = 0


@dataclass(frozen=True)
class PrivateTx:
    tx_id: str
    sender: str
    receiver: str
    amount: int


@dataclass(frozen=True)
class Snapshot:
    node: str
    epoch: int
    memberships: tuple[str, ...]
    group_members: Mapping[str, tuple[str, ...]]
    composites: Mapping[str, Fraction]
    join_epochs: Mapping[str, int]
    active: tuple[str, ...]
    spendable: int
    own_transactions: tuple[PrivateTx, ...]
    benchmark_max: int
    clique: frozenset[str] = frozenset()
    quality: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for tx in self.own_transactions:
            if self.node not in (tx.sender, tx.receiver):
                raise AssertionError(f"snapshot of {self.node} leaks transaction {tx.tx_id}")

    def peers(self) -> list[str]:
        out = set()
        for g in self.memberships:
            out.update(self.group_members[g])
        out.discard(self.node)
        return sorted(out)


def _clamp(v: int) -> int:
    return max(0, min(10, v))


class Policy:
    name = "honest"

    def cast_ballot(self, snap: Snapshot, members: Sequence[str], rng: random.Random) -> list[str]:
        return sorted(members, key=lambda n: (-snap.composites.get(n, Fraction(5)), snap.join_epochs[n], n))

    def score_proposal(self, snap: Snapshot, prop: ProposalView, rng: random.Random) -> tuple[int, int | None] | None:
        """(score, proposed amount), or None to stay silent."""
        if prop.kind != "reward-evaluation":
            return 7, None
        value = prop.claimed_value + prop.cost_basis
        plausible = prop.claimed_value <= snap.benchmark_max
        return (rng.randint(7, 9) if plausible else rng.randint(1, 3)), value

    def evaluate_peer(self, snap: Snapshot, subject: str, rng: random.Random) -> dict[str, int]:
        base = snap.quality.get(subject, 5)
        return {d: _clamp(base + rng.randint(-1, 1)) for d in DIMENSIONS}

    def initiate_chat(self, snap: Snapshot, rate: float, rng: random.Random) -> str | None:
        peers = snap.peers()
        if not peers or rng.random() >= rate:
            return None
        return rng.choice(peers)

    def initiate_transaction(
        self, snap: Snapshot, rate: float, research_rate: float, rng: random.Random
    ) -> tuple[str, int, bool] | None:
        if snap.spendable <= 0 or rng.random() >= rate:
            return None
        others = [n for n in snap.active if n != snap.node]
        if not others:
            return None
        amount = rng.randint(1, min(snap.spendable, 50))
        return rng.choice(others), amount, rng.random() < research_rate

    def attempt_fraud(self, snap: Snapshot, rng: random.Random) -> bool:
        return False

    def publish(self, snap: Snapshot, rate: float, rng: random.Random) -> str | None:
        """'genuine', 'fabricated', or None."""
        return "genuine" if rng.random() < rate else None


class HonestPolicy(Policy):
    name = "honest"


class LazyPolicy(Policy):
    name = "lazy"

    def __init__(self, skip: float = 0.5) -> None:
        self.skip = skip

    def score_proposal(self, snap, prop, rng):
        if rng.random() < self.skip:
            return None
        return super().score_proposal(snap, prop, rng)


class MaliciousPolicy(Policy):
    """Inflates amounts for its clique and pans everyone else."""

    name = "malicious"

    def cast_ballot(self, snap, members, rng):
        honest_order = super().cast_ballot(snap, members, rng)
        return sorted(honest_order, key=lambda n: n not in snap.clique)

    def score_proposal(self, snap, prop, rng):
        if prop.kind != "reward-evaluation":
            return 7, None
        value = prop.claimed_value + prop.cost_basis
        if prop.beneficiary in snap.clique:
            return 10, value * 10
        return 2, value // 10

    def evaluate_peer(self, snap, subject, rng):
        score = 10 if subject in snap.clique else 1
        return {d: score for d in DIMENSIONS}


class FraudsterPolicy(Policy):
    """Publishes one fabricated, overvalued achievement and otherwise behaves."""

    name = "fraudster"

    def __init__(self) -> None:
        self.attempted = False

    def attempt_fraud(self, snap, rng):
        return not self.attempted and snap.epoch >= 1

    def publish(self, snap, rate, rng):
        if self.attempt_fraud(snap, rng):
            self.attempted = True
            return "fabricated"
        return None


def make_policy(name: str, lazy_skip: float = 0.5) -> Policy:
    if name == "honest":
        return HonestPolicy()
    if name == "lazy":
        return LazyPolicy(lazy_skip)
    if name == "malicious":
        return MaliciousPolicy()
    if name == "fraudster":
        return FraudsterPolicy()
    raise ValueError(f"unknown policy {name!r}")
