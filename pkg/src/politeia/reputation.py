"""Periodic peer evaluations and their aggregation into reputation."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping

from .codec import record, verify_record
from .crypto import Signature

DIMENSIONS = (
    "persona-trait",
    "expertise",
    "proposal-reliability",
    "community-contribution",
    "research-contribution",
)
NEUTRAL = Fraction(5)
DEFAULT_WINDOW = 6


class ReputationError(Exception):
    pass


@record
@dataclass(frozen=True)
class Evaluation:
    evaluator: str
    subject: str
    period: int
    dimensions: dict[str, int]
    signature: Signature | None = None

    UNSIGNED = ("signature",)


@dataclass(frozen=True)
class ReputationView:
    subject: str
    per_dimension: dict[str, Fraction]
    composite: Fraction
    window: int
    evaluator_count: int


class ReputationBook:
    """Evaluation store. ``co_members`` and ``public_key`` come from the hierarchy."""

    def __init__(
        self,
        co_members: Callable[[str, str], bool],
        public_key: Callable[[str], bytes],
        window: int = DEFAULT_WINDOW,
    ) -> None:
        self.co_members = co_members
        self.public_key = public_key
        self.window = window
        self.period = 0
        self._by_subject: dict[str, list[Evaluation]] = {}
        self._seen: set[tuple[str, str, int]] = set()

    def submit_evaluation(self, ev: Evaluation) -> Evaluation:
        if ev.evaluator == ev.subject:
            raise ReputationError("nodes evaluate others, not themselves")
        if ev.period != self.period:
            raise ReputationError(f"evaluation for period {ev.period}, current is {self.period}")
        key = (ev.evaluator, ev.subject, ev.period)
        if key in self._seen:
            raise ReputationError("duplicate evaluation for this period")
        if not self.co_members(ev.evaluator, ev.subject):
            raise ReputationError("evaluator and subject share no group")
        if not ev.dimensions or set(ev.dimensions) - set(DIMENSIONS):
            raise ReputationError("unknown evaluation dimension")
        if any(type(v) is not int or not 0 <= v <= 10 for v in ev.dimensions.values()):
            raise ReputationError("dimension scores are integers in 0..10")
        if not verify_record(self.public_key(ev.evaluator), ev, ev.signature):
            raise ReputationError("evaluation signature does not verify")
        self._seen.add(key)
        self._by_subject.setdefault(ev.subject, []).append(ev)
        return ev

    def evaluations_of(self, subject: str) -> list[Evaluation]:
        return list(self._by_subject.get(subject, ()))

    def aggregate(self, subject: str, window: int | None = None) -> ReputationView:
        w = self.window if window is None else window
        return aggregate_reputation(subject, self._by_subject.get(subject, ()), self.period, w)


def aggregate_reputation(
    subject: str, evaluations: Iterable[Evaluation], now: int, window: int = DEFAULT_WINDOW
) -> ReputationView:
    """Per-dimension means over periods ``now - window + 1 .. now``; composite is their mean."""
    sums = {d: 0 for d in DIMENSIONS}
    counts = {d: 0 for d in DIMENSIONS}
    evaluators = set()
    for ev in evaluations:
        if ev.subject != subject or not now - window < ev.period <= now:
            continue
        evaluators.add(ev.evaluator)
        for dim, score in ev.dimensions.items():
            sums[dim] += score
            counts[dim] += 1
    per_dim = {d: Fraction(sums[d], counts[d]) if counts[d] else NEUTRAL for d in DIMENSIONS}
    composite = sum(per_dim.values(), Fraction(0)) / len(DIMENSIONS)
    return ReputationView(subject, per_dim, composite, window, len(evaluators))


def rank_by_reputation(
    candidates: Iterable[str],
    composites: Mapping[str, Fraction],
    join_epochs: Mapping[str, int],
) -> list[str]:
    """Best first: higher composite, then earlier join, then lower id."""
    pool = list(candidates)
    if not pool:
        raise ReputationError("no candidates to rank")
    return sorted(pool, key=lambda n: (-composites.get(n, NEUTRAL), join_epochs[n], n))
