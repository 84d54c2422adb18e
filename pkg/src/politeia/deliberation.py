"""Proposal lifecycle: submission, scored feedback, tally, routing; signed chat."""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Callable, Sequence

from .codec import canonical_encode, record, verify_record
from .crypto import Digest, Signature
from .org import Hierarchy, Status, required_core_count


class DeliberationError(Exception):
    pass


class Kind(str, enum.Enum):
    REWARD = "reward-evaluation"
    RULE = "rule-making"
    ELECTION = "election"


class Decision(str, enum.Enum):
    ADOPT = "adopt"
    REJECT = "reject"


class Routing(str, enum.Enum):
    FINALIZE = "finalize"
    ESCALATE = "escalate"
    DELEGATE = "delegate"


@record
@dataclass(frozen=True)
class RewardPayload:
    case_id: str
    beneficiary: str
    achievement: Digest
    field: str
    claimed_value: int
    cost_basis: int = 0


@record
@dataclass(frozen=True)
class RulePayload:
    parameter: str
    value: str


@record
@dataclass(frozen=True)
class ElectionPayload:
    group: str
    seats: int


@record
@dataclass(frozen=True)
class Proposal:
    id: str
    kind: Kind
    proposer: str
    group: str
    payload: bytes
    submitted_epoch: int
    deadline_epoch: int
    origin: str | None = None
    signature: Signature | None = None

    UNSIGNED = ("signature",)


@record
@dataclass(frozen=True)
class Feedback:
    proposal_id: str
    voter: str
    score: int
    reasons: bytes
    epoch: int
    amount: int | None = None
    signature: Signature | None = None

    UNSIGNED = ("signature",)


@record
@dataclass(frozen=True)
class Ballot:
    election_id: str
    group: str
    voter: str
    ranking: tuple[str, ...]
    epoch: int
    signature: Signature | None = None

    UNSIGNED = ("signature",)


@dataclass(frozen=True)
class Advisory:
    group: str
    proposal_id: str
    mean_score: Fraction | None
    decision: Decision


@record
@dataclass(frozen=True)
class Outcome:
    proposal_id: str
    group: str
    kind: Kind
    mean_score: Fraction | None
    voters: tuple[str, ...]
    waived: tuple[str, ...]
    decision: Decision
    quorum_met: bool
    host: str
    routing: Routing | None = None
    advisory: tuple[Advisory, ...] = ()


@record
@dataclass(frozen=True)
class ChatRecord:
    sender: str
    receiver: str
    epoch: int
    payload: bytes
    archive_holders: tuple[str, ...]
    topic: str | None = None
    signature: Signature | None = None

    UNSIGNED = ("signature",)


@dataclass
class DeliberationConfig:
    deadline: int = 2
    threshold: Fraction = Fraction(6)
    quorum_fraction: Fraction = Fraction(1, 2)
    third_party_holders: int = 3


SignAs = Callable[[str, object], Signature]


class Deliberation:
    def __init__(
        self,
        hierarchy: Hierarchy,
        sign_as: SignAs,
        config: DeliberationConfig | None = None,
    ) -> None:
        self.h = hierarchy
        self.sign_as = sign_as
        self.config = config or DeliberationConfig()
        self.proposals: dict[str, Proposal] = {}
        self.hosts: dict[str, str] = {}
        self.feedback: dict[str, dict[str, Feedback]] = {}
        self.late: dict[str, set[str]] = {}
        self.outcomes: dict[str, Outcome] = {}
        self.delegated_from: dict[str, str] = {}
        self._seq = 0

    def next_id(self) -> str:
        self._seq += 1
        return f"p{self._seq:06d}"

    def _key(self, node_id: str) -> bytes:
        return self.h.nodes[node_id].public_key

    def _signed(self, node_id: str, obj):
        return replace(obj, signature=self.sign_as(node_id, obj))

    def draft(
        self,
        kind: Kind,
        proposer: str,
        group: str,
        payload: object,
        epoch: int,
        origin: str | None = None,
    ) -> Proposal:
        """An unsigned proposal with a fresh id and the configured deadline."""
        return Proposal(
            id=self.next_id(),
            kind=kind,
            proposer=proposer,
            group=group,
            payload=payload if isinstance(payload, bytes) else canonical_encode(payload),
            submitted_epoch=epoch,
            deadline_epoch=epoch + self.config.deadline,
            origin=origin,
        )

    # -- submission ----------------------------------------------------------

    def submit_proposal(self, proposal: Proposal) -> list[Proposal]:
        """Register a proposal; returns it, preceded by an election if the group has no cores."""
        node = self.h.nodes.get(proposal.proposer)
        if node is None or node.status is not Status.ACTIVE:
            raise DeliberationError(f"{proposal.proposer} may not submit proposals")
        group = self.h.groups.get(proposal.group)
        if group is None or proposal.proposer not in group.members:
            raise DeliberationError(f"{proposal.proposer} is not a member of {proposal.group}")
        if proposal.deadline_epoch <= proposal.submitted_epoch:
            raise DeliberationError("deadline must follow submission")
        if proposal.id in self.proposals:
            raise DeliberationError(f"duplicate proposal id {proposal.id}")
        if not verify_record(node.public_key, proposal, proposal.signature):
            raise DeliberationError("proposal signature does not verify")
        registered = []
        if not group.core_nodes and proposal.kind is not Kind.ELECTION and not group.flagged:
            registered.append(self.open_election(proposal.group, proposal.submitted_epoch))
        self.proposals[proposal.id] = proposal
        self.hosts[proposal.id] = self.h.host(proposal.group)
        self.feedback[proposal.id] = {}
        self.late[proposal.id] = set()
        registered.append(proposal)
        return registered

    def open_election(self, gid: str, epoch: int) -> Proposal:
        """The longest-tenure member opens and hosts an election."""
        host = self.h.tenure_host(gid)
        seats = required_core_count(self.h.groups[gid].size)
        p = self._signed(host, self.draft(Kind.ELECTION, host, gid, ElectionPayload(gid, seats), epoch))
        self.proposals[p.id] = p
        self.hosts[p.id] = host
        self.feedback[p.id] = {}
        self.late[p.id] = set()
        return p

    def submit_feedback(self, fb: Feedback) -> str:
        """Returns ``"recorded"`` or ``"waived"`` (late feedback forfeits the vote)."""
        proposal = self.proposals.get(fb.proposal_id)
        if proposal is None:
            raise DeliberationError(f"unknown proposal {fb.proposal_id}")
        if fb.voter not in self.h.groups[proposal.group].members:
            raise DeliberationError(f"{fb.voter} is not a member of {proposal.group}")
        if type(fb.score) is not int or not 0 <= fb.score <= 10:
            raise DeliberationError("score must be an integer in 0..10")
        if fb.amount is not None and fb.amount < 0:
            raise DeliberationError("proposed amount cannot be negative")
        if fb.voter in self.feedback[fb.proposal_id] or fb.voter in self.late[fb.proposal_id]:
            raise DeliberationError(f"{fb.voter} already responded to {fb.proposal_id}")
        if not verify_record(self._key(fb.voter), fb, fb.signature):
            raise DeliberationError("feedback signature does not verify")
        if fb.epoch > proposal.deadline_epoch:
            self.late[fb.proposal_id].add(fb.voter)
            return "waived"
        self.feedback[fb.proposal_id][fb.voter] = fb
        return "recorded"

    def recuse(self, proposal_id: str, node_id: str) -> None:
        """An interested member stands aside; counted as waived."""
        proposal = self.proposals[proposal_id]
        if node_id not in self.h.groups[proposal.group].members:
            raise DeliberationError(f"{node_id} is not a member of {proposal.group}")
        if node_id in self.feedback[proposal_id]:
            raise DeliberationError(f"{node_id} already voted on {proposal_id}")
        self.late[proposal_id].add(node_id)

    def complete(self, proposal_id: str) -> bool:
        """Every current member has voted, recused, or forfeited."""
        members = self.h.groups[self.proposals[proposal_id].group].members
        done = self.feedback[proposal_id].keys() | self.late[proposal_id]
        return all(m in done for m in members)

    # -- tally and routing ---------------------------------------------------

    def tally(self, proposal_id: str, now: int) -> Outcome:
        """Tally once the deadline passed, or earlier if nobody is left to respond."""
        proposal = self.proposals[proposal_id]
        if now <= proposal.deadline_epoch and proposal.group in self.h.groups and not self.complete(proposal_id):
            raise DeliberationError("deadline has not passed")
        members = self.h.groups[proposal.group].members if proposal.group in self.h.groups else []
        outcome = tally(
            proposal,
            self.feedback[proposal_id].values(),
            members,
            self.hosts[proposal_id],
            self.config,
        )
        self.outcomes[proposal_id] = outcome
        return outcome

    def route(self, outcome: Outcome, host_decision: Routing, now: int) -> tuple[Outcome, list[Proposal]]:
        """Apply the host's routing choice; returns the routed outcome and any new proposals."""
        proposal = self.proposals[outcome.proposal_id]
        group = self.h.groups.get(outcome.group)
        opened: list[Proposal] = []
        routing = host_decision
        origin = proposal.origin or proposal.id
        if routing is Routing.ESCALATE:
            if group is None or group.parent is None:
                routing = Routing.FINALIZE
            else:
                parent = self.h.groups[group.parent]
                proposer = outcome.host if outcome.host in parent.members else self.h.host(parent.id)
                proposer = self._active_member(parent.id, proposer)
                draft = self.draft(proposal.kind, proposer, parent.id, proposal.payload, now, origin=origin)
                p = self._signed(proposer, draft)
                opened.extend(self.submit_proposal(p))
        elif routing is Routing.DELEGATE:
            if group is None or not group.children:
                routing = Routing.FINALIZE
            else:
                for child_id in sorted(group.children):
                    child = self.h.groups[child_id]
                    if not child.members:
                        continue
                    proposer = self._active_member(child_id, self.h.host(child_id))
                    draft = self.draft(proposal.kind, proposer, child_id, proposal.payload, now, origin=origin)
                    p = self._signed(proposer, draft)
                    opened.extend(self.submit_proposal(p))
                    self.delegated_from[p.id] = proposal.id
        routed = replace(outcome, routing=routing)
        self.outcomes[outcome.proposal_id] = routed
        return routed, opened

    def attach_advisory(self, child_outcome: Outcome) -> Outcome | None:
        """Fold a delegated child's outcome into the parent's record (not its mean)."""
        parent_id = self.delegated_from.get(child_outcome.proposal_id)
        if parent_id is None:
            return None
        parent = self.outcomes[parent_id]
        note = Advisory(child_outcome.group, child_outcome.proposal_id, child_outcome.mean_score, child_outcome.decision)
        updated = replace(parent, advisory=parent.advisory + (note,))
        self.outcomes[parent_id] = updated
        return updated

    def _active_member(self, gid: str, preferred: str) -> str:
        if self.h.nodes[preferred].status is Status.ACTIVE:
            return preferred
        for m in self.h.groups[gid].members:
            if self.h.nodes[m].status is Status.ACTIVE:
                return m
        raise DeliberationError(f"{gid} has no member able to carry the proposal")

    def open_proposals(self) -> list[Proposal]:
        return [p for pid, p in sorted(self.proposals.items()) if pid not in self.outcomes]

    # -- casual interaction --------------------------------------------------

    def record_chat(
        self,
        sender: str,
        receiver: str,
        payload: bytes,
        epoch: int,
        rng: random.Random,
        topic: str | None = None,
    ) -> ChatRecord:
        for n in (sender, receiver):
            if self.h.nodes[n].status is Status.REVOKED:
                raise DeliberationError(f"{n} has been revoked")
        holders = choose_archive_holders(
            sender, receiver, self.h.active_nodes(), self.config.third_party_holders, rng
        )
        chat = ChatRecord(sender, receiver, epoch, payload, holders, topic)
        return self._signed(sender, chat)


def quorum(member_count: int, fraction: Fraction = Fraction(1, 2)) -> int:
    return math.ceil(member_count * fraction)


def tally(
    proposal: Proposal,
    feedbacks,
    members: Sequence[str],
    host: str,
    config: DeliberationConfig | None = None,
) -> Outcome:
    """Mean score over submitted feedback; adopt on threshold and quorum."""
    config = config or DeliberationConfig()
    member_set = set(members)
    counted = sorted(
        (fb for fb in feedbacks if fb.voter in member_set and fb.epoch <= proposal.deadline_epoch),
        key=lambda fb: fb.voter,
    )
    voters = tuple(fb.voter for fb in counted)
    waived = tuple(sorted(member_set - set(voters)))
    mean = Fraction(sum(fb.score for fb in counted), len(counted)) if counted else None
    quorum_met = bool(counted) and len(counted) >= quorum(len(member_set), config.quorum_fraction)
    adopt = quorum_met and mean is not None and mean >= config.threshold
    return Outcome(
        proposal_id=proposal.id,
        group=proposal.group,
        kind=proposal.kind,
        mean_score=mean,
        voters=voters,
        waived=waived,
        decision=Decision.ADOPT if adopt else Decision.REJECT,
        quorum_met=quorum_met,
        host=host,
    )


def choose_archive_holders(
    sender: str, receiver: str, population: Sequence[str], count: int, rng: random.Random
) -> tuple[str, ...]:
    pool = sorted(set(population) - {sender, receiver})
    third = rng.sample(pool, min(count, len(pool)))
    return (sender, receiver) + tuple(sorted(third))
