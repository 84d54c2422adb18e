"""Deterministic epoch loop driving every protocol module.

Each epoch runs seven stages: membership, casual interaction, deliberation,
transactions, archiving, block assembly, finality. All randomness comes from
streams derived from the master seed per (label, epoch).
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

from ..codec import record_digest, sign_record
from ..crypto import ZERO_DIGEST, Digest, KeyPair, Signature, hash_bytes
from ..deliberation import (
    Ballot,
    Deliberation,
    DeliberationConfig,
    Decision,
    Feedback,
    Kind,
    Outcome,
    RewardPayload,
    Routing,
)
from ..economy import (
    Achievement,
    CaseStatus,
    Economy,
    EconomyConfig,
    EconomyError,
    FalseTransaction,
    RewardRecord,
    Transaction,
)
from ..ledger import (
    Admission,
    AffairReport,
    BackupEntry,
    ChainData,
    ChainVerifier,
    DisclosureNote,
    ElectionEntry,
    GroupState,
    LevelAmount,
    OutcomeEntry,
    RejectionNotice,
    RewardEntry,
    Violation,
    assemble_block,
    assign_cross_backups,
    build_group_summary,
    build_node_archive,
    chain_hash,
    committee_signatures,
    core_handover,
    finalize_block,
    rectify,
    report_up,
    write_chain,
)
from ..org import Hierarchy, NodeIdentity, Status
from ..reputation import DIMENSIONS, Evaluation, ReputationBook
from .config import EVENT_KINDS, POLICIES, ConfigError, ScenarioConfig, ScriptedEvent, derive_rng, derive_seed
from .policies import Policy, PrivateTx, ProposalView, Snapshot, make_policy


class ScenarioFailure(AssertionError):
    pass


@dataclass(frozen=True)
class Event:
    seq: int
    epoch: int
    kind: str
    digest: str
    holders: tuple[str, ...] = ()
    archived_in: int | None = None
    signatures: tuple[str, ...] = ()
    data: dict[str, Any] = field(default_factory=dict)

    def to_line(self) -> str:
        out = {
            "seq": self.seq,
            "epoch": self.epoch,
            "kind": self.kind,
            "digest": self.digest,
            "signatures": list(self.signatures),
            "data": self.data,
        }
        if self.holders:
            out["holders"] = list(self.holders)
            out["archived_in"] = self.archived_in
        return json.dumps(out, sort_keys=True, separators=(",", ":"))


def _signatures_of(rec) -> tuple[str, ...]:
    sigs = []
    for name in getattr(type(rec), "UNSIGNED", ()):
        value = getattr(rec, name)
        if isinstance(value, Signature):
            sigs.append(value.sig.hex())
        elif isinstance(value, tuple):
            sigs.extend(s.sig.hex() for s in value if isinstance(s, Signature))
    return tuple(sigs)


@dataclass
class _Accumulator:
    outcomes: list = field(default_factory=list)
    elections: list = field(default_factory=list)
    level_amounts: list = field(default_factory=list)
    transactions: list = field(default_factory=list)
    rejections: list = field(default_factory=list)
    rectifications: list = field(default_factory=list)
    handovers: list = field(default_factory=list)
    disclosures: list = field(default_factory=list)

    def absorb(self, other: _Accumulator) -> None:
        for name in self.__dataclass_fields__:
            getattr(self, name).extend(getattr(other, name))


@dataclass
class _Public:
    admissions: list = field(default_factory=list)
    departures: list = field(default_factory=list)
    announcements: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    releases: list = field(default_factory=list)
    revocations: list = field(default_factory=list)


class Simulation:
    def __init__(self, config: ScenarioConfig) -> None:
        config.validate()
        self.cfg = config
        self.h = Hierarchy()
        self.keys: dict[str, KeyPair] = {}
        self.pubkeys: dict[str, bytes] = {}
        self.delib = Deliberation(
            self.h,
            self.sign_as,
            DeliberationConfig(
                deadline=config.deadline,
                threshold=Fraction(config.threshold).limit_denominator(1000),
                quorum_fraction=Fraction(config.quorum).limit_denominator(1000),
                third_party_holders=config.chat_holders,
            ),
        )
        self.rep = ReputationBook(self.h.co_members, lambda n: self.h.nodes[n].public_key, config.reputation_window)
        self.eco = Economy(
            self.h, self.sign_as, EconomyConfig(config.penalty_epochs, config.hold_unverified), debug=config.debug
        )
        self.policies: dict[str, Policy] = {}
        self.quality: dict[str, int] = {}
        self.schedule: dict[int, list[ScriptedEvent]] = defaultdict(list)
        for ev in config.events:
            self.schedule[ev.epoch].append(ev)
        self.events: list[Event] = []
        self.chain = ChainData()
        self.inbox: dict[str, list] = defaultdict(list)
        self.last_archive: dict[str, Digest] = {}
        self.acc: dict[str, _Accumulator] = defaultdict(_Accumulator)
        self.public = _Public()
        self.summary_history: dict[str, list[Digest]] = defaultdict(list)
        self.pending_rect: dict[str, RejectionNotice] = {}
        self.rect_attempts: dict[str, int] = defaultdict(int)
        self.notice_status: dict[Digest, tuple[int, int | None]] = {}
        self.injected_faults: dict[str, str] = {}
        self.private_txs: dict[str, list[PrivateTx]] = defaultdict(list)
        self.case_of: dict[str, str] = {}
        self.views: dict[str, ProposalView] = {}
        self.fabricated: set[Digest] = set()
        self.verifications: dict[int, list[tuple[Digest, bool]]] = defaultdict(list)
        self.composites: dict[str, Fraction] = {}
        self.group_view: dict[str, tuple[str, ...]] = {}
        self.active_view: tuple[str, ...] = ()
        self.epoch = 0
        self._node_seq = 0
        self._ach_seq = 0
        self._election_seq = 0

    # -- plumbing ------------------------------------------------------------

    def sign_as(self, node: str, obj) -> Signature:
        return sign_record(self.keys[node], obj)

    def rng(self, label: str):
        return derive_rng(self.cfg.seed, label, self.epoch)

    def log(self, kind: str, data: dict | None = None, rec=None, holders=(), archived_in: int | None = None) -> Event:
        data = data or {}
        if rec is not None:
            digest = record_digest(rec)
            sigs = _signatures_of(rec)
        else:
            digest = hash_bytes(json.dumps(data, sort_keys=True).encode())
            sigs = ()
        holders = tuple(dict.fromkeys(holders))
        ev = Event(
            seq=len(self.events),
            epoch=self.epoch,
            kind=kind,
            digest=digest.hex(),
            holders=holders,
            archived_in=(self.epoch if archived_in is None else archived_in) if holders else None,
            signatures=sigs,
            data=data,
        )
        self.events.append(ev)
        return ev

    def archive(self, rec, holders, kind: str, data: dict | None = None, archived_in: int | None = None) -> None:
        """Hand a signed record to its holders' archives and log it."""
        ev = self.log(kind, data, rec, holders, archived_in)
        for h in ev.holders:
            self.inbox[h].append(rec)

    def inject_event(self, epoch: int, kind: str, params: dict | None = None) -> None:
        if kind not in EVENT_KINDS:
            raise ConfigError(f"unknown event kind {kind!r}")
        if not self.epoch <= epoch < self.cfg.epochs:
            raise ConfigError(f"epoch {epoch} is outside the remaining run")
        self.schedule[epoch].append(ScriptedEvent(epoch, kind, dict(params or {})))

    def _scripted(self, kind: str) -> list[dict]:
        return [ev.params for ev in self.schedule.get(self.epoch, ()) if ev.kind == kind]

    def _refresh_views(self) -> None:
        self.group_view = {gid: tuple(g.members) for gid, g in self.h.groups.items()}
        self.active_view = tuple(self.h.active_nodes())

    def snapshot(self, node: str) -> Snapshot:
        n = self.h.nodes[node]
        clique = frozenset(m for m, p in self.policies.items() if p.name == "malicious")
        return Snapshot(
            node=node,
            epoch=self.epoch,
            memberships=tuple(sorted(n.memberships)),
            group_members=self.group_view,
            composites=self.composites,
            join_epochs={k: v.join_epoch for k, v in self.h.nodes.items()},
            active=self.active_view,
            spendable=self.eco.book.balance(node),
            own_transactions=tuple(self.private_txs.get(node, ())),
            benchmark_max=max(self.cfg.benchmarks.values()),
            clique=clique if self.policies[node].name == "malicious" else frozenset(),
            quality=self.quality if self.policies[node].name != "malicious" else {},
        )

    def _committee(self, gid: str) -> tuple[str, ...]:
        g = self.h.groups[gid]
        return tuple(g.core_nodes) if g.core_nodes else tuple(g.members)

    def _acc_for(self, gid: str | None) -> _Accumulator:
        if gid is None or gid not in self.h.groups:
            top = self.h.top()
            return self.acc[top.id if top else ""]
        return self.acc[gid]

    # -- stage 1: membership -------------------------------------------------

    def _policy_for(self, node: str, rng) -> str:
        if node in self.cfg.policy_overrides:
            return self.cfg.policy_overrides[node]
        x = rng.random()
        acc = 0.0
        for name in POLICIES:
            acc += self.cfg.policy_mix.get(name, 0.0)
            if x < acc:
                return name
        return max(self.cfg.policy_mix, key=self.cfg.policy_mix.get)

    def admit(self) -> str:
        node = f"n{self._node_seq:04d}"
        self._node_seq += 1
        rng = derive_rng(self.cfg.seed, f"node:{node}")
        key = KeyPair.from_seed(derive_seed(self.cfg.seed, node))
        self.keys[node] = key
        self.pubkeys[node] = key.public_key
        self.policies[node] = make_policy(self._policy_for(node, rng), self.cfg.lazy_skip)
        self.quality[node] = rng.randint(3, 9)
        gid = self.h.admit_node(NodeIdentity(node, key.public_key, self.epoch))
        self.public.admissions.append(Admission(node, key.public_key, self.epoch))
        self.log("arrival", {"node": node, "group": gid, "policy": self.policies[node].name})
        return node

    def depart(self, node: str) -> None:
        if node not in self.h.nodes or self.h.nodes[node].status is Status.REVOKED:
            raise ScenarioFailure(f"cannot remove unknown or departed node {node}")
        events = self.h.remove_node(node)
        self.public.departures.append(node)
        self.inbox.pop(node, None)
        self.log("departure", {"node": node, "successions": [e.nodes[0] for e in events if e.kind == "succession"]})

    def hold_election(self, gid: str, rng) -> None:
        g = self.h.groups[gid]
        self._election_seq += 1
        eid = f"e{self._election_seq:06d}"
        rankings = {}
        for m in g.members:
            ranking = tuple(self.policies[m].cast_ballot(self.snapshot(m), g.members, rng))
            ballot = Ballot(eid, gid, m, ranking, self.epoch)
            ballot = replace(ballot, signature=self.sign_as(m, ballot))
            self.archive(ballot, (m,), "ballot", {"election": eid, "group": gid})
            rankings[m] = list(ranking)
        old = list(g.core_nodes)
        result = self.h.run_election(gid, rankings, self.composites)
        self.h.confirm_election(result)
        new = list(self.h.groups[gid].core_nodes)
        self.acc[gid].elections.append(ElectionEntry(eid, tuple(new), result.member_count))
        self.log("election", {"election": eid, "group": gid, "winners": new, "previous": old})
        if old and old != new:
            inventory = list(self.summary_history.get(gid, ()))
            outgoing = [n for n in old if n in self.h.nodes and self.h.nodes[n].status is not Status.REVOKED]
            rec = core_handover(gid, self.epoch, outgoing, new, inventory, inventory, self.sign_as)
            self.acc[gid].handovers.append(rec)
            self.log("handover", {"group": gid, "old": outgoing, "new": new, "inventory": len(inventory)}, rec)

    def settle(self, rng, max_rounds: int = 1000) -> None:
        for _ in range(max_rounds):
            self.h.rebalance()
            pending = self.h.groups_needing_election()
            if not pending:
                return
            self._refresh_views()
            self.hold_election(pending[0], rng)
        raise ScenarioFailure("hierarchy did not settle")

    def _rectify_pending(self, rng) -> None:
        for gid in sorted(self.pending_rect):
            notice = self.pending_rect.pop(gid)
            if gid not in self.h.groups:
                raise ScenarioFailure(f"rejected group {gid} vanished before rectification")

            def re_elect(n: RejectionNotice, gid=gid) -> str:
                self._refresh_views()
                self.hold_election(gid, rng)
                dropped = self.injected_faults.pop(gid, None)
                if dropped is not None and dropped in self.h.nodes:
                    self.h.resign_unjustified(dropped)
                return "re-elected " + ",".join(self.h.groups[gid].core_nodes)

            handlers = {
                "re-elect": re_elect,
                "re-evaluate": lambda n: "reward amounts re-deliberated",
                "revoke-transaction": lambda n: "out-of-jurisdiction confirmations voided",
                "other": lambda n: "summary rebuilt and re-signed",
            }
            rec = rectify(gid, notice, self.epoch, handlers, self._committee(gid), self.sign_as)
            self.acc[gid].rectifications.append(rec)
            first_epoch, _ = self.notice_status[record_digest(notice)]
            self.notice_status[record_digest(notice)] = (first_epoch, self.epoch)
            self.log("rectification", {"group": gid, "actions": list(rec.actions), "details": list(rec.details)}, rec)

    def stage_membership(self) -> None:
        rng = self.rng("membership")
        self._rectify_pending(rng)
        for n in sorted(self.h.nodes):
            node = self.h.nodes[n]
            if node.status is Status.RESTRICTED and (node.restricted_until or 0) <= self.epoch:
                node.status = Status.ACTIVE
                node.restricted_until = None
                self.log("restriction-lifted", {"node": n})
        arrivals = self.cfg.initial_nodes if self.epoch == 0 else 0
        arrivals += self.cfg.arrival_schedule.get(self.epoch, 0)
        arrivals += sum(int(p.get("count", 1)) for p in self._scripted("node-arrival"))
        for _ in range(arrivals):
            self.admit()
        for params in self._scripted("node-departure"):
            node = params.get("node")
            if node is None:
                leaf = min((g for g in self.h.groups.values() if g.core_nodes), key=lambda g: (g.level, g.id), default=None)
                if leaf is None:
                    continue
                node = leaf.core_nodes[0]
            self.depart(node)
        self.h.epoch = self.epoch
        self._refresh_composites()
        self.settle(rng)
        for params in self._scripted("forced-transfer"):
            self._forced_transfer(params, rng)
        if self.cfg.debug:
            problems = self.h.check_invariants()
            if problems:
                raise ScenarioFailure("organization invariants violated: " + "; ".join(problems[:5]))

    def _forced_transfer(self, params: dict, rng) -> None:
        parents = sorted(
            (g for g in self.h.groups.values() if len(g.children) >= 2), key=lambda g: (g.level, g.id)
        )
        if not parents:
            self.log("transfer-skipped", {"reason": "no group governs two subordinate groups"})
            return
        parent = parents[0]
        kids = sorted((self.h.groups[c] for c in parent.children), key=lambda g: (-g.size, g.id))
        src, dst = kids[0], kids[-1]
        node = params.get("node") or next(
            (m for m in src.members if m not in src.core_nodes and m not in dst.members), None
        )
        if node is None:
            return
        self.h.transfer_node(parent.id, node, src.id, dst.id)
        self.log("transfer", {"node": node, "from": src.id, "to": dst.id, "by": parent.id})
        self.settle(rng)

    def _refresh_composites(self) -> None:
        self.rep.period = self.epoch
        views = {n: self.rep.aggregate(n) for n in self.h.active_nodes()}
        self.composites = {n: v.composite for n, v in views.items()}
        self.log("reputation", {
            n: [f"{float(v.per_dimension[d]):.4f}" for d in DIMENSIONS] + [f"{float(v.composite):.4f}"]
            for n, v in views.items()
        })

    # -- stage 2: chats and evaluations -------------------------------------

    def stage_interaction(self) -> None:
        self._refresh_views()
        rng = self.rng("interaction")
        self.rep.period = self.epoch
        for node in self.active_view:
            snap = self.snapshot(node)
            pol = self.policies[node]
            receiver = pol.initiate_chat(snap, self.cfg.chat_rate, rng)
            if receiver is not None:
                payload = rng.getrandbits(64).to_bytes(8, "big")
                chat = self.delib.record_chat(node, receiver, payload, self.epoch, rng)
                self.archive(chat, chat.archive_holders, "chat", {"sender": node, "receiver": receiver})
            peers = snap.peers()
            for subject in rng.sample(peers, min(self.cfg.evaluation_count, len(peers))):
                ev = Evaluation(node, subject, self.epoch, pol.evaluate_peer(snap, subject, rng))
                ev = replace(ev, signature=self.sign_as(node, ev))
                self.rep.submit_evaluation(ev)
                self.archive(ev, (node,), "evaluation", {"subject": subject})

    # -- stage 3: achievements and deliberation -----------------------------

    def publish(self, author: str, fabricated: bool, rng, value: int | None = None, verified: bool | None = None) -> None:
        self._ach_seq += 1
        benchmark = max(self.cfg.benchmarks.values())
        if value is None:
            value = benchmark if fabricated else self.cfg.benchmarks[rng.choice(sorted(self.cfg.benchmarks))]
        if verified is None:
            verified = False if fabricated else rng.random() >= self.cfg.unverified_rate
        ach = Achievement(f"a{self._ach_seq:05d}", author, rng.choice(self.cfg.fields), value, self.epoch, verified)
        ach = replace(ach, signature=self.sign_as(author, ach))
        digest = self.eco.register_achievement(ach)
        if fabricated:
            self.fabricated.add(digest)
        self.archive(
            ach, (author,), "achievement",
            {"author": author, "field": ach.field, "claimed": value, "verified": verified, "fabricated": fabricated},
        )
        if not verified and self.cfg.verification_delay > 0:
            self.verifications[self.epoch + self.cfg.verification_delay].append((digest, not fabricated))
        if not self.eco.check_activation():
            self.log("reward-inactive", {"achievement": ach.id, "active_nodes": len(self.h.active_nodes())})
            return
        home = self.h.home_group(author)
        if home is None or self.h.nodes[author].status is not Status.ACTIVE:
            return
        case = self.eco.open_reward_case(author, digest, author, home)
        payload = RewardPayload(case.id, author, digest, ach.field, value, case.cost_basis)
        proposal = self.delib.draft(Kind.REWARD, author, home, payload, self.epoch)
        proposal = replace(proposal, signature=self.sign_as(author, proposal))
        for p in self.delib.submit_proposal(proposal):
            self._register_proposal(p, case.id if p.kind is Kind.REWARD else None)

    def _register_proposal(self, p, case_id: str | None) -> None:
        if case_id is not None:
            case = self.eco.cases[case_id]
            ach = self.eco.achievements[case.achievement_ref]
            self.case_of[p.id] = case_id
            self.views[p.id] = ProposalView(
                p.id, p.kind.value, p.group, case.beneficiary, case.field, ach.claimed_value, case.cost_basis
            )
        else:
            self.views[p.id] = ProposalView(p.id, p.kind.value, p.group)
        self.archive(p, (p.proposer,), "proposal", {"proposal": p.id, "kind": p.kind.value, "group": p.group})

    def _verify_due(self) -> None:
        due = list(self.verifications.pop(self.epoch, ()))
        for params in self._scripted("verification-result"):
            ref = params["achievement"]
            digest = next((d for d, a in self.eco.achievements.items() if a.id == ref), None)
            if digest is None:
                raise ScenarioFailure(f"verification of unknown achievement {ref}")
            due.append((digest, bool(params.get("passed", digest not in self.fabricated))))
        top = self.h.top()
        for digest, passed in due:
            ach = self.eco.achievements[digest]
            case_id = self.eco._case_by_achievement.get(digest)
            case = self.eco.cases.get(case_id) if case_id else None
            self.log("verification", {"achievement": ach.id, "passed": passed, "case": case_id})
            if passed:
                if case is not None and case.hold and case.status in (CaseStatus.CONFIRMED, CaseStatus.HELD):
                    self.eco.request_release(case.id)
                    self.public.releases.append(case.id)
                continue
            ann = self.eco.penalize(ach.author, "fabricated research achievement", ach.id, self.epoch, top.id)
            self.public.announcements.append(ann)
            self.log("fraud-detected", {"node": ach.author, "achievement": ach.id, "latency": self.epoch - ach.epoch})
            if case is None:
                continue
            if case.status in (CaseStatus.EVALUATING, CaseStatus.ESCALATING):
                self.eco.reject_case(case.id, "achievement failed verification")
                self.log("reward-rejected", {"case": case.id, "reason": "verification failed"})
            elif case.status in (CaseStatus.CONFIRMED, CaseStatus.HELD, CaseStatus.MINTED):
                self.eco.request_revocation(case.id)
                self.public.revocations.append(case.id)

    def stage_deliberation(self) -> None:
        self._refresh_views()
        rng = self.rng("deliberation")
        self._verify_due()
        for node in self.active_view:
            if self.h.nodes[node].status is not Status.ACTIVE:
                continue
            kind = self.policies[node].publish(self.snapshot(node), self.cfg.achievement_rate, rng)
            if kind is not None:
                if kind == "fabricated":
                    self.log("fraud-attempt", {"node": node})
                self.publish(node, kind == "fabricated", rng)
        for params in self._scripted("achievement-publication"):
            self.publish(
                params["node"], bool(params.get("fabricated", False)), rng,
                params.get("value"), params.get("verified"),
            )
        for _ in range(100):
            if not self._deliberation_round(rng):
                break

    def _deliberation_round(self, rng) -> bool:
        progressed = False
        for p in self.delib.open_proposals():
            if p.group in self.h.groups and self.epoch <= p.deadline_epoch:
                self._collect_feedback(p, rng)
            if p.group in self.h.groups and self.epoch <= p.deadline_epoch and not self.delib.complete(p.id):
                continue
            outcome = self.delib.tally(p.id, self.epoch)
            self._route(p, outcome)
            progressed = True
        return progressed

    def _collect_feedback(self, p, rng) -> None:
        view = self.views[p.id]
        answered = self.delib.feedback[p.id].keys() | self.delib.late[p.id]
        for m in self.h.groups[p.group].members:
            if m in answered:
                continue
            if view.beneficiary == m:
                self.delib.recuse(p.id, m)
                self.log("recusal", {"proposal": p.id, "node": m})
                continue
            choice = self.policies[m].score_proposal(self.snapshot(m), view, rng)
            if choice is None:
                continue
            score, amount = choice
            fb = Feedback(p.id, m, score, b"", self.epoch, amount)
            fb = replace(fb, signature=self.sign_as(m, fb))
            status = self.delib.submit_feedback(fb)
            self.archive(fb, (m,), "feedback", {"proposal": p.id, "score": score, "amount": amount, "status": status})

    def _route(self, p, outcome: Outcome) -> None:
        case_id = self.case_of.get(p.id)
        case = self.eco.cases.get(case_id) if case_id else None
        group = self.h.groups.get(p.group)
        decision = Routing.FINALIZE
        amount = None
        if case is not None and case.status in (CaseStatus.EVALUATING, CaseStatus.ESCALATING):
            amounts = [fb.amount for fb in self.delib.feedback[p.id].values() if fb.amount is not None]
            if outcome.decision is Decision.ADOPT and amounts:
                amount = self.eco.record_group_amount(case.id, p.group, amounts)
                self._acc_for(p.group).level_amounts.append(LevelAmount(case.id, amount))
                if group is not None and group.parent is not None:
                    decision = Routing.ESCALATE
                else:
                    self.eco.confirm_reward(case.id, True, amount)
                    entry = RewardEntry(case.id, case.beneficiary, case.field, amount, case.hold)
                    self.public.rewards.append(entry)
                    self.log("reward-confirmed", {"case": case.id, "amount": amount, "hold": case.hold})
            else:
                reason = "no amount proposals" if outcome.decision is Decision.ADOPT else "not adopted"
                self.eco.confirm_reward(case.id, False, reasons=f"{reason} in {p.group}")
                self.log("reward-rejected", {"case": case.id, "group": p.group, "reason": reason})
        routed, opened = self.delib.route(outcome, decision, self.epoch)
        for q in opened:
            self._register_proposal(q, case_id if q.kind is Kind.REWARD else None)
        mean = routed.mean_score
        self._acc_for(p.group).outcomes.append(
            OutcomeEntry(p.id, p.kind.value, routed.decision.value, mean, routed.routing.value, record_digest(routed))
        )
        self.log(
            "outcome",
            {
                "proposal": p.id,
                "group": p.group,
                "kind": p.kind.value,
                "decision": routed.decision.value,
                "routing": routed.routing.value,
                "mean": None if mean is None else str(mean),
                "voters": len(routed.voters),
                "amount": amount,
            },
        )

    # -- stage 4: transactions ----------------------------------------------

    def stage_transactions(self) -> None:
        self._refresh_views()
        rng = self.rng("transactions")
        falsify = len(self._scripted("false-transaction"))
        for node in self.active_view:
            if self.h.nodes[node].status is not Status.ACTIVE:
                continue
            choice = self.policies[node].initiate_transaction(
                self.snapshot(node), self.cfg.tx_rate, self.cfg.research_tx_rate, rng
            )
            if choice is None:
                continue
            receiver, amount, research = choice
            if self.h.nodes[receiver].status is Status.REVOKED:
                continue
            if self._transact(node, receiver, amount, research, falsify > 0):
                falsify -= 1
        while falsify > 0:
            # Nobody transacted on their own; stage the forgery with a funded sender.
            senders = [n for n in self.active_view
                       if self.h.nodes[n].status is Status.ACTIVE and self.eco.book.balance(n) > 0]
            receivers = [n for n in self.active_view if self.h.nodes[n].status is not Status.REVOKED]
            if not senders or len(receivers) < 2:
                self.log("false-transaction-skipped", {"reason": "no funded sender"})
                break
            sender = senders[0]
            receiver = next(n for n in receivers if n != sender)
            self._transact(sender, receiver, 1, False, True)
            falsify -= 1
        for params in self._scripted("superior-disclosure-order"):
            self._ordered_disclosure(params)

    def _transact(self, sender: str, receiver: str, amount: int, research: bool, falsify: bool) -> bool:
        tx = Transaction(self.eco.next_tx_id(), sender, receiver, amount, b"", self.epoch, research)
        tx = replace(tx, sender_signature=self.sign_as(sender, tx), receiver_signature=self.sign_as(receiver, tx))
        try:
            first, second = self.eco.execute_transaction(tx)
        except EconomyError as exc:
            self.log("tx-refused", {"tx": tx.id, "reason": str(exc)})
            return False
        self.archive(tx, (sender, receiver), "transaction", {"tx": tx.id, "amount": amount, "research": research})
        self.private_txs[sender].append(PrivateTx(tx.id, sender, receiver, amount))
        self.private_txs[receiver].append(PrivateTx(tx.id, sender, receiver, amount))
        if falsify:
            second = replace(second, amount=second.amount + 1, signature=None)
            second = replace(second, signature=self.sign_as(receiver, second))
        for rep in (first, second):
            self.archive(rep, (rep.reporter,), "tx-report", {"tx": tx.id})
        homes = (self.h.home_group(sender), self.h.home_group(receiver))
        try:
            conf = self.eco.lca_confirm(first, second, self.epoch)
        except FalseTransaction as exc:
            issuer = self.h.lca(*homes)
            anns = self.eco.invalidate_transaction(tx.id, exc.reason, [receiver], self.epoch, issuer)
            self.public.announcements.extend(anns)
            self.log("tx-invalidated", {"tx": tx.id, "reason": exc.reason, "offenders": [receiver], "issuer": issuer})
            return True
        self.acc[conf.confirmer].transactions.append(conf)
        self.log("tx-confirmed", {"tx": tx.id, "confirmer": conf.confirmer, "amount": amount})
        if research:
            disclosure = self.eco.disclose_transaction(tx.id, self.epoch, consenting=(sender, receiver))
            self._acc_for(homes[0]).disclosures.append(DisclosureNote(tx.id, None, record_digest(disclosure)))
            self.archive(disclosure, (sender, receiver), "disclosure", {"tx": tx.id, "by_consent": True})
        return False

    def _ordered_disclosure(self, params: dict) -> None:
        live = [t for t in sorted(self.eco.transactions) if t not in self.eco.invalidated]
        tx_id = params.get("tx") or (live[-1] if live else None)
        if tx_id is None:
            self.log("disclosure-skipped", {"reason": "no transactions"})
            return
        tx = self.eco.transactions[tx_id]
        homes = [self.h.home_group(n) for n in (tx.sender, tx.receiver)]
        if None in homes:
            self.log("disclosure-skipped", {"tx": tx_id, "reason": "party departed"})
            return
        order_group = params.get("group") or self.h.lca(*homes)
        disclosure = self.eco.disclose_transaction(tx_id, self.epoch, order_group=order_group)
        self.acc[order_group].disclosures.append(DisclosureNote(tx_id, order_group, record_digest(disclosure)))
        self.archive(disclosure, self._committee(order_group), "disclosure", {"tx": tx_id, "scope": order_group})

    # -- stage 5: archives and summaries -----------------------------------

    def _inject_core_fault(self, params: dict) -> None:
        target = params.get("group")
        if target is None:
            candidates = sorted(
                (g for g in self.h.groups.values() if g.parent is not None and len(g.core_nodes) >= 2),
                key=lambda g: (g.level, g.id),
            )
            if not candidates:
                raise ScenarioFailure("no group can host a core-count violation")
            target = candidates[0].id
        g = self.h.groups[target]
        dropped = g.core_nodes.pop()
        self.injected_faults[target] = dropped
        self.log("fault-injected", {"group": target, "dropped_core": dropped})

    def stage_archive(self) -> dict[str, object]:
        for params in self._scripted("core-count-violation"):
            self._inject_core_fault(params)
        top = self.h.top()
        if top is None:
            return {}
        for node in sorted(n for n, ident in self.h.nodes.items() if ident.memberships):
            archive = build_node_archive(
                node, self.epoch, self.inbox.pop(node, []), self.last_archive.get(node, ZERO_DIGEST), self.sign_as
            )
            self.chain.archives[(self.epoch, node)] = archive
            self.last_archive[node] = archive.archive_digest
        for gid in list(self.acc):
            if gid not in self.h.groups:
                leftovers = self.acc.pop(gid)
                self.acc[top.id].absorb(leftovers)
        summaries = {}
        for g in sorted(self.h.groups.values(), key=lambda g: (g.level, g.id)):
            acc = self.acc.pop(g.id, _Accumulator())
            committee = self._committee(g.id)
            for child in sorted(g.children):
                verdict = report_up(
                    summaries[child], g.id, committee, self.pubkeys, self.sign_as, self.rect_attempts[child] + 1
                )
                if isinstance(verdict, RejectionNotice):
                    self.rect_attempts[child] += 1
                    if self.rect_attempts[child] > self.cfg.max_retry:
                        raise ScenarioFailure(f"{child} still rejected after {self.cfg.max_retry} rectifications")
                    acc.rejections.append(verdict)
                    self.pending_rect[child] = verdict
                    self.notice_status[record_digest(verdict)] = (self.epoch, None)
                    self.log("rejection", {"group": child, "by": g.id, "reasons": verdict.reasons,
                                           "tags": list(verdict.required_rectifications)}, verdict)
                else:
                    self.rect_attempts.pop(child, None)
            rects = tuple(
                replace(r, group=g.id, signatures=()) for r in acc.rectifications
            )
            rects = tuple(replace(r, signatures=committee_signatures(self.sign_as, committee, r)) for r in rects)
            report = AffairReport(
                state=GroupState(g.level, g.parent, tuple(sorted(g.children)), tuple(g.members), tuple(g.core_nodes)),
                outcomes=tuple(acc.outcomes),
                elections=tuple(acc.elections),
                level_amounts=tuple(acc.level_amounts),
                transactions=tuple(acc.transactions),
                rejections=tuple(acc.rejections),
                rectifications=rects,
                handovers=tuple(acc.handovers),
                disclosures=tuple(acc.disclosures),
            )
            if g.id == top.id:
                report = replace(
                    report,
                    admissions=tuple(self.public.admissions),
                    departures=tuple(self.public.departures),
                    announcements=tuple(self.public.announcements),
                    rewards=tuple(self.public.rewards),
                    releases=tuple(self.public.releases),
                    revocations=tuple(self.public.revocations),
                )
                self.public = _Public()
            summary = build_group_summary(
                g.id, self.epoch, report,
                {m: self.chain.archives[(self.epoch, m)] for m in g.members},
                {c: summaries[c] for c in g.children},
                self.pubkeys, self.sign_as,
            )
            summaries[g.id] = summary
            self.chain.summaries[(self.epoch, g.id)] = summary
            self.summary_history[g.id].append(summary.summary_digest)
        self.acc.clear()
        return summaries

    # -- stage 6 and 7: block and finality ---------------------------------

    def stage_block(self, summaries: dict) -> None:
        top = self.h.top()
        if top is None:
            return
        rng = self.rng("backups")
        assignment = assign_cross_backups(sorted(summaries), rng, self.cfg.backup_replicas)
        backups = {g: BackupEntry(holders, summaries[g].summary_digest) for g, holders in assignment.items()}
        prev = self.chain.blocks[len(self.chain.blocks) - 1] if self.chain.blocks else None
        block = assemble_block(summaries[top.id], prev, backups, self.pubkeys, self.sign_as)
        self.chain.blocks[block.height] = block
        self.log("block", {"height": block.height, "chain_hash": chain_hash(block).hex(),
                           "groups": len(summaries)})

    def _outstanding(self, block_epoch: int) -> bool:
        for first, rect in self.notice_status.values():
            if first == block_epoch and (rect is None or rect + self.cfg.finality_window > self.epoch):
                return True
        return False

    def stage_finality(self) -> None:
        if not self.chain.blocks:
            return
        latest = self.chain.blocks[len(self.chain.blocks) - 1]
        committee = latest.top_summary.report.state.committee
        for height in range(len(self.chain.blocks)):
            block = self.chain.blocks[height]
            if block.finalized:
                continue
            done = finalize_block(
                block, self.epoch, self.cfg.finality_window, self._outstanding(block.epoch), committee, self.sign_as
            )
            if not done.finalized:
                break
            self.chain.blocks[height] = done
            delta = self.eco.mint_on_finality(done)
            self.log("finalized", {"height": height, "epoch": block.epoch, "minted": delta.minted_total})
            for entry in done.top_summary.report.rewards:
                rec = RewardRecord(entry.case_id, entry.beneficiary, entry.field, entry.amount, entry.hold, self.epoch)
                self.archive(
                    rec, (entry.beneficiary,) if self.h.nodes[entry.beneficiary].memberships else (),
                    "reward-record", {}, archived_in=self.epoch + 1,
                )
                self.log("minted", {"case": entry.case_id, "node": entry.beneficiary, "field": entry.field,
                                    "amount": entry.amount, "held": entry.hold})
            for node, amount in sorted(delta.released.items()):
                self.log("released", {"node": node, "amount": amount})
            for node, amount in sorted(delta.revoked.items()):
                self.log("revoked", {"node": node, "amount": amount})
        book = self.eco.book
        if not book.conserved():
            raise ScenarioFailure("balances + held - debts differs from total minted")
        self.log("balances", {
            "holdings": {n: book.holdings(n) for n in sorted(set(book.balances) | set(book.held)) if book.holdings(n)},
            "debts": {n: d for n, d in sorted(book.debts.items()) if d},
            "total_minted": book.total_minted,
        })

    def _epoch_stats(self) -> None:
        levels: dict[str, int] = defaultdict(int)
        for g in self.h.groups.values():
            levels[str(g.level)] += 1
        self.log("epoch-stats", {"nodes": len(self.h.active_nodes()), "groups_per_level": dict(sorted(levels.items()))})

    # -- driver ------------------------------------------------------------

    def step(self) -> None:
        self.stage_membership()
        self.stage_interaction()
        self.stage_deliberation()
        self.stage_transactions()
        summaries = self.stage_archive()
        self.stage_block(summaries)
        self.stage_finality()
        self._epoch_stats()
        self.epoch += 1

    def run(self) -> None:
        while self.epoch < self.cfg.epochs:
            self.step()

    def audit_archives(self) -> list[str]:
        """Each archived record sits in exactly its holders' archives of the stated epoch."""
        where: dict[tuple[int, str], set[str]] = defaultdict(set)
        for (epoch, node), archive in self.chain.archives.items():
            for entry in archive.entries:
                where[(epoch, entry.digest.hex())].add(node)
        expected: dict[tuple[int, str], set[str]] = defaultdict(set)
        for ev in self.events:
            if not ev.holders:
                continue
            key = (ev.archived_in, ev.digest)
            expected[key].update(h for h in ev.holders if (ev.archived_in, h) in self.chain.archives)
        problems = []
        for key in sorted(set(where) | set(expected)):
            if key[0] >= self.epoch:
                continue
            if where.get(key, set()) != expected.get(key, set()):
                problems.append(f"epoch {key[0]} record {key[1][:12]}: archived by "
                                f"{sorted(where.get(key, ()))}, expected {sorted(expected.get(key, ()))}")
        return problems

    def event_lines(self) -> list[str]:
        return [ev.to_line() for ev in self.events]


@dataclass
class RunResult:
    simulation: Simulation
    events: list[str]
    violation: Violation | None
    audit: list[str]

    @property
    def chain(self) -> ChainData:
        return self.simulation.chain

    def final_block_digest(self) -> str | None:
        blocks = self.chain.blocks
        if not blocks:
            return None
        return record_digest(blocks[len(blocks) - 1]).hex()


def run_scenario(config: ScenarioConfig, out_dir: Path | None = None, verify: bool = True) -> RunResult:
    sim = Simulation(config)
    sim.run()
    violation = ChainVerifier().verify(sim.chain) if verify else None
    sim.log("verify", {"ok": violation is None, "violation": None if violation is None else violation.reason})
    audit = sim.audit_archives()
    lines = sim.event_lines()
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_chain(sim.chain, out)
        (out / "events.jsonl").write_text("".join(line + "\n" for line in lines))
    return RunResult(sim, lines, violation, audit)
