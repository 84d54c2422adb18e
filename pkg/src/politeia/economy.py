"""Stater rewards and transfers.

Balances are integers in minimal units. ``balances`` holds spendable funds,
``held`` holds minted rewards whose circulation is restricted until the
underlying achievement is verified, and ``debts`` records what a node owes
after a reversal it could not cover. At all times::

    sum(balances) + sum(held) - sum(debts) == total_minted
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Sequence

from .codec import canonical_encode, record, record_digest, verify_record
from .crypto import Digest, Signature, hash_bytes
from .org import Hierarchy, JurisdictionError, Status

MAX_AMOUNT = (1 << 63) - 1
ACTIVATION_THRESHOLD = 4


class EconomyError(Exception):
    pass


class InsufficientFunds(EconomyError):
    pass


class ConservationError(AssertionError):
    pass


class FalseTransaction(EconomyError):
    def __init__(self, tx_id: str, reason: str) -> None:
        super().__init__(f"{tx_id}: {reason}")
        self.tx_id = tx_id
        self.reason = reason


def checked_add(a: int, b: int) -> int:
    total = a + b
    if total > MAX_AMOUNT or total < 0:
        raise EconomyError(f"amount arithmetic out of range: {a} + {b}")
    return total


def group_amount(amounts: Iterable[int]) -> int:
    """Lower median of the proposed amounts."""
    ordered = sorted(amounts)
    if not ordered:
        raise EconomyError("no amount proposals to aggregate")
    return ordered[(len(ordered) - 1) // 2]


class CaseStatus(str, enum.Enum):
    EVALUATING = "evaluating"
    ESCALATING = "escalating"
    CONFIRMED = "confirmed"
    MINTED = "minted"
    HELD = "held"
    REJECTED = "rejected"
    REVOKED = "revoked"


@record
@dataclass(frozen=True)
class Achievement:
    id: str
    author: str
    field: str
    claimed_value: int
    epoch: int
    verified: bool
    signature: Signature | None = None

    UNSIGNED = ("signature",)


@dataclass
class RewardCase:
    id: str
    beneficiary: str
    achievement_ref: Digest
    proposer: str
    origin_group: str
    field: str
    cost_basis: int = 0
    per_group_amounts: dict[str, int] = field(default_factory=dict)
    status: CaseStatus = CaseStatus.EVALUATING
    final_amount: int | None = None
    hold: bool = False
    reasons: str = ""
    revocation_pending: bool = False
    release_pending: bool = False


@record
@dataclass(frozen=True)
class Transaction:
    id: str
    sender: str
    receiver: str
    amount: int
    memo: bytes
    epoch: int
    research: bool = False
    disclosed: bool = False
    sender_signature: Signature | None = None
    receiver_signature: Signature | None = None

    UNSIGNED = ("sender_signature", "receiver_signature")


@record
@dataclass(frozen=True)
class TxReport:
    tx_id: str
    reporter: str
    counterparty_group: str
    amount: int
    archive_hash: Digest
    epoch: int
    signature: Signature | None = None

    UNSIGNED = ("signature",)


@record
@dataclass(frozen=True)
class TxConfirmation:
    tx_id: str
    confirmer: str
    amount: int
    archive_hash: Digest
    epoch: int


@record
@dataclass(frozen=True)
class Announcement:
    epoch: int
    subject: str
    offense: str
    reference: str
    restricted_until: int
    issuer: str


@record
@dataclass(frozen=True)
class Disclosure:
    tx_id: str
    epoch: int
    scope_group: str | None
    scope_nodes: tuple[str, ...]
    by_consent: bool
    transaction: Transaction


@record
@dataclass(frozen=True)
class RewardRecord:
    case_id: str
    beneficiary: str
    field: str
    amount: int
    held: bool
    epoch: int


@dataclass
class BalanceBook:
    balances: dict[str, int] = field(default_factory=dict)
    held: dict[str, int] = field(default_factory=dict)
    debts: dict[str, int] = field(default_factory=dict)
    total_minted: int = 0

    def balance(self, node: str) -> int:
        return self.balances.get(node, 0)

    def holdings(self, node: str) -> int:
        return self.balances.get(node, 0) + self.held.get(node, 0)

    def conserved(self) -> bool:
        supply = sum(self.balances.values()) + sum(self.held.values()) - sum(self.debts.values())
        return supply == self.total_minted

    def _credit(self, node: str, amount: int) -> tuple[int, int]:
        """Credit incoming funds, paying down debt first. Returns (repaid, credited)."""
        owed = self.debts.get(node, 0)
        repaid = min(owed, amount)
        if repaid:
            self.debts[node] = owed - repaid
            if not self.debts[node]:
                del self.debts[node]
        credited = amount - repaid
        self.balances[node] = checked_add(self.balances.get(node, 0), credited)
        return repaid, credited

    def _debit(self, node: str, amount: int) -> int:
        """Take funds back; any shortfall becomes debt. Returns the shortfall."""
        have = self.balances.get(node, 0)
        taken = min(have, amount)
        self.balances[node] = have - taken
        shortfall = amount - taken
        if shortfall:
            self.debts[node] = checked_add(self.debts.get(node, 0), shortfall)
        return shortfall


@dataclass
class EconomyConfig:
    penalty_epochs: int = 10
    hold_unverified: bool = True


@dataclass(frozen=True)
class MintDelta:
    credited: dict[str, int]
    held: dict[str, int]
    released: dict[str, int]
    revoked: dict[str, int]
    minted_total: int


SignAs = Callable[[str, object], Signature]


class Economy:
    def __init__(
        self,
        hierarchy: Hierarchy,
        sign_as: SignAs,
        config: EconomyConfig | None = None,
        debug: bool = False,
    ) -> None:
        self.h = hierarchy
        self.sign_as = sign_as
        self.config = config or EconomyConfig()
        self.debug = debug
        self.book = BalanceBook()
        self.cases: dict[str, RewardCase] = {}
        self.achievements: dict[Digest, Achievement] = {}
        self.transactions: dict[str, Transaction] = {}
        self.invalidated: set[str] = set()
        self.research_costs: dict[str, int] = {}
        self._credit_split: dict[str, tuple[int, int]] = {}
        self._case_by_achievement: dict[Digest, str] = {}
        self._case_seq = 0
        self._tx_seq = 0

    def _check(self) -> None:
        if self.debug and not self.book.conserved():
            raise ConservationError("balances + held - debts != total minted")

    def check_activation(self) -> bool:
        return len(self.h.active_nodes()) >= ACTIVATION_THRESHOLD

    # -- rewards -------------------------------------------------------------

    def register_achievement(self, ach: Achievement) -> Digest:
        if not verify_record(self.h.nodes[ach.author].public_key, ach, ach.signature):
            raise EconomyError("achievement signature does not verify")
        digest = record_digest(ach)
        self.achievements[digest] = ach
        return digest

    def next_case_id(self) -> str:
        self._case_seq += 1
        return f"c{self._case_seq:05d}"

    def open_reward_case(
        self, beneficiary: str, achievement_ref: Digest, proposer: str, origin_group: str, case_id: str | None = None
    ) -> RewardCase:
        if not self.check_activation():
            raise EconomyError(f"rewards need at least {ACTIVATION_THRESHOLD} nodes")
        ach = self.achievements.get(achievement_ref)
        if ach is None:
            raise EconomyError("achievement is not archived")
        if ach.author != beneficiary:
            raise EconomyError("beneficiary is not the achievement's author")
        if achievement_ref in self._case_by_achievement:
            raise EconomyError("a reward case already exists for this achievement")
        case = RewardCase(
            id=case_id or self.next_case_id(),
            beneficiary=beneficiary,
            achievement_ref=achievement_ref,
            proposer=proposer,
            origin_group=origin_group,
            field=ach.field,
            cost_basis=self.research_costs.pop(beneficiary, 0),
        )
        self.cases[case.id] = case
        self._case_by_achievement[achievement_ref] = case.id
        return case

    def record_group_amount(self, case_id: str, group: str, amounts: Sequence[int]) -> int:
        case = self.cases[case_id]
        amount = group_amount(amounts)
        case.per_group_amounts[group] = amount
        case.status = CaseStatus.ESCALATING
        return amount

    def confirm_reward(self, case_id: str, adopted: bool, amount: int | None = None, reasons: str = "") -> RewardCase:
        """Top-level decision. Minting waits for block finality."""
        case = self.cases[case_id]
        if case.status not in (CaseStatus.EVALUATING, CaseStatus.ESCALATING):
            raise EconomyError(f"case {case_id} is already {case.status.value}")
        if not adopted:
            case.status = CaseStatus.REJECTED
            case.reasons = reasons or "rejected by the top-level group"
            return case
        if amount is None or amount < 0:
            raise EconomyError("confirmed reward needs a non-negative amount")
        case.final_amount = amount
        case.status = CaseStatus.CONFIRMED
        ach = self.achievements[case.achievement_ref]
        case.hold = self.config.hold_unverified and not ach.verified
        return case

    def reject_case(self, case_id: str, reasons: str) -> RewardCase:
        case = self.cases[case_id]
        case.status = CaseStatus.REJECTED
        case.reasons = reasons
        return case

    def request_release(self, case_id: str) -> None:
        self.cases[case_id].release_pending = True

    def request_revocation(self, case_id: str) -> None:
        self.cases[case_id].revocation_pending = True

    def mint_on_finality(self, block) -> MintDelta:
        """Apply a finalized block's reward entries: mints, then releases, then revocations."""
        if not block.finalized:
            raise EconomyError("block is not final")
        report = block.top_summary.report
        credited: dict[str, int] = {}
        held: dict[str, int] = {}
        released: dict[str, int] = {}
        revoked: dict[str, int] = {}
        minted = 0
        for entry in report.rewards:
            case = self.cases.get(entry.case_id)
            if case is None or case.status is not CaseStatus.CONFIRMED:
                raise EconomyError(f"case {entry.case_id} is not awaiting minting")
            amount = case.final_amount
            self.book.total_minted = checked_add(self.book.total_minted, amount)
            minted += amount
            if case.hold:
                self.book.held[case.beneficiary] = checked_add(self.book.held.get(case.beneficiary, 0), amount)
                held[case.beneficiary] = held.get(case.beneficiary, 0) + amount
                case.status = CaseStatus.HELD
            else:
                self.book._credit(case.beneficiary, amount)
                credited[case.beneficiary] = credited.get(case.beneficiary, 0) + amount
                case.status = CaseStatus.MINTED
            self._check()
        for case_id in report.releases:
            case = self.cases[case_id]
            if case.status is CaseStatus.HELD:
                self.book.held[case.beneficiary] -= case.final_amount
                self.book._credit(case.beneficiary, case.final_amount)
                released[case.beneficiary] = released.get(case.beneficiary, 0) + case.final_amount
                case.status = CaseStatus.MINTED
                case.hold = False
            self._check()
        for case_id in report.revocations:
            case = self.cases[case_id]
            if case.status is CaseStatus.HELD:
                self.book.held[case.beneficiary] -= case.final_amount
            elif case.status is CaseStatus.MINTED:
                self.book._debit(case.beneficiary, case.final_amount)
            elif case.status is not CaseStatus.CONFIRMED:
                continue
            if case.status is not CaseStatus.CONFIRMED:
                self.book.total_minted -= case.final_amount
                revoked[case.beneficiary] = revoked.get(case.beneficiary, 0) + case.final_amount
            case.status = CaseStatus.REVOKED
            self._check()
        return MintDelta(credited, held, released, revoked, minted)

    # -- transactions --------------------------------------------------------

    def next_tx_id(self) -> str:
        self._tx_seq += 1
        return f"t{self._tx_seq:06d}"

    def execute_transaction(self, tx: Transaction) -> tuple[TxReport, TxReport]:
        if tx.sender == tx.receiver:
            raise EconomyError("sender and receiver must differ")
        if type(tx.amount) is not int or tx.amount <= 0:
            raise EconomyError("transaction amount must be positive")
        if tx.id in self.transactions:
            raise EconomyError(f"duplicate transaction {tx.id}")
        for party, sig in ((tx.sender, tx.sender_signature), (tx.receiver, tx.receiver_signature)):
            node = self.h.nodes.get(party)
            if node is None or not verify_record(node.public_key, tx, sig):
                raise EconomyError(f"signature of {party} does not verify")
        if self.h.nodes[tx.sender].status is not Status.ACTIVE:
            raise EconomyError(f"{tx.sender} may not send funds")
        if self.h.nodes[tx.receiver].status is Status.REVOKED:
            raise EconomyError(f"{tx.receiver} has been revoked")
        spendable = self.book.balance(tx.sender)
        if spendable < tx.amount:
            if spendable + self.book.held.get(tx.sender, 0) >= tx.amount:
                raise InsufficientFunds(f"{tx.sender} cannot spend held funds (spendable {spendable})")
            raise InsufficientFunds(f"{tx.sender} has {spendable}, needs {tx.amount}")
        self.book.balances[tx.sender] = spendable - tx.amount
        self._credit_split[tx.id] = self.book._credit(tx.receiver, tx.amount)
        self.transactions[tx.id] = tx
        self._check()
        archive_hash = hash_bytes(canonical_encode(tx))
        reports = []
        for reporter, counterparty in ((tx.sender, tx.receiver), (tx.receiver, tx.sender)):
            report = TxReport(
                tx_id=tx.id,
                reporter=reporter,
                counterparty_group=self.h.home_group(counterparty) or "",
                amount=tx.amount,
                archive_hash=archive_hash,
                epoch=tx.epoch,
            )
            reports.append(replace(report, signature=self.sign_as(reporter, report)))
        return reports[0], reports[1]

    def lca_confirm(self, first: TxReport, second: TxReport, epoch: int | None = None) -> TxConfirmation:
        """The lowest group governing both parties confirms; mismatched reports are false."""
        for rep in (first, second):
            if not verify_record(self.h.nodes[rep.reporter].public_key, rep, rep.signature):
                raise FalseTransaction(rep.tx_id, f"report by {rep.reporter} is not validly signed")
        if first.tx_id != second.tx_id:
            raise FalseTransaction(first.tx_id, "reports name different transactions")
        if first.reporter == second.reporter:
            raise FalseTransaction(first.tx_id, "both reports come from the same node")
        if first.amount != second.amount:
            raise FalseTransaction(first.tx_id, "reported amounts differ")
        if first.archive_hash != second.archive_hash:
            raise FalseTransaction(first.tx_id, "archive hashes differ")
        home_a = self.h.home_group(first.reporter)
        home_b = self.h.home_group(second.reporter)
        if first.counterparty_group != home_b or second.counterparty_group != home_a:
            raise FalseTransaction(first.tx_id, "counterparty group does not match")
        confirmer = self.h.lca(home_a, home_b)
        return TxConfirmation(
            tx_id=first.tx_id,
            confirmer=confirmer,
            amount=first.amount,
            archive_hash=first.archive_hash,
            epoch=first.epoch if epoch is None else epoch,
        )

    def invalidate_transaction(
        self, tx_id: str, reason: str, offenders: Sequence[str], epoch: int, issuer: str
    ) -> list[Announcement]:
        """Reverse a false transaction, restrict the offenders, announce it."""
        if tx_id in self.invalidated:
            raise EconomyError(f"{tx_id} was already invalidated")
        tx = self.transactions[tx_id]
        repaid, credited = self._credit_split.pop(tx_id)
        self.book._debit(tx.receiver, credited)
        if repaid:
            self.book.debts[tx.receiver] = checked_add(self.book.debts.get(tx.receiver, 0), repaid)
        self.book._credit(tx.sender, tx.amount)
        self.invalidated.add(tx_id)
        self._check()
        return [self.penalize(n, f"false transaction: {reason}", tx_id, epoch, issuer) for n in offenders]

    def penalize(self, node_id: str, offense: str, reference: str, epoch: int, issuer: str) -> Announcement:
        node = self.h.nodes[node_id]
        until = epoch + self.config.penalty_epochs
        if node.status is not Status.REVOKED:
            node.status = Status.RESTRICTED
            node.restricted_until = max(until, node.restricted_until or 0)
        return Announcement(epoch, node_id, offense, reference, until, issuer)

    def disclose_transaction(
        self,
        tx_id: str,
        epoch: int,
        consenting: Iterable[str] = (),
        order_group: str | None = None,
    ) -> Disclosure:
        tx = self.transactions[tx_id]
        if order_group is not None:
            governed = self.h.subtree_nodes(order_group)
            if tx.sender not in governed or tx.receiver not in governed:
                raise JurisdictionError(f"{order_group} is not a common superior of the parties")
            return Disclosure(tx_id, epoch, order_group, tuple(sorted(governed)), False, tx)
        if set(consenting) != {tx.sender, tx.receiver}:
            raise EconomyError("voluntary disclosure needs both parties' consent")
        if tx.research:
            self.research_costs[tx.sender] = checked_add(self.research_costs.get(tx.sender, 0), tx.amount)
        return Disclosure(tx_id, epoch, None, (), True, tx)
