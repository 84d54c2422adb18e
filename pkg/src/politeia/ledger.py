"""Node archives, group summaries, and the hash-chained community blocks.

Each epoch every node signs an archive of the record digests it holds;
each group's committee signs a summary over its members' archive digests
and its children's summary digests; the top-level summary becomes the
block. A block's identity (the hash the next block links to) is the hash
of its top summary's canonical encoding.

A group's signing committee is its core nodes, or all of its members when
it is too small to have cores.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .codec import (
    CodecError,
    canonical_encode,
    parse_json,
    record,
    record_digest,
    render_json,
    unsigned_fields,
    verify_record,
)
from .crypto import ZERO_DIGEST, Digest, Signature, hash_bytes, verify
from .economy import Announcement, TxConfirmation
from .org import MAX_GROUP_SIZE, MIN_GROUP_SIZE, required_core_count

RECTIFICATION_TAGS = ("re-elect", "re-evaluate", "revoke-transaction", "other")


class LedgerError(Exception):
    pass


SignAs = Callable[[str, object], Signature]


# -- records ----------------------------------------------------------------

@dataclass(frozen=True)
class ArchiveEntry:
    kind: str
    digest: Digest


@record
@dataclass(frozen=True)
class NodeArchive:
    node: str
    epoch: int
    prev_archive: Digest
    entries: tuple[ArchiveEntry, ...]
    archive_digest: Digest = ZERO_DIGEST
    signature: Signature | None = None

    UNSIGNED = ("archive_digest", "signature")


@dataclass(frozen=True)
class GroupState:
    level: int
    parent: str | None
    children: tuple[str, ...]
    members: tuple[str, ...]
    cores: tuple[str, ...]

    @property
    def committee(self) -> tuple[str, ...]:
        return self.cores if self.cores else self.members


@dataclass(frozen=True)
class OutcomeEntry:
    proposal_id: str
    kind: str
    decision: str
    mean_score: Fraction | None
    routing: str | None
    digest: Digest


@dataclass(frozen=True)
class ElectionEntry:
    election_id: str
    winners: tuple[str, ...]
    member_count: int


@dataclass(frozen=True)
class LevelAmount:
    case_id: str
    amount: int


@dataclass(frozen=True)
class RewardEntry:
    case_id: str
    beneficiary: str
    field: str
    amount: int
    hold: bool


@dataclass(frozen=True)
class Admission:
    node: str
    public_key: bytes
    join_epoch: int


@dataclass(frozen=True)
class DisclosureNote:
    tx_id: str
    scope_group: str | None
    digest: Digest


@record
@dataclass(frozen=True)
class RejectionNotice:
    from_group: str
    to_group: str
    epoch: int
    summary_digest: Digest
    reasons: str
    required_rectifications: tuple[str, ...]
    attempt: int = 1
    signatures: tuple[Signature, ...] = ()

    UNSIGNED = ("signatures",)

    def __post_init__(self) -> None:
        if not self.reasons.strip():
            raise LedgerError("a rejection must state its reasons")
        bad = [t for t in self.required_rectifications if t not in RECTIFICATION_TAGS]
        if bad or not self.required_rectifications:
            raise LedgerError(f"unknown or missing rectification tags: {bad}")


@record
@dataclass(frozen=True)
class RectificationRecord:
    group: str
    notice: Digest
    epoch: int
    actions: tuple[str, ...]
    details: tuple[str, ...]
    signatures: tuple[Signature, ...] = ()

    UNSIGNED = ("signatures",)


@record
@dataclass(frozen=True)
class HandoverRecord:
    group: str
    epoch: int
    old_cores: tuple[str, ...]
    new_cores: tuple[str, ...]
    inventory: tuple[Digest, ...]
    signatures: tuple[Signature, ...] = ()

    UNSIGNED = ("signatures",)


@record
@dataclass(frozen=True)
class AffairReport:
    state: GroupState
    outcomes: tuple[OutcomeEntry, ...] = ()
    elections: tuple[ElectionEntry, ...] = ()
    level_amounts: tuple[LevelAmount, ...] = ()
    transactions: tuple[TxConfirmation, ...] = ()
    rejections: tuple[RejectionNotice, ...] = ()
    rectifications: tuple[RectificationRecord, ...] = ()
    handovers: tuple[HandoverRecord, ...] = ()
    announcements: tuple[Announcement, ...] = ()
    disclosures: tuple[DisclosureNote, ...] = ()
    admissions: tuple[Admission, ...] = ()
    departures: tuple[str, ...] = ()
    rewards: tuple[RewardEntry, ...] = ()
    releases: tuple[str, ...] = ()
    revocations: tuple[str, ...] = ()


@record
@dataclass(frozen=True)
class GroupSummary:
    group: str
    epoch: int
    report: AffairReport
    member_archives: dict[str, Digest]
    child_summaries: dict[str, Digest]
    summary_digest: Digest = ZERO_DIGEST
    core_signatures: tuple[Signature, ...] = ()

    UNSIGNED = ("summary_digest", "core_signatures")


@dataclass(frozen=True)
class BackupEntry:
    holders: tuple[str, ...]
    summary_digest: Digest


@record
@dataclass(frozen=True)
class Finality:
    height: int
    epoch: int
    block_digest: Digest
    signatures: tuple[Signature, ...] = ()

    UNSIGNED = ("signatures",)


@record
@dataclass(frozen=True)
class CommunityBlock:
    height: int
    epoch: int
    prev_hash: Digest
    top_summary: GroupSummary
    summary_hash: Digest
    backups: dict[str, BackupEntry]
    top_signatures: tuple[Signature, ...] = ()
    finality: Finality | None = None

    UNSIGNED = ("top_signatures", "finality")

    @property
    def finalized(self) -> bool:
        return self.finality is not None

    @property
    def finalize_epoch(self) -> int | None:
        return self.finality.epoch if self.finality else None


def chain_hash(block: CommunityBlock) -> Digest:
    """What the next block's ``prev_hash`` commits to."""
    return hash_bytes(canonical_encode(block.top_summary))


def committee_signatures(sign_as: SignAs, committee: Iterable[str], obj) -> tuple[Signature, ...]:
    return tuple(sign_as(n, obj) for n in committee)


def signed_by(obj, signatures: Sequence[Signature], committee: Sequence[str], keys: Mapping[str, bytes]) -> bool:
    """True iff every committee member, and nobody else, signed ``obj``."""
    if len(signatures) != len(committee):
        return False
    for node, sig in zip(committee, signatures):
        key = keys.get(node)
        if key is None or not verify_record(key, obj, sig):
            return False
    return True


# -- archives and summaries -------------------------------------------------

def build_node_archive(node: str, epoch: int, records: Iterable, prev_archive: Digest, sign_as: SignAs) -> NodeArchive:
    entries = set()
    for rec in records:
        if isinstance(rec, ArchiveEntry):
            entries.add(rec)
            continue
        for name in unsigned_fields(type(rec)):
            if getattr(rec, name) is None:
                raise LedgerError(f"unsigned {type(rec).__name__} cannot be archived")
        entries.add(ArchiveEntry(type(rec).__name__, record_digest(rec)))
    ordered = tuple(sorted(entries, key=lambda e: (bytes(e.digest), e.kind)))
    archive = NodeArchive(node, epoch, prev_archive, ordered)
    archive = replace(archive, archive_digest=record_digest(archive))
    return replace(archive, signature=sign_as(node, archive))


def check_archive(archive: NodeArchive, keys: Mapping[str, bytes]) -> str | None:
    if record_digest(archive) != archive.archive_digest:
        return "archive digest mismatch"
    key = keys.get(archive.node)
    if key is None or not verify_record(key, archive, archive.signature):
        return "archive signature invalid"
    return None


def check_summary(summary: GroupSummary, keys: Mapping[str, bytes]) -> str | None:
    if record_digest(summary) != summary.summary_digest:
        return "summary digest mismatch"
    if not signed_by(summary, summary.core_signatures, summary.report.state.committee, keys):
        return "summary not signed by the group's committee"
    return None


def build_group_summary(
    group: str,
    epoch: int,
    report: AffairReport,
    member_archives: Mapping[str, NodeArchive],
    child_summaries: Mapping[str, GroupSummary],
    keys: Mapping[str, bytes],
    sign_as: SignAs,
) -> GroupSummary:
    state = report.state
    missing = set(state.children) - set(child_summaries)
    if missing:
        raise LedgerError(f"missing child summaries: {sorted(missing)}")
    for node in state.members:
        archive = member_archives.get(node)
        if archive is None:
            raise LedgerError(f"missing archive of member {node}")
        problem = check_archive(archive, keys)
        if problem:
            raise LedgerError(f"member {node}: {problem}")
    for child in state.children:
        problem = check_summary(child_summaries[child], keys)
        if problem:
            raise LedgerError(f"child {child}: {problem}")
    summary = GroupSummary(
        group=group,
        epoch=epoch,
        report=report,
        member_archives={n: member_archives[n].archive_digest for n in state.members},
        child_summaries={c: child_summaries[c].summary_digest for c in state.children},
    )
    summary = replace(summary, summary_digest=record_digest(summary))
    return replace(summary, core_signatures=committee_signatures(sign_as, state.committee, summary))


def affair_violations(summary: GroupSummary) -> list[tuple[str, str]]:
    """Problems a parent can see in a child's report, as (tag, reason) pairs."""
    state = summary.report.state
    found = []
    n = len(state.members)
    if MIN_GROUP_SIZE <= n <= MAX_GROUP_SIZE and len(state.cores) != required_core_count(n):
        found.append(("re-elect", f"{len(state.cores)} core nodes for {n} members; expected {required_core_count(n)}"))
    if not set(state.cores) <= set(state.members):
        found.append(("re-elect", "core nodes outside the member list"))
    for conf in summary.report.transactions:
        if conf.confirmer != summary.group:
            found.append(("revoke-transaction", f"{conf.tx_id} confirmed outside the group's jurisdiction"))
    return found


@dataclass(frozen=True)
class Accepted:
    child: str
    summary_digest: Digest


def report_up(
    child_summary: GroupSummary,
    parent: str,
    parent_committee: Sequence[str],
    keys: Mapping[str, bytes],
    sign_as: SignAs,
    attempt: int = 1,
) -> Accepted | RejectionNotice:
    if child_summary.report.state.parent != parent:
        raise LedgerError(f"{child_summary.group} is not a child of {parent}")
    problem = check_summary(child_summary, keys)
    issues = [("other", problem)] if problem else affair_violations(child_summary)
    if not issues:
        return Accepted(child_summary.group, child_summary.summary_digest)
    notice = RejectionNotice(
        from_group=parent,
        to_group=child_summary.group,
        epoch=child_summary.epoch,
        summary_digest=child_summary.summary_digest,
        reasons="; ".join(reason for _, reason in issues),
        required_rectifications=tuple(sorted({tag for tag, _ in issues})),
        attempt=attempt,
    )
    return replace(notice, signatures=committee_signatures(sign_as, parent_committee, notice))


def rectify(
    group: str,
    notice: RejectionNotice,
    epoch: int,
    handlers: Mapping[str, Callable[[RejectionNotice], str]],
    committee: Sequence[str],
    sign_as: SignAs,
) -> RectificationRecord:
    """Run the handler for each required action and record what was done."""
    if notice.to_group != group:
        raise LedgerError(f"notice is addressed to {notice.to_group}, not {group}")
    unknown = [t for t in notice.required_rectifications if t not in handlers]
    if unknown:
        raise LedgerError(f"no handler for rectification {unknown}")
    details = tuple(handlers[tag](notice) for tag in notice.required_rectifications)
    rec = RectificationRecord(group, record_digest(notice), epoch, notice.required_rectifications, details)
    return replace(rec, signatures=committee_signatures(sign_as, committee, rec))


def core_handover(
    group: str,
    epoch: int,
    old_cores: Sequence[str],
    new_cores: Sequence[str],
    outgoing: Sequence[Digest],
    incoming: Sequence[Digest],
    sign_as: SignAs,
) -> HandoverRecord:
    """Both sides must agree on the archive inventory before custody moves."""
    if list(outgoing) != list(incoming):
        raise LedgerError("handover inventories differ")
    rec = HandoverRecord(group, epoch, tuple(old_cores), tuple(new_cores), tuple(outgoing))
    signers = list(dict.fromkeys([*old_cores, *new_cores]))
    return replace(rec, signatures=committee_signatures(sign_as, signers, rec))


# -- blocks -----------------------------------------------------------------

def assemble_block(
    top_summary: GroupSummary,
    prev_block: CommunityBlock | None,
    backups: Mapping[str, BackupEntry],
    keys: Mapping[str, bytes],
    sign_as: SignAs,
) -> CommunityBlock:
    if not signed_by(top_summary, top_summary.core_signatures, top_summary.report.state.committee, keys):
        raise LedgerError("top summary is not signed by the whole top-level committee")
    if top_summary.report.state.parent is not None:
        raise LedgerError("block summary must come from the top-level group")
    block = CommunityBlock(
        height=0 if prev_block is None else prev_block.height + 1,
        epoch=top_summary.epoch,
        prev_hash=ZERO_DIGEST if prev_block is None else chain_hash(prev_block),
        top_summary=top_summary,
        summary_hash=top_summary.summary_digest,
        backups=dict(backups),
    )
    committee = top_summary.report.state.committee
    return replace(block, top_signatures=committee_signatures(sign_as, committee, block))


def finalize_block(
    block: CommunityBlock,
    now: int,
    window: int,
    outstanding_rejection: bool,
    committee: Sequence[str],
    sign_as: SignAs,
) -> CommunityBlock:
    """Finalize once the window has passed with nothing left to rectify; else unchanged."""
    if block.finalized or outstanding_rejection or now < block.epoch + window:
        return block
    fin = Finality(block.height, now, record_digest(block))
    fin = replace(fin, signatures=committee_signatures(sign_as, committee, fin))
    return replace(block, finality=fin)


def assign_cross_backups(groups: Sequence[str], rng: random.Random, replicas: int = 2) -> dict[str, tuple[str, ...]]:
    ordered = sorted(groups)
    if len(ordered) < 2:
        return {}
    out = {}
    for g in ordered:
        others = [o for o in ordered if o != g]
        out[g] = tuple(sorted(rng.sample(others, min(replicas, len(others)))))
    return out


# -- verification -----------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    height: int | None
    path: str
    reason: str


@dataclass
class ChainData:
    blocks: dict[int, CommunityBlock] = field(default_factory=dict)
    summaries: dict[tuple[int, str], GroupSummary] = field(default_factory=dict)
    archives: dict[tuple[int, str], NodeArchive] = field(default_factory=dict)


def block_path(height: int) -> str:
    return f"chain/{height}.block.json"


def summary_path(epoch: int, group: str) -> str:
    return f"archives/{epoch}/{group}.summary.json"


def archive_path(epoch: int, node: str) -> str:
    return f"archives/{epoch}/{node}.archive.json"


class ChainVerifier:
    """Recomputes every digest and signature of an exported chain.

    Digests are cached per parsed object, so re-verifying a chain where one
    file changed only redoes the work for that file.
    """

    def __init__(self) -> None:
        self._digests: dict[int, tuple[object, Digest]] = {}
        self._chain_hashes: dict[int, tuple[CommunityBlock, Digest]] = {}
        self._parsed: dict[tuple[type, bytes], object] = {}

    def digest(self, obj) -> Digest:
        hit = self._digests.get(id(obj))
        if hit is not None and hit[0] is obj:
            return hit[1]
        d = record_digest(obj)
        self._digests[id(obj)] = (obj, d)
        return d

    def _chain_hash(self, block: CommunityBlock) -> Digest:
        hit = self._chain_hashes.get(id(block))
        if hit is not None and hit[0] is block:
            return hit[1]
        d = chain_hash(block)
        self._chain_hashes[id(block)] = (block, d)
        return d

    def _signed(self, obj, signatures, committee, keys) -> bool:
        if len(signatures) != len(committee):
            return False
        d = bytes(self.digest(obj))
        return all(n in keys and verify(keys[n], d, s) for n, s in zip(committee, signatures))

    # -- file layer

    def parse(self, cls: type, data: bytes):
        key = (cls, data)
        if key not in self._parsed:
            try:
                self._parsed[key] = parse_json(data, cls)
            except (CodecError, ValueError, TypeError, LedgerError) as exc:
                self._parsed[key] = exc
        return self._parsed[key]

    def load_files(self, files: Mapping[str, bytes]) -> tuple[ChainData, Violation | None]:
        data = ChainData()
        for path in sorted(files):
            parts = path.split("/")
            try:
                if len(parts) == 2 and parts[0] == "chain" and parts[1].endswith(".block.json"):
                    height = int(parts[1][: -len(".block.json")])
                    kind, cls = "block", CommunityBlock
                elif len(parts) == 3 and parts[0] == "archives" and parts[2].endswith(".summary.json"):
                    epoch, name = int(parts[1]), parts[2][: -len(".summary.json")]
                    kind, cls = "summary", GroupSummary
                elif len(parts) == 3 and parts[0] == "archives" and parts[2].endswith(".archive.json"):
                    epoch, name = int(parts[1]), parts[2][: -len(".archive.json")]
                    kind, cls = "archive", NodeArchive
                else:
                    return data, Violation(None, path, "unexpected file in chain export")
            except ValueError:
                return data, Violation(None, path, "malformed file name")
            obj = self.parse(cls, files[path])
            if isinstance(obj, Exception):
                return data, Violation(height if kind == "block" else None, path, f"unreadable: {obj}")
            if kind == "block":
                if obj.height != height:
                    return data, Violation(height, path, f"block claims height {obj.height}")
                data.blocks[height] = obj
            elif kind == "summary":
                if (obj.epoch, obj.group) != (epoch, name):
                    return data, Violation(None, path, "summary does not match its path")
                data.summaries[(epoch, name)] = obj
            else:
                if (obj.epoch, obj.node) != (epoch, name):
                    return data, Violation(None, path, "archive does not match its path")
                data.archives[(epoch, name)] = obj
        return data, None

    def verify_files(self, files: Mapping[str, bytes]) -> Violation | None:
        data, problem = self.load_files(files)
        if problem is not None:
            return problem
        return self.verify(data)

    # -- semantic layer

    def verify(self, data: ChainData) -> Violation | None:
        keys: dict[str, bytes] = {}
        last_archive: dict[str, Digest] = {}
        rewarded: dict[str, int] = {}
        notices: dict[Digest, tuple[int, RejectionNotice]] = {}
        rectified: dict[Digest, int] = {}
        seen_summaries: set[tuple[int, str]] = set()
        seen_archives: set[tuple[int, str]] = set()
        committees: list[tuple[int, tuple[str, ...]]] = []
        heights = sorted(data.blocks)
        if heights and heights != list(range(len(heights))):
            return Violation(None, "chain", "block heights are not contiguous from 0")
        prev: CommunityBlock | None = None
        for h in heights:
            block = data.blocks[h]
            path = block_path(h)
            expected_prev = ZERO_DIGEST if prev is None else self._chain_hash(prev)
            if block.prev_hash != expected_prev:
                return Violation(h, path, "prev_hash does not link to the previous block")
            if prev is not None and block.epoch <= prev.epoch:
                return Violation(h, path, "block epochs must increase")
            top = block.top_summary
            if top.epoch != block.epoch or top.report.state.parent is not None:
                return Violation(h, path, "top summary epoch or level mismatch")
            top_digest = self.digest(top)
            if top.summary_digest != top_digest or block.summary_hash != top_digest:
                return Violation(h, path, "summary hash mismatch")
            archived_top = data.summaries.get((block.epoch, top.group))
            if archived_top is None or self.digest(archived_top) != top_digest or archived_top.summary_digest != top_digest:
                return Violation(h, summary_path(block.epoch, top.group), "archived top summary differs from block")
            for adm in top.report.admissions:
                keys[adm.node] = adm.public_key
            committee = top.report.state.committee
            if not self._signed(block, block.top_signatures, committee, keys):
                return Violation(h, path, "block not signed by the top-level committee")
            committees.append((block.epoch, committee))
            # Walk the summary tree of this epoch.
            epoch_summaries: dict[str, GroupSummary] = {}
            stack = [(top.group, None)]
            while stack:
                gid, parent = stack.pop()
                spath = summary_path(block.epoch, gid)
                summary = data.summaries.get((block.epoch, gid))
                if summary is None:
                    return Violation(h, spath, "summary missing")
                if (block.epoch, gid) in seen_summaries:
                    return Violation(h, spath, "summary reached twice")
                seen_summaries.add((block.epoch, gid))
                epoch_summaries[gid] = summary
                state = summary.report.state
                if state.parent != parent:
                    return Violation(h, spath, "summary parent does not match the tree")
                if self.digest(summary) != summary.summary_digest:
                    return Violation(h, spath, "summary digest mismatch")
                if not self._signed(summary, summary.core_signatures, state.committee, keys):
                    return Violation(h, spath, "summary signatures invalid")
                if set(summary.member_archives) != set(state.members):
                    return Violation(h, spath, "member archive hashes do not cover the members")
                if set(summary.child_summaries) != set(state.children):
                    return Violation(h, spath, "child summary hashes do not cover the children")
                for node in sorted(state.members):
                    apath = archive_path(block.epoch, node)
                    archive = data.archives.get((block.epoch, node))
                    if archive is None:
                        return Violation(h, apath, "member archive missing")
                    ad = self.digest(archive)
                    if archive.archive_digest != ad or summary.member_archives[node] != ad:
                        return Violation(h, apath, "archive digest mismatch")
                    if (block.epoch, node) not in seen_archives:
                        seen_archives.add((block.epoch, node))
                        if node not in keys or not self._signed(archive, (archive.signature,) if archive.signature else (), (node,), keys):
                            return Violation(h, apath, "archive signature invalid")
                        if archive.prev_archive != last_archive.get(node, ZERO_DIGEST):
                            return Violation(h, apath, "node archive chain broken")
                        last_archive[node] = ad
                for child in sorted(state.children):
                    child_summary = data.summaries.get((block.epoch, child))
                    if child_summary is None:
                        return Violation(h, summary_path(block.epoch, child), "summary missing")
                    if summary.child_summaries[child] != self.digest(child_summary):
                        return Violation(h, summary_path(block.epoch, child), "child summary hash mismatch")
                    stack.append((child, gid))
                for notice in summary.report.rejections:
                    if notice.from_group != gid or notice.to_group not in state.children:
                        return Violation(h, spath, "rejection notice outside the direct-parent path")
                    if not self._signed(notice, notice.signatures, state.committee, keys):
                        return Violation(h, spath, "rejection notice signatures invalid")
                    notices[self.digest(notice)] = (h, notice)
                for rect in summary.report.rectifications:
                    if rect.group != gid or rect.notice not in notices:
                        return Violation(h, spath, "rectification does not answer a known notice")
                    if not self._signed(rect, rect.signatures, state.committee, keys):
                        return Violation(h, spath, "rectification signatures invalid")
                    rectified.setdefault(rect.notice, rect.epoch)
            for gid, entry in block.backups.items():
                target = epoch_summaries.get(gid)
                if target is None or entry.summary_digest != target.summary_digest:
                    return Violation(h, path, f"backup digest for {gid} does not match its summary")
                if gid in entry.holders or not set(entry.holders) <= set(epoch_summaries):
                    return Violation(h, path, f"invalid backup holders for {gid}")
            # Rewards: the top-level amount is the final one; nothing is minted twice.
            top_amounts = {la.case_id: la.amount for la in top.report.level_amounts}
            for entry in top.report.rewards:
                if entry.case_id in rewarded:
                    return Violation(h, path, f"case {entry.case_id} rewarded twice")
                if top_amounts.get(entry.case_id) != entry.amount:
                    return Violation(h, path, f"reward for {entry.case_id} differs from the top-level amount")
                rewarded[entry.case_id] = h
            for case_id in (*top.report.releases, *top.report.revocations):
                if case_id not in rewarded:
                    return Violation(h, path, f"release or revocation of unknown case {case_id}")
            prev = block
        # Finality: signed by the committee current at that epoch, after rectifications.
        for h in heights:
            block = data.blocks[h]
            fin = block.finality
            if fin is None:
                continue
            path = block_path(h)
            if fin.height != h or fin.block_digest != self.digest(block) or fin.epoch < block.epoch:
                return Violation(h, path, "finality record does not match the block")
            if h > 0 and not data.blocks[h - 1].finalized:
                return Violation(h, path, "finalized ahead of an earlier block")
            current = [c for e, c in committees if e <= fin.epoch]
            if not current or not self._signed(fin, fin.signatures, current[-1], keys):
                return Violation(h, path, "finality signatures invalid")
            for digest, (nh, notice) in notices.items():
                if nh != h:
                    continue
                done = rectified.get(digest)
                if done is None or done >= fin.epoch:
                    return Violation(h, path, "finalized while a rejection was unrectified")
        for key in sorted(set(data.summaries) - seen_summaries):
            return Violation(None, summary_path(*key), "summary not reachable from any block")
        for key in sorted(set(data.archives) - seen_archives):
            return Violation(None, archive_path(*key), "archive not reachable from any block")
        return None


def verify_chain(data: ChainData) -> Violation | None:
    return ChainVerifier().verify(data)


# -- export -----------------------------------------------------------------

def render_chain(data: ChainData) -> dict[str, bytes]:
    files = {}
    for h, block in data.blocks.items():
        files[block_path(h)] = render_json(block)
    for (epoch, gid), summary in data.summaries.items():
        files[summary_path(epoch, gid)] = render_json(summary)
    for (epoch, node), archive in data.archives.items():
        files[archive_path(epoch, node)] = render_json(archive)
    return files


def write_chain(data: ChainData, root: Path) -> None:
    for rel, content in render_chain(data).items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(content)


def read_chain_files(root: Path) -> dict[str, bytes]:
    files = {}
    for sub in ("chain", "archives"):
        base = root / sub
        if not base.exists():
            continue
        for path in base.rglob("*"):
            if path.is_file():
                files[path.relative_to(root).as_posix()] = path.read_bytes()
    return files


def verify_directory(root: Path) -> Violation | None:
    files = read_chain_files(Path(root))
    if not files:
        return Violation(None, str(root), "no chain files found")
    return ChainVerifier().verify_files(files)


def load_chain(root: Path) -> ChainData:
    data, problem = ChainVerifier().load_files(read_chain_files(Path(root)))
    if problem is not None:
        raise LedgerError(f"{problem.path}: {problem.reason}")
    return data
