import random
from dataclasses import replace

import pytest

from politeia.codec import canonical_encode, record_digest, render_json
from politeia.crypto import ZERO_DIGEST, Digest, hash_bytes
from politeia.deliberation import Feedback
from politeia.ledger import (
    Accepted,
    Admission,
    AffairReport,
    ArchiveEntry,
    BackupEntry,
    ChainData,
    ChainVerifier,
    GroupState,
    LedgerError,
    RejectionNotice,
    assemble_block,
    assign_cross_backups,
    build_group_summary,
    build_node_archive,
    chain_hash,
    check_archive,
    core_handover,
    finalize_block,
    rectify,
    render_chain,
    report_up,
    verify_chain,
)

from conftest import Signer

NODES = ("n000", "n001", "n002")


def feedback(signer, voter, score):
    fb = Feedback("p1", voter, score, b"", 0)
    return replace(fb, signature=signer(voter, fb))


class Chain:
    """A single-group community whose chain is built by hand."""

    def __init__(self, signer: Signer) -> None:
        self.s = signer
        for n in NODES:
            signer.key(n)
        self.data = ChainData()
        self.prev_archive = {n: ZERO_DIGEST for n in NODES}
        self.prev_block = None

    def epoch(self, e: int, finalize: bool = True):
        archives = {}
        for n in NODES:
            a = build_node_archive(n, e, [feedback(self.s, n, e % 11)], self.prev_archive[n], self.s)
            archives[n] = a
            self.prev_archive[n] = a.archive_digest
            self.data.archives[(e, n)] = a
        state = GroupState(1, None, (), NODES, ("n000",))
        admissions = tuple(Admission(n, self.s.pub(n), 0) for n in NODES) if e == 0 else ()
        report = AffairReport(state, admissions=admissions)
        summary = build_group_summary("g1", e, report, archives, {}, self.s.registry(), self.s)
        self.data.summaries[(e, "g1")] = summary
        block = assemble_block(summary, self.prev_block, {}, self.s.registry(), self.s)
        if finalize:
            block = finalize_block(block, e + 1, 1, False, ("n000",), self.s)
        self.data.blocks[block.height] = block
        self.prev_block = block
        return block


def test_archive_is_deterministic_and_sorted(signer):
    recs = [feedback(signer, "n001", 3), feedback(signer, "n002", 4)]
    a = build_node_archive("n000", 0, recs, ZERO_DIGEST, signer)
    b = build_node_archive("n000", 0, list(reversed(recs)) + recs[:1], ZERO_DIGEST, signer)
    assert a == b and len(a.entries) == 2
    assert check_archive(a, signer.registry()) is None
    mutated = replace(a, entries=a.entries[:1])
    assert check_archive(mutated, signer.registry()) == "archive digest mismatch"
    with pytest.raises(LedgerError):
        build_node_archive("n000", 0, [Feedback("p", "n001", 1, b"", 0)], ZERO_DIGEST, signer)


def test_archive_chains_to_previous(signer):
    first = build_node_archive("n000", 0, [], ZERO_DIGEST, signer)
    second = build_node_archive("n000", 1, [], first.archive_digest, signer)
    assert second.prev_archive == first.archive_digest
    assert second.archive_digest != build_node_archive("n000", 1, [], ZERO_DIGEST, signer).archive_digest


def test_summary_requires_all_members_and_children(signer):
    archives = {n: build_node_archive(n, 0, [], ZERO_DIGEST, signer) for n in NODES}
    state = GroupState(1, None, (), NODES, ("n000",))
    with pytest.raises(LedgerError):
        build_group_summary("g", 0, AffairReport(state), {"n000": archives["n000"]}, {}, signer.registry(), signer)
    parent_state = GroupState(2, None, ("c",), NODES, ("n000",))
    with pytest.raises(LedgerError):
        build_group_summary("g", 0, AffairReport(parent_state), archives, {}, signer.registry(), signer)
    one = build_group_summary("g", 0, AffairReport(state), archives, {}, signer.registry(), signer)
    two = build_group_summary("g", 0, AffairReport(state), dict(reversed(archives.items())), {}, signer.registry(), signer)
    assert one.summary_digest == two.summary_digest


def child_summary(signer, members, cores):
    archives = {n: build_node_archive(n, 0, [], ZERO_DIGEST, signer) for n in members}
    state = GroupState(1, "top", (), tuple(members), tuple(cores))
    return build_group_summary("c", 0, AffairReport(state), archives, {}, signer.registry(), signer)


def test_report_up_accepts_and_rejects(signer):
    members = [f"m{i:02d}" for i in range(12)]
    for m in members + ["p0"]:
        signer.key(m)
    good = child_summary(signer, members, members[:2])
    assert report_up(good, "top", ["p0"], signer.registry(), signer) == Accepted("c", good.summary_digest)
    bad = child_summary(signer, members, members[:1])
    notice = report_up(bad, "top", ["p0"], signer.registry(), signer)
    assert isinstance(notice, RejectionNotice)
    assert notice.reasons and notice.required_rectifications == ("re-elect",)
    with pytest.raises(LedgerError):
        report_up(good, "elsewhere", ["p0"], signer.registry(), signer)
    forged = replace(good, core_signatures=())
    assert report_up(forged, "top", ["p0"], signer.registry(), signer).required_rectifications == ("other",)


def test_notice_needs_reasons_and_known_tags():
    with pytest.raises(LedgerError):
        RejectionNotice("p", "c", 0, ZERO_DIGEST, "  ", ("re-elect",))
    with pytest.raises(LedgerError):
        RejectionNotice("p", "c", 0, ZERO_DIGEST, "why", ("repaint",))
    with pytest.raises(LedgerError):
        RejectionNotice("p", "c", 0, ZERO_DIGEST, "why", ())


def test_rectify(signer):
    notice = RejectionNotice("p", "c", 0, ZERO_DIGEST, "why", ("re-elect",))
    rec = rectify("c", notice, 1, {"re-elect": lambda n: "held election"}, ["n000"], signer)
    assert rec.notice == record_digest(notice) and rec.details == ("held election",)
    with pytest.raises(LedgerError):
        rectify("c", notice, 1, {}, ["n000"], signer)
    with pytest.raises(LedgerError):
        rectify("other", notice, 1, {"re-elect": str}, ["n000"], signer)


def test_genesis_linkage_and_finality(signer):
    c = Chain(signer)
    b0 = c.epoch(0)
    b1 = c.epoch(1)
    assert b0.height == 0 and b0.prev_hash == ZERO_DIGEST
    assert b1.prev_hash == chain_hash(b0) == hash_bytes(canonical_encode(b0.top_summary))
    assert verify_chain(c.data) is None


def test_unsigned_top_summary_rejected(signer):
    c = Chain(signer)
    b0 = c.epoch(0)
    with pytest.raises(LedgerError):
        assemble_block(replace(b0.top_summary, core_signatures=()), None, {}, signer.registry(), signer)


def test_finality_waits_and_is_idempotent(signer):
    c = Chain(signer)
    block = c.epoch(0, finalize=False)
    assert finalize_block(block, 0, 1, False, ("n000",), signer) is block
    assert finalize_block(block, 5, 1, True, ("n000",), signer) is block
    done = finalize_block(block, 1, 1, False, ("n000",), signer)
    assert done.finalized and done.finalize_epoch == 1
    assert finalize_block(done, 9, 1, False, ("n000",), signer) is done
    assert record_digest(done) == record_digest(block)


def test_backups_three_groups():
    out = assign_cross_backups(["a", "b", "c"], random.Random(0), 2)
    assert out == {"a": ("b", "c"), "b": ("a", "c"), "c": ("a", "b")}
    big = [f"g{i}" for i in range(9)]
    one = assign_cross_backups(big, random.Random(4))
    assert one == assign_cross_backups(big, random.Random(4))
    assert all(g not in holders and len(holders) == 2 for g, holders in one.items())
    assert assign_cross_backups(["solo"], random.Random(0)) == {}


def test_swapped_blocks_fail_linkage_at_lower_height(signer):
    c = Chain(signer)
    for e in range(4):
        c.epoch(e)
    c.data.blocks[1], c.data.blocks[2] = c.data.blocks[2], c.data.blocks[1]
    v = verify_chain(c.data)
    assert v.height == 1 and "prev_hash" in v.reason


def test_backup_entries_must_match(signer):
    c = Chain(signer)
    b0 = c.epoch(0)
    bad = replace(b0, backups={"g1": BackupEntry(("g9",), Digest(bytes(32)))})
    c.data.blocks[0] = bad
    assert verify_chain(c.data) is not None


def test_every_byte_flip_in_one_archive_is_caught(signer):
    c = Chain(signer)
    for e in range(2):
        c.epoch(e)
    files = render_chain(c.data)
    verifier = ChainVerifier()
    assert verifier.verify_files(files) is None
    target = "archives/1/n001.archive.json"
    original = files[target]
    rng = random.Random(5)
    for i in rng.sample(range(len(original)), 60):
        mutated = bytearray(original)
        mutated[i] = (mutated[i] + rng.randint(1, 255)) % 256
        assert verifier.verify_files({**files, target: bytes(mutated)}) is not None


def test_orphan_and_extra_files_flagged(signer):
    c = Chain(signer)
    c.epoch(0)
    files = render_chain(c.data)
    extra = dict(files)
    extra["archives/7/n000.archive.json"] = files["archives/0/n000.archive.json"]
    assert ChainVerifier().verify_files(extra) is not None
    extra = {**files, "notes.txt": b"hi"}
    assert ChainVerifier().verify_files(extra).reason == "unexpected file in chain export"


def test_handover(signer):
    inv = [Digest(bytes([i]) * 32) for i in range(3)]
    rec = core_handover("g", 2, ["a"], ["b"], inv, inv, signer)
    assert len(rec.signatures) == 2 and rec.inventory == tuple(inv)
    with pytest.raises(LedgerError):
        core_handover("g", 2, ["a"], ["b"], inv, inv[:2], signer)
    empty = core_handover("g", 0, [], ["b"], [], [], signer)
    assert empty.inventory == ()


def test_archive_entry_digest_is_record_digest(signer):
    fb = feedback(signer, "n001", 3)
    a = build_node_archive("n001", 0, [fb], ZERO_DIGEST, signer)
    assert a.entries == (ArchiveEntry("Feedback", record_digest(fb)),)
    assert render_json(a) == render_json(build_node_archive("n001", 0, [fb], ZERO_DIGEST, signer))
