import random
from dataclasses import replace
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from politeia.codec import record_digest
from politeia.crypto import Digest
from politeia.deliberation import (
    Decision,
    Deliberation,
    DeliberationError,
    Feedback,
    Kind,
    Outcome,
    Proposal,
    RewardPayload,
    Routing,
    choose_archive_holders,
    quorum,
    tally,
)

from conftest import key_for
from orgutil import build


def sign_as(node, obj):
    from politeia.codec import sign_record
    return sign_record(key_for(node), obj)


def signed(obj, node):
    return replace(obj, signature=sign_as(node, obj))


def setup(n=5):
    h = build(n)
    d = Deliberation(h, sign_as)
    gid = h.home_group("n000")
    return h, d, gid


def open_rule(d, gid, proposer="n000", epoch=0):
    p = signed(d.draft(Kind.RULE, proposer, gid, b"raise threshold", epoch), proposer)
    return d.submit_proposal(p)[-1]


def fb(pid, voter, score, epoch, amount=None):
    return signed(Feedback(pid, voter, score, b"because", epoch, amount), voter)


def test_quorum_is_half_rounded_up():
    assert [quorum(n) for n in (1, 2, 3, 4, 5, 12)] == [1, 1, 2, 2, 3, 6]


def test_deadline_is_inclusive_then_waived():
    h, d, gid = setup()
    p = open_rule(d, gid)
    assert p.deadline_epoch == 2
    assert d.submit_feedback(fb(p.id, "n001", 7, 2)) == "recorded"
    assert d.submit_feedback(fb(p.id, "n002", 7, 3)) == "waived"
    with pytest.raises(DeliberationError):
        d.submit_feedback(fb(p.id, "n001", 8, 2))
    with pytest.raises(DeliberationError):
        d.submit_feedback(fb(p.id, "n003", 11, 1))
    with pytest.raises(DeliberationError):
        d.submit_feedback(replace(fb(p.id, "n003", 5, 1), score=6))


def test_tally_waits_for_deadline_unless_everyone_answered():
    h, d, gid = setup(3)
    p = open_rule(d, gid)
    d.submit_feedback(fb(p.id, "n000", 6, 0))
    with pytest.raises(DeliberationError):
        d.tally(p.id, 1)
    d.submit_feedback(fb(p.id, "n001", 6, 0))
    d.recuse(p.id, "n002")
    out = d.tally(p.id, 1)
    assert out.decision is Decision.ADOPT and out.mean_score == 6
    assert set(out.voters) | set(out.waived) == set(h.groups[gid].members)


def test_examples():
    h, d, gid = setup()
    p = open_rule(d, gid)
    members = h.groups[gid].members
    three = [fb(p.id, m, 6, 1) for m in members[:3]]
    out = tally(p, three, members, "n000")
    assert out.mean_score == Fraction(6) and out.decision is Decision.ADOPT
    lone = tally(p, [fb(p.id, members[0], 10, 1)], members, "n000")
    assert not lone.quorum_met and lone.decision is Decision.REJECT
    none = tally(p, [], members, "n000")
    assert none.decision is Decision.REJECT and none.mean_score is None and not none.quorum_met


@given(st.lists(st.integers(0, 10), min_size=0, max_size=5), st.randoms())
def test_tally_is_order_free_and_partitions_members(scores, rnd):
    members = [f"n{i:03d}" for i in range(5)]
    p = Proposal("p1", Kind.RULE, "n000", "g", b"", 0, 2)
    fbs = [Feedback("p1", members[i], s, b"", 1) for i, s in enumerate(scores)]
    a = tally(p, fbs, members, "n000")
    shuffled = list(fbs)
    rnd.shuffle(shuffled)
    assert tally(p, shuffled, members, "n000") == a
    assert set(a.voters) | set(a.waived) == set(members)
    assert not set(a.voters) & set(a.waived)
    if scores:
        assert a.mean_score == Fraction(sum(scores), len(scores))


def test_escalate_from_top_is_coerced():
    h, d, gid = setup()
    p = open_rule(d, gid)
    for m in h.groups[gid].members:
        d.submit_feedback(fb(p.id, m, 8, 1))
    out = d.tally(p.id, 1)
    routed, opened = d.route(out, Routing.ESCALATE, 1)
    assert routed.routing is Routing.FINALIZE and opened == []
    routed, opened = d.route(out, Routing.DELEGATE, 1)
    assert routed.routing is Routing.FINALIZE and opened == []


def test_escalated_payload_is_identical_and_delegate_mirrors():
    h = build(26)
    d = Deliberation(h, sign_as)
    top = h.top().id
    leaf = h.home_group("n000")
    payload = RewardPayload("c1", "n000", Digest(bytes(32)), "physics", 300)
    p = signed(d.draft(Kind.REWARD, "n000", leaf, payload, 3), "n000")
    d.submit_proposal(p)
    out = d.tally(p.id, 6)
    routed, opened = d.route(out, Routing.ESCALATE, 6)
    assert routed.routing is Routing.ESCALATE
    (up,) = opened
    assert up.group == top and up.payload == p.payload and up.origin == p.id
    assert up.deadline_epoch == 6 + d.config.deadline
    top_out = d.tally(up.id, 9)
    routed, mirrors = d.route(top_out, Routing.DELEGATE, 9)
    assert len(mirrors) == 2
    assert {m.group for m in mirrors} == h.groups[top].children
    assert all(m.payload == p.payload for m in mirrors)
    child = d.tally(mirrors[0].id, 12)
    merged = d.attach_advisory(child)
    assert merged.advisory[0].group == mirrors[0].group
    assert merged.mean_score == top_out.mean_score


def test_proposal_from_outsider_or_bad_signature_rejected():
    h, d, gid = setup()
    p = d.draft(Kind.RULE, "n000", gid, b"x", 0)
    with pytest.raises(DeliberationError):
        d.submit_proposal(p)
    with pytest.raises(DeliberationError):
        d.submit_proposal(signed(replace(p, proposer="n404"), "n000"))


def test_chat_holders():
    h, d, gid = setup(5)
    chat = d.record_chat("n000", "n001", b"hi", 0, random.Random(3))
    assert len(chat.archive_holders) == 5
    again = d.record_chat("n000", "n001", b"hi", 0, random.Random(3))
    assert again.archive_holders == chat.archive_holders
    assert choose_archive_holders("a", "b", ["a", "b"], 3, random.Random(0)) == ("a", "b")


def test_chat_with_revoked_node_fails():
    h, d, gid = setup(5)
    h.remove_node("n004")
    with pytest.raises(DeliberationError):
        d.record_chat("n000", "n004", b"hi", 0, random.Random(0))


def test_outcome_digest_is_deterministic():
    p = Proposal("p1", Kind.RULE, "n000", "g", b"", 0, 2)
    fbs = [Feedback("p1", "n000", 7, b"", 1)]
    a: Outcome = tally(p, fbs, ["n000", "n001"], "n000")
    assert record_digest(a) == record_digest(tally(p, fbs, ["n001", "n000"], "n000"))
