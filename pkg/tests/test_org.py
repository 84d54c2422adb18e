import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from politeia.org import (
    MAX_GROUP_SIZE,
    AuthorizationError,
    CapacityError,
    ElectionError,
    Group,
    Hierarchy,
    JurisdictionError,
    OrgError,
    SplitRequired,
    required_core_count,
    settle,
    tenure_ballots,
)

from orgutil import brute_lca, build, identity, random_ballots


def table(size: int) -> int:
    # Written out independently of the implementation.
    if size < 3:
        return 0
    if size <= 10:
        return 1
    if size <= 18:
        return 2
    return 3


@pytest.mark.parametrize("size", range(0, 31))
def test_core_count_table(size):
    if size > 25:
        with pytest.raises(SplitRequired):
            required_core_count(size)
    else:
        assert required_core_count(size) == table(size)


def test_core_count_rejects_negative_and_is_monotone():
    with pytest.raises(ValueError):
        required_core_count(-1)
    counts = [required_core_count(s) for s in range(3, 26)]
    assert counts == sorted(counts)


def test_admission_places_in_smallest_leaf():
    h = build(5)
    assert len(h.groups) == 1
    (g,) = h.groups.values()
    assert g.level == 1 and g.size == 5 and g.core_nodes == ["n000"]
    assert not h.check_invariants()


def test_merge_pulls_small_group_into_sibling():
    h = Hierarchy()
    top = h._new_group(2, None)
    a = h._new_group(1, top.id)
    b = h._new_group(1, top.id)
    for i in range(2):
        h.register(identity(i))
        h._add_member(a.id, f"n{i:03d}")
    for i in range(2, 12):
        h.register(identity(i))
        h._add_member(b.id, f"n{i:03d}")
    settle(h, tenure_ballots)
    leaves = [g for g in h.groups.values() if g.level == 1]
    assert [g.size for g in leaves] == [12]
    assert len(leaves[0].core_nodes) == 2
    assert not h.check_invariants()


def test_split_halves_in_priority_order():
    h = build(25)
    h.admit_node(identity(25))
    before = list(h.groups[h.home_group("n000")].members)
    settle(h, tenure_ballots)
    leaves = sorted((g for g in h.groups.values() if g.level == 1), key=lambda g: g.id)
    assert sorted(g.size for g in leaves) == [13, 13]
    assert [m for g in leaves for m in g.members if m in before[:13]] == before[:13]
    assert all(len(g.core_nodes) == 2 for g in leaves)
    assert h.top().level == 2
    assert not h.check_invariants()


def test_thirty_arrivals_at_once_give_bounded_groups():
    h = Hierarchy()
    for i in range(30):
        h.admit_node(identity(i))
    settle(h, tenure_ballots)
    assert all(3 <= g.size <= 25 for g in h.groups.values())
    assert not h.check_invariants()


def test_unanimous_ballots_elect_first_choice():
    h = build(3)
    gid = h.top().id
    ranking = ["n002", "n000", "n001"]
    result = h.run_election(gid, {m: ranking for m in h.groups[gid].members})
    assert result.winners == ("n002",)


def test_twelve_members_elect_two():
    h = build(12)
    gid = h.home_group("n000")
    result = h.run_election(gid, tenure_ballots(h, gid))
    assert len(result.winners) == 2


def test_borda_tie_goes_to_reputation_then_tenure_then_id():
    h = build(4)
    gid = h.top().id
    ballots = {"n000": ["n001", "n002", "n003", "n000"], "n001": ["n002", "n001", "n000", "n003"]}
    # n001 and n002 tie on Borda points (3+2 each).
    scores = {m: 0 for m in h.groups[gid].members}
    for r in ballots.values():
        for pos, c in enumerate(r):
            scores[c] += 3 - pos
    assert scores["n001"] == scores["n002"]

    def oracle(composites):
        return min(scores, key=lambda m: (-scores[m], -composites.get(m, 5), h.nodes[m].join_epoch, m))

    for comps in ({"n002": 8}, {"n001": 8}, {}):
        assert h.run_election(gid, ballots, comps).winners == (oracle(comps),)


def test_election_errors():
    h = build(4)
    gid = h.top().id
    with pytest.raises(ElectionError):
        h.run_election(gid, {"ghost": ["n000"]})
    with pytest.raises(ElectionError):
        h.run_election(gid, {"n000": ["n001", "n001"]})
    small = build(2)
    with pytest.raises(ElectionError):
        small.run_election(small.top().id, {})


def test_rejected_confirmation_keeps_old_cores():
    h = build(4)
    gid = h.top().id
    before = list(h.groups[gid].core_nodes)
    result = h.run_election(gid, {m: ["n003", "n002", "n001", "n000"] for m in h.groups[gid].members})
    h.confirm_election(result, approve=False)
    assert h.groups[gid].core_nodes == before and h.groups[gid].needs_election


def test_core_departure_promotes_successor():
    h = build(12)
    gid = h.home_group("n000")
    g = h.groups[gid]
    core, successor = g.core_nodes[0], [m for m in g.members if m not in g.core_nodes][0]
    h.remove_node(core)
    assert core not in g.members
    assert successor in g.core_nodes
    assert len(g.core_nodes) == required_core_count(g.size)


def two_level() -> Hierarchy:
    h = build(26)
    assert h.top().level == 2
    return h


def test_promotion_chain_detaches_level_one():
    h = build(260)
    assert h.top().level == 3
    assert not h.check_invariants()
    for n in h.nodes.values():
        for gid in n.memberships:
            low = h.groups[gid]
            if n.id in low.core_nodes and low.parent:
                mid = h.groups[low.parent]
                assert not (n.id in mid.core_nodes and mid.parent and n.id in h.groups[mid.parent].members)


def test_promotion_chain_manual():
    h = Hierarchy()
    l3 = h._new_group(3, None)
    l2 = h._new_group(2, l3.id)
    l1 = h._new_group(1, l2.id)
    for i in range(5):
        h.register(identity(i))
        h._add_member(l1.id, f"n{i:03d}")
    for gid in (l2.id, l3.id):
        h._add_member(gid, "n000")
    l1.core_nodes = ["n000"]
    l2.core_nodes = ["n000"]
    l1.members = ["n000", "n003", "n001", "n002", "n004"]
    events = h.apply_promotion_chain("n000")
    assert [e.kind for e in events][0] == "detach"
    assert "n000" not in l1.members
    assert l1.core_nodes == ["n003"]
    # Level-1 core only: nothing to do.
    assert h.apply_promotion_chain("n003") == []


def test_transfer_between_siblings_and_errors():
    h = two_level()
    top = h.top().id
    a, b = sorted(h.groups[top].children)
    mover = next(m for m in h.groups[a].members if m not in h.groups[a].core_nodes)
    sa, sb = h.groups[a].size, h.groups[b].size
    h.transfer_node(top, mover, a, b)
    assert (h.groups[a].size, h.groups[b].size) == (sa - 1, sb + 1)
    assert h.groups[b].members[-1] == mover
    with pytest.raises(JurisdictionError):
        h.transfer_node(a, mover, b, a)
    while h.groups[b].size < MAX_GROUP_SIZE:
        i = len(h.nodes)
        h.register(identity(i))
        h._add_member(b, f"n{i:03d}")
    other = next(m for m in h.groups[a].members if m not in h.groups[a].core_nodes)
    with pytest.raises(CapacityError):
        h.transfer_node(top, other, a, b)
    with pytest.raises(OrgError):
        h.transfer_node(top, "n999", a, b)


def test_sorting_priority():
    h = build(6)
    gid = h.top().id
    g = h.groups[gid]
    cores = list(g.core_nodes)
    same = list(g.members)
    h.set_sorting_priority(gid, same, cores)
    assert g.members == same
    h.set_sorting_priority(gid, list(reversed(same)), cores)
    assert g.members == list(reversed(same))
    outsider = next(m for m in g.members if m not in cores)
    with pytest.raises(AuthorizationError):
        h.set_sorting_priority(gid, same, [outsider])
    with pytest.raises(OrgError):
        h.set_sorting_priority(gid, same[:-1], cores)


def test_snapshot_json_is_stable():
    h = build(14)
    assert h.snapshot_json() == h.snapshot_json()
    assert h.snapshot()["top"] == h.top().id


def fuzz(seed: int, ops: int, target: int = 400) -> Hierarchy:
    """Random admit/depart/transfer/election ops; population hovers near ``target``."""
    rng = random.Random(seed)
    ballots = random_ballots(rng)
    h = Hierarchy()
    nxt = 0
    for _ in range(ops):
        active = h.active_nodes()
        r = rng.random()
        grow = 0.6 if len(active) < target else 0.25
        if r < grow * 0.7 or len(active) < 4:
            h.admit_node(identity(nxt))
            nxt += 1
        elif r < 0.7:
            h.remove_node(rng.choice(active))
        elif r < 0.85:
            parents = [g for g in h.groups.values() if len(g.children) >= 2]
            if parents:
                p = rng.choice(parents)
                a, b = rng.sample(sorted(p.children), 2)
                if h.groups[a].members:
                    try:
                        h.transfer_node(p.id, rng.choice(h.groups[a].members), a, b)
                    except OrgError:
                        pass
        else:
            for gid in h.groups_needing_election():
                result = h.run_election(gid, ballots(h, gid))
                h.confirm_election(result)
                break
        h.rebalance()
        errs = h.check_invariants(require_elected=False)
        assert not errs, errs
    settle(h, ballots)
    return h


def test_fuzz_keeps_invariants():
    h = fuzz(7, 1500)
    assert not h.check_invariants()
    assert all(3 <= g.size <= 25 for g in h.groups.values() if len(h.groups) > 1)


@given(st.integers(0, 10_000))
def test_lca_matches_brute_force(seed):
    rng = random.Random(seed)
    h = build(rng.randint(3, 80))
    gids = sorted(h.groups)
    for _ in range(10):
        a, b = rng.choice(gids), rng.choice(gids)
        assert h.lca(a, b) == brute_lca(h, a, b)


def test_level_equals_max_membership_level():
    h = build(70)
    for n in h.nodes.values():
        assert h.level_of(n.id) == max(h.groups[g].level for g in n.memberships)


def test_group_flags():
    g = Group("g", 1, members=["a", "b"])
    assert g.pending_merge and g.flagged and not g.pending_split
