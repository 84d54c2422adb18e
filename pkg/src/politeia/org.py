"""Leveled group hierarchy: admission, merge/split, elections, succession.

Groups form a tree. Level-1 groups are the leaves, every parent sits exactly
one level above its children, and the single parentless group is the
top-level group. A group's core nodes sit in its parent group as members.

Membership in a group above a node's lowest level is only held while the node
is a core of one of that group's children; losing that core status means
resigning from the upper group (and, transitively, from anything above it
that depended on it).
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Sequence

MAX_LEVEL = 10
MIN_GROUP_SIZE = 3
MAX_GROUP_SIZE = 25
MAX_SAME_LEVEL = 2


class OrgError(Exception):
    pass


class CapacityError(OrgError):
    pass


class JurisdictionError(OrgError):
    pass


class AuthorizationError(OrgError):
    pass


class ElectionError(OrgError):
    pass


class SplitRequired(OrgError):
    """A group above the size limit has to split before it can elect."""


def required_core_count(size: int) -> int:
    if size < 0:
        raise ValueError("group size cannot be negative")
    if size > MAX_GROUP_SIZE:
        raise SplitRequired(f"group of {size} exceeds {MAX_GROUP_SIZE}; split first")
    if size < MIN_GROUP_SIZE:
        return 0
    if size <= 10:
        return 1
    if size <= 18:
        return 2
    return 3


class Status(str, enum.Enum):
    ACTIVE = "active"
    RESTRICTED = "restricted"
    REVOKED = "revoked"


@dataclass
class NodeIdentity:
    id: str
    public_key: bytes
    join_epoch: int
    memberships: set[str] = field(default_factory=set)
    status: Status = Status.ACTIVE
    restricted_until: int | None = None

    @property
    def active(self) -> bool:
        return self.status is not Status.REVOKED and bool(self.memberships)


@dataclass
class Group:
    id: str
    level: int
    members: list[str] = field(default_factory=list)
    core_nodes: list[str] = field(default_factory=list)
    parent: str | None = None
    children: set[str] = field(default_factory=set)
    needs_election: bool = True

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def pending_merge(self) -> bool:
        return self.size < MIN_GROUP_SIZE

    @property
    def pending_split(self) -> bool:
        return self.size > MAX_GROUP_SIZE

    @property
    def flagged(self) -> bool:
        return self.pending_merge or self.pending_split


@dataclass(frozen=True)
class OrgEvent:
    kind: str
    group: str
    nodes: tuple[str, ...] = ()
    other: str | None = None


@dataclass(frozen=True)
class ElectionResult:
    group: str
    winners: tuple[str, ...]
    scores: tuple[tuple[str, int], ...]
    member_count: int


class Hierarchy:
    def __init__(self) -> None:
        self.groups: dict[str, Group] = {}
        self.nodes: dict[str, NodeIdentity] = {}
        self.epoch = 0
        self._group_seq = 0

    # -- queries -------------------------------------------------------------

    def top(self) -> Group | None:
        roots = [g for g in self.groups.values() if g.parent is None]
        if not roots:
            return None
        return min(roots, key=lambda g: (-g.level, g.id))

    def level_of(self, node_id: str) -> int:
        levels = [self.groups[g].level for g in self.nodes[node_id].memberships]
        return max(levels, default=0)

    def home_group(self, node_id: str) -> str | None:
        """Lowest-level membership (ties by id): where a node is reported from."""
        gids = self.nodes[node_id].memberships
        if not gids:
            return None
        return min(gids, key=lambda g: (self.groups[g].level, g))

    def ancestors(self, gid: str) -> list[str]:
        """``gid`` followed by its parent chain up to the top-level group."""
        chain = [gid]
        parent = self.groups[gid].parent
        while parent is not None:
            chain.append(parent)
            parent = self.groups[parent].parent
        return chain

    def subtree(self, gid: str) -> set[str]:
        out, stack = set(), [gid]
        while stack:
            g = stack.pop()
            out.add(g)
            stack.extend(self.groups[g].children)
        return out

    def subtree_nodes(self, gid: str) -> set[str]:
        return {n for g in self.subtree(gid) for n in self.groups[g].members}

    def lca(self, a: str, b: str) -> str:
        above_a = self.ancestors(a)
        seen = set(above_a)
        for g in self.ancestors(b):
            if g in seen:
                return g
        raise OrgError(f"groups {a} and {b} share no ancestor")

    def active_nodes(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.active)

    def co_members(self, a: str, b: str) -> bool:
        return bool(self.nodes[a].memberships & self.nodes[b].memberships)

    def groups_needing_election(self) -> list[str]:
        """In-range groups whose core set is stale, bottom-up."""
        pending = []
        for g in sorted(self.groups.values(), key=lambda g: (g.level, g.id)):
            if g.flagged:
                continue
            if g.needs_election or len(g.core_nodes) != required_core_count(g.size):
                pending.append(g.id)
        return pending

    def tenure_host(self, gid: str) -> str:
        g = self.groups[gid]
        if not g.members:
            raise OrgError(f"group {gid} is empty")
        return min(g.members, key=lambda n: (self.nodes[n].join_epoch, n))

    def host(self, gid: str) -> str:
        """Highest-priority core, or the longest-tenure member when there is none."""
        g = self.groups[gid]
        return g.core_nodes[0] if g.core_nodes else self.tenure_host(gid)

    # -- internal mutation helpers ------------------------------------------

    def _new_group(self, level: int, parent: str | None) -> Group:
        if not 1 <= level <= MAX_LEVEL:
            raise OrgError(f"level {level} outside 1..{MAX_LEVEL}")
        self._group_seq += 1
        g = Group(id=f"g{self._group_seq:04d}", level=level, parent=parent)
        self.groups[g.id] = g
        if parent is not None:
            self.groups[parent].children.add(g.id)
        return g

    def _same_level_count(self, node_id: str, level: int) -> int:
        return sum(1 for gid in self.nodes[node_id].memberships if self.groups[gid].level == level)

    def _can_join(self, node_id: str, gid: str) -> bool:
        g = self.groups[gid]
        if node_id in g.members:
            return True
        return self._same_level_count(node_id, g.level) < MAX_SAME_LEVEL

    def _add_member(self, gid: str, node_id: str) -> None:
        g = self.groups[gid]
        if node_id in g.members:
            return
        if not self._can_join(node_id, gid):
            raise CapacityError(f"{node_id} already holds {MAX_SAME_LEVEL} level-{g.level} memberships")
        g.members.append(node_id)
        self.nodes[node_id].memberships.add(gid)

    def _order_cores(self, g: Group) -> None:
        rank = {n: i for i, n in enumerate(g.members)}
        g.core_nodes.sort(key=rank.__getitem__)

    def _fill_vacancies(self, gid: str, events: list[OrgEvent]) -> None:
        """Promote the next members in sorting order into empty core seats."""
        g = self.groups[gid]
        if g.flagged:
            return
        need = required_core_count(g.size)
        if len(g.core_nodes) > need:
            g.needs_election = True
            return
        parent = g.parent
        for candidate in g.members:
            if len(g.core_nodes) >= need:
                break
            if candidate in g.core_nodes:
                continue
            if self.nodes[candidate].status is not Status.ACTIVE:
                continue
            if parent is not None and not self._can_join(candidate, parent):
                continue
            g.core_nodes.append(candidate)
            self._order_cores(g)
            if parent is not None:
                self._add_member(parent, candidate)
            events.append(OrgEvent("succession", gid, (candidate,)))

    def _remove_member(self, gid: str, node_id: str, events: list[OrgEvent]) -> None:
        g = self.groups[gid]
        if node_id not in g.members:
            return
        g.members.remove(node_id)
        self.nodes[node_id].memberships.discard(gid)
        if node_id in g.core_nodes:
            g.core_nodes.remove(node_id)
            self._fill_vacancies(gid, events)
            self._prune(node_id, events)
        elif not g.flagged and len(g.core_nodes) != required_core_count(g.size):
            g.needs_election = True

    def _justified(self, node_id: str, gid: str) -> bool:
        g = self.groups[gid]
        lowest = min(self.groups[m].level for m in self.nodes[node_id].memberships)
        if g.level == lowest:
            return True
        return any(node_id in self.groups[c].core_nodes for c in g.children)

    def _prune(self, node_id: str, events: list[OrgEvent]) -> None:
        """Resign a node from upper groups it no longer has a basis to sit in."""
        changed = True
        while changed:
            changed = False
            for gid in sorted(self.nodes[node_id].memberships, key=lambda x: (self.groups[x].level, x)):
                if not self._justified(node_id, gid):
                    events.append(OrgEvent("resign", gid, (node_id,)))
                    self._remove_member(gid, node_id, events)
                    changed = True
                    break

    def _clear_cores(self, gid: str, events: list[OrgEvent]) -> None:
        g = self.groups[gid]
        old, g.core_nodes = g.core_nodes, []
        g.needs_election = True
        for n in old:
            self._prune(n, events)

    def _delete_group(self, gid: str) -> None:
        g = self.groups.pop(gid)
        if g.parent is not None and g.parent in self.groups:
            self.groups[g.parent].children.discard(gid)

    # -- admission and departure --------------------------------------------

    def register(self, identity: NodeIdentity) -> None:
        if identity.id in self.nodes:
            raise OrgError(f"duplicate node id {identity.id}")
        identity.memberships = set()
        self.nodes[identity.id] = identity

    def admit_node(self, identity: NodeIdentity) -> str:
        """Place a new node in the smallest level-1 group with room."""
        self.register(identity)
        open_groups = [g for g in self.groups.values() if g.level == 1 and g.size < MAX_GROUP_SIZE]
        if open_groups:
            target = min(open_groups, key=lambda g: (g.size, g.id))
        else:
            target = self._new_group(1, self._parent_for_new_leaf())
            self._ensure_single_root([])
        self._add_member(target.id, identity.id)
        if not target.flagged and len(target.core_nodes) != required_core_count(target.size):
            target.needs_election = True
        return target.id

    def _parent_for_new_leaf(self) -> str | None:
        level2 = [g for g in self.groups.values() if g.level == 2]
        if not level2:
            return None
        return min(level2, key=lambda g: (len(g.children), g.id)).id

    def remove_node(self, node_id: str) -> list[OrgEvent]:
        """Departure: drop every membership; vacated core seats pass down the order."""
        events: list[OrgEvent] = []
        node = self.nodes[node_id]
        for gid in sorted(node.memberships, key=lambda x: (-self.groups[x].level, x)):
            if gid in node.memberships:
                self._remove_member(gid, node_id, events)
        node.status = Status.REVOKED
        events.append(OrgEvent("departure", "", (node_id,)))
        return events

    # -- size control --------------------------------------------------------

    def rebalance(self, max_rounds: int = 10_000) -> list[OrgEvent]:
        """Merge undersized and split oversized groups until nothing changes."""
        events: list[OrgEvent] = []
        for _ in range(max_rounds):
            if self._rebalance_step(events):
                continue
            if not self._enforce_promotions(events):
                break
        else:  # pragma: no cover - defensive
            raise OrgError("rebalance did not reach a fixpoint")
        return events

    def _rebalance_step(self, events: list[OrgEvent]) -> bool:
        for g in sorted(self.groups.values(), key=lambda g: (g.level, g.id)):
            if g.pending_split:
                self._split(g.id, events)
                return True
            if g.pending_merge and g.parent is not None:
                if g.size == 0 and not g.children:
                    self._delete_group(g.id)
                    events.append(OrgEvent("dissolve", g.id))
                    return True
                target = self._merge_target(g)
                if target is not None:
                    self._merge(g.id, target, events)
                    return True
        return self._ensure_single_root(events) or self._collapse_root(events)

    def _merge_target(self, g: Group) -> str | None:
        siblings = [
            self.groups[s]
            for s in self.groups[g.parent].children
            if s != g.id and self.groups[s].level == g.level
        ]
        if not siblings:
            return None
        fitting = [s for s in siblings if len(set(s.members) | set(g.members)) <= MAX_GROUP_SIZE]
        # An overfull merge still resolves: the split step halves it next.
        pool = fitting or siblings
        return min(pool, key=lambda s: (s.size, s.id)).id

    def _merge(self, src: str, dst: str, events: list[OrgEvent]) -> None:
        s, d = self.groups[src], self.groups[dst]
        moved = list(s.members)
        for child in sorted(s.children):
            self.groups[child].parent = dst
            d.children.add(child)
        s.children = set()
        old_cores = list(s.core_nodes)
        s.core_nodes = []
        for n in moved:
            s.members.remove(n)
            self.nodes[n].memberships.discard(src)
            if n not in d.members:
                d.members.append(n)
                self.nodes[n].memberships.add(dst)
        self._delete_group(src)
        events.append(OrgEvent("merge", dst, tuple(moved), other=src))
        self._clear_cores(dst, events)
        for n in old_cores:
            if self.nodes[n].memberships:
                self._prune(n, events)

    def _split(self, gid: str, events: list[OrgEvent]) -> None:
        g = self.groups[gid]
        n = g.size
        keep = (n + 1) // 2
        first, second = g.members[:keep], g.members[keep:]
        new = self._new_group(g.level, g.parent)
        if g.children:
            # Child cores stay with the half their child goes to.
            anchor: dict[str, list[str]] = {}
            for c in sorted(g.children):
                for core in self.groups[c].core_nodes:
                    anchor.setdefault(core, []).append(c)
            child_side = {}
            for c in sorted(g.children):
                cores = self.groups[c].core_nodes
                child_side[c] = 0 if not cores or cores[0] in first else 1
            if len(set(child_side.values())) == 1 and len(child_side) > 1:
                last = max(child_side)
                child_side[last] = 1 - child_side[last]
            halves: tuple[list[str], list[str]] = ([], [])
            for m in g.members:
                sides = {child_side[c] for c in anchor.get(m, [])}
                if not sides:
                    sides = {0 if m in first else 1}
                for side in sorted(sides):
                    halves[side].append(m)
            first, second = halves
            for c, side in child_side.items():
                if side == 1:
                    g.children.discard(c)
                    new.children.add(c)
                    self.groups[c].parent = new.id
        old_cores = list(g.core_nodes)
        g.core_nodes = []
        for m in second:
            if m not in first:
                g.members.remove(m)
                self.nodes[m].memberships.discard(gid)
            new.members.append(m)
            self.nodes[m].memberships.add(new.id)
        g.members = [m for m in g.members if m in first]
        g.needs_election = True
        events.append(OrgEvent("split", gid, tuple(second), other=new.id))
        for m in old_cores:
            self._prune(m, events)
        self._ensure_single_root(events)

    def _ensure_single_root(self, events: list[OrgEvent]) -> bool:
        roots = sorted(
            (g for g in self.groups.values() if g.parent is None), key=lambda g: (g.level, g.id)
        )
        if len(roots) <= 1:
            return False
        level = max(g.level for g in roots)
        low = [g for g in roots if g.level < level]
        if low:
            # Stray lower roots hang under a group one level up (created when missing).
            g = low[0]
            hosts = sorted(
                (h for h in self.groups.values() if h.level == g.level + 1), key=lambda h: (len(h.children), h.id)
            )
            parent = hosts[0] if hosts else self._new_group(g.level + 1, None)
            g.parent = parent.id
            parent.children.add(g.id)
            events.append(OrgEvent("attach", parent.id, (), other=g.id))
            return True
        if level >= MAX_LEVEL:
            raise OrgError("hierarchy cannot grow beyond level 10")
        top = self._new_group(level + 1, None)
        for g in roots:
            g.parent = top.id
            top.children.add(g.id)
            for core in g.core_nodes:
                self._add_member(top.id, core)
        events.append(OrgEvent("new-top", top.id, tuple(top.members)))
        return True

    def _collapse_root(self, events: list[OrgEvent]) -> bool:
        top = self.top()
        if top is None or len(top.children) != 1:
            return False
        (child_id,) = top.children
        child = self.groups[child_id]
        stranded = [m for m in top.members if m not in child.members]
        for m in list(top.members):
            top.members.remove(m)
            self.nodes[m].memberships.discard(top.id)
        top.core_nodes = []
        top.children = set()
        child.parent = None
        self._delete_group(top.id)
        for m in stranded:
            if self._can_join(m, child_id):
                self._add_member(child_id, m)
        for m in stranded:
            if not self.nodes[m].memberships:
                # No room at the lower level; keep the node rather than drop it.
                child.members.append(m)
                self.nodes[m].memberships.add(child_id)
        events.append(OrgEvent("collapse", child_id, tuple(stranded), other=top.id))
        if not child.flagged and len(child.core_nodes) != required_core_count(child.size):
            child.needs_election = True
        return True

    # -- elections -----------------------------------------------------------

    def run_election(
        self,
        gid: str,
        ballots: Mapping[str, Sequence[str]],
        composites: Mapping[str, Fraction | float] | None = None,
    ) -> ElectionResult:
        """Borda count over ranked ballots.

        Ties go to the higher reputation composite, then the earlier joiner,
        then the lower id.
        """
        g = self.groups[gid]
        k = required_core_count(g.size)
        if k == 0:
            raise ElectionError(f"group {gid} has {g.size} members; pending merge")
        members = set(g.members)
        n = len(g.members)
        scores = {m: 0 for m in g.members}
        for voter, ranking in ballots.items():
            if voter not in members:
                raise ElectionError(f"voter {voter} is not a member of {gid}")
            if len(set(ranking)) != len(ranking):
                raise ElectionError(f"ballot from {voter} repeats a candidate")
            for pos, cand in enumerate(ranking):
                if cand not in members:
                    raise ElectionError(f"candidate {cand} is not a member of {gid}")
                scores[cand] += n - 1 - pos
        composites = composites or {}

        def key(m: str) -> tuple:
            return (-scores[m], -Fraction(composites.get(m, 5)), self.nodes[m].join_epoch, m)

        order = sorted(g.members, key=key)
        eligible = [
            m for m in order
            if self.nodes[m].status is Status.ACTIVE and (g.parent is None or self._can_join(m, g.parent))
        ]
        if len(eligible) < k:
            eligible += [m for m in order if m not in eligible]
        return ElectionResult(
            group=gid,
            winners=tuple(eligible[:k]),
            scores=tuple((m, scores[m]) for m in order),
            member_count=n,
        )

    def confirm_election(self, result: ElectionResult, approve: bool = True) -> list[OrgEvent]:
        """Apply an election once the parent group confirms it (all or nothing)."""
        g = self.groups[result.group]
        if not approve:
            g.needs_election = True
            return [OrgEvent("election-rejected", g.id, result.winners)]
        if set(result.winners) - set(g.members):
            raise ElectionError("winner is no longer a member")
        if len(result.winners) != required_core_count(g.size):
            raise ElectionError("winner count does not match the group size")
        events: list[OrgEvent] = []
        old = list(g.core_nodes)
        g.core_nodes = list(result.winners)
        self._order_cores(g)
        g.needs_election = False
        if g.parent is not None:
            for w in g.core_nodes:
                self._add_member(g.parent, w)
            parent = self.groups[g.parent]
            if not parent.flagged and len(parent.core_nodes) != required_core_count(parent.size):
                parent.needs_election = True
        events.append(OrgEvent("election", g.id, tuple(g.core_nodes)))
        for n in old:
            if n not in g.core_nodes and n in self.nodes and self.nodes[n].memberships:
                self._prune(n, events)
        self._enforce_promotions(events)
        return events

    def _enforce_promotions(self, events: list[OrgEvent]) -> bool:
        before = len(events)
        for mid in sorted(self.groups.values(), key=lambda g: (g.level, g.id)):
            if mid.parent is None or not mid.children or mid.id not in self.groups:
                continue
            upper = self.groups[mid.parent].members
            for node_id in [n for n in mid.core_nodes if n in upper]:
                if any(node_id in self.groups[c].core_nodes for c in mid.children):
                    events.extend(self.apply_promotion_chain(node_id))
        return len(events) > before

    def apply_promotion_chain(self, node_id: str) -> list[OrgEvent]:
        """Detach a node from level i once it is a level-(i+1) core sitting at level i+2."""
        events: list[OrgEvent] = []
        node = self.nodes[node_id]
        for gid in sorted(node.memberships, key=lambda x: (self.groups[x].level, x)):
            if gid not in node.memberships:
                continue
            low = self.groups[gid]
            if node_id not in low.core_nodes or low.parent is None:
                continue
            mid = self.groups[low.parent]
            if node_id not in mid.core_nodes or mid.parent is None:
                continue
            if node_id not in self.groups[mid.parent].members:
                continue
            low.core_nodes.remove(node_id)
            low.members.remove(node_id)
            node.memberships.discard(gid)
            events.append(OrgEvent("detach", gid, (node_id,), other=mid.id))
            self._fill_vacancies(gid, events)
            if not low.flagged and len(low.core_nodes) != required_core_count(low.size):
                low.needs_election = True
        return events

    def resign_unjustified(self, node_id: str) -> list[OrgEvent]:
        """Drop upper-level seats the node no longer holds as a child core."""
        events: list[OrgEvent] = []
        if self.nodes[node_id].memberships:
            self._prune(node_id, events)
        return events

    # -- directed changes ----------------------------------------------------

    def transfer_node(self, parent_gid: str, node_id: str, from_gid: str, to_gid: str) -> list[OrgEvent]:
        """An upper group moves a node between two same-level groups it governs."""
        parent = self.groups[parent_gid]
        src, dst = self.groups[from_gid], self.groups[to_gid]
        under = self.subtree(parent_gid) - {parent_gid}
        if from_gid not in under or to_gid not in under:
            raise JurisdictionError(f"{parent_gid} does not govern both {from_gid} and {to_gid}")
        if src.level != dst.level or src.level >= parent.level:
            raise JurisdictionError("transfers are between same-level subordinate groups")
        if node_id not in src.members:
            raise OrgError(f"{node_id} is not in {from_gid}")
        if node_id in dst.members:
            raise OrgError(f"{node_id} is already in {to_gid}")
        if any(node_id in self.groups[c].core_nodes for c in src.children):
            raise OrgError(f"{node_id} sits in {from_gid} as a child core and cannot be moved")
        if dst.size >= MAX_GROUP_SIZE:
            raise CapacityError(f"{to_gid} is full")
        events: list[OrgEvent] = []
        self._remove_member(from_gid, node_id, events)
        self._add_member(to_gid, node_id)
        if not dst.flagged and len(dst.core_nodes) != required_core_count(dst.size):
            dst.needs_election = True
        self._prune(node_id, events)
        events.append(OrgEvent("transfer", to_gid, (node_id,), other=from_gid))
        return events

    def set_sorting_priority(self, gid: str, order: Sequence[str], callers: Iterable[str]) -> Group:
        g = self.groups[gid]
        if not g.core_nodes or set(callers) != set(g.core_nodes):
            raise AuthorizationError("only the group's core nodes may set sorting priority")
        if sorted(order) != sorted(g.members) or len(set(order)) != len(order):
            raise OrgError("order must be a permutation of the members")
        g.members = list(order)
        self._order_cores(g)
        return g

    # -- checks and export ---------------------------------------------------

    def check_invariants(self, require_elected: bool = True) -> list[str]:
        errors: list[str] = []
        roots = [g for g in self.groups.values() if g.parent is None]
        if self.groups and len(roots) != 1:
            errors.append(f"expected one top-level group, found {len(roots)}")
        for g in self.groups.values():
            if not 1 <= g.level <= MAX_LEVEL:
                errors.append(f"{g.id}: level {g.level}")
            if len(set(g.members)) != len(g.members):
                errors.append(f"{g.id}: duplicate members")
            if not set(g.core_nodes) <= set(g.members):
                errors.append(f"{g.id}: core outside members")
            if g.parent is not None:
                p = self.groups.get(g.parent)
                if p is None or g.id not in p.children:
                    errors.append(f"{g.id}: broken parent link")
                elif p.level != g.level + 1:
                    errors.append(f"{g.id}: parent level {p.level} != {g.level + 1}")
                elif not set(g.core_nodes) <= set(p.members):
                    errors.append(f"{g.id}: core not seated in parent {p.id}")
            for c in g.children:
                if c not in self.groups or self.groups[c].parent != g.id:
                    errors.append(f"{g.id}: broken child link {c}")
            if not g.flagged and require_elected and len(g.core_nodes) != required_core_count(g.size):
                errors.append(f"{g.id}: {len(g.core_nodes)} cores for {g.size} members")
            for m in g.members:
                if g.id not in self.nodes[m].memberships:
                    errors.append(f"{g.id}: member {m} lacks the membership")
        # Tree: every group reaches the root without cycles.
        for gid in self.groups:
            seen, cur = set(), gid
            while cur is not None and cur not in seen:
                seen.add(cur)
                cur = self.groups[cur].parent if cur in self.groups else None
            if cur is not None:
                errors.append(f"{gid}: cycle in parent links")
        for n in self.nodes.values():
            if not n.memberships:
                continue
            for gid in n.memberships:
                if gid not in self.groups or n.id not in self.groups[gid].members:
                    errors.append(f"{n.id}: dangling membership {gid}")
            per_level: dict[int, int] = {}
            for gid in n.memberships:
                if gid in self.groups:
                    lvl = self.groups[gid].level
                    per_level[lvl] = per_level.get(lvl, 0) + 1
            if any(c > MAX_SAME_LEVEL for c in per_level.values()):
                errors.append(f"{n.id}: more than {MAX_SAME_LEVEL} memberships at one level")
            # A level-i core who is a level-(i+1) core seated at level i+2 must be detached.
            for gid in n.memberships:
                low = self.groups.get(gid)
                if low is None or n.id not in low.core_nodes or low.parent is None:
                    continue
                mid = self.groups[low.parent]
                if n.id in mid.core_nodes and mid.parent is not None and n.id in self.groups[mid.parent].members:
                    errors.append(f"{n.id}: promotion chain not detached from {gid}")
        return errors

    def snapshot(self) -> dict:
        return {
            "epoch": self.epoch,
            "top": self.top().id if self.top() else None,
            "groups": [
                {
                    "id": g.id,
                    "level": g.level,
                    "parent": g.parent,
                    "children": sorted(g.children),
                    "members": list(g.members),
                    "cores": list(g.core_nodes),
                }
                for g in sorted(self.groups.values(), key=lambda g: (g.level, g.id))
            ],
        }

    def snapshot_json(self) -> str:
        return json.dumps(self.snapshot(), indent=2, sort_keys=True)


def settle(
    h: Hierarchy,
    ballots_for: Callable[[Hierarchy, str], Mapping[str, Sequence[str]]],
    composites: Mapping[str, Fraction | float] | None = None,
    max_rounds: int = 200,
) -> list[OrgEvent]:
    """Rebalance and hold elections until sizes and core counts are stable."""
    events: list[OrgEvent] = []
    for _ in range(max_rounds):
        events.extend(h.rebalance())
        pending = h.groups_needing_election()
        if not pending:
            return events
        gid = pending[0]
        result = h.run_election(gid, ballots_for(h, gid), composites)
        events.extend(h.confirm_election(result))
    raise OrgError("hierarchy did not settle")


def tenure_ballots(h: Hierarchy, gid: str) -> dict[str, list[str]]:
    """Every member ranks the group by tenure; a neutral default electorate."""
    g = h.groups[gid]
    ranking = sorted(g.members, key=lambda n: (h.nodes[n].join_epoch, n))
    return {m: ranking for m in g.members}
