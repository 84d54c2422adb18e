"""Builders shared by the org, economy and ledger tests."""

import random

from politeia.org import Hierarchy, NodeIdentity, settle, tenure_ballots

from conftest import key_for


def identity(i: int, join_epoch: int | None = None) -> NodeIdentity:
    nid = f"n{i:03d}"
    return NodeIdentity(nid, key_for(nid).public_key, i if join_epoch is None else join_epoch)


def build(n: int, start: int = 0) -> Hierarchy:
    h = Hierarchy()
    for i in range(start, start + n):
        h.admit_node(identity(i))
        settle(h, tenure_ballots)
    return h


def random_ballots(rng: random.Random):
    def ballots(h: Hierarchy, gid: str) -> dict[str, list[str]]:
        members = list(h.groups[gid].members)
        out = {}
        for m in members:
            rng.shuffle(members)
            out[m] = list(members)
        return out
    return ballots


def brute_lca(h: Hierarchy, a: str, b: str) -> str:
    """Deepest group whose subtree contains both, by exhaustive search."""
    common = [g for g in h.groups if a in h.subtree(g) and b in h.subtree(g)]
    return min(common, key=lambda g: (len(h.subtree(g)), h.groups[g].level))
