"""Shortest-path-constrained rollout policy and its node/step distribution.

A rollout starts at the decision node (``origin``), takes the candidate
action, and then repeatedly moves to a uniformly chosen *feasible* neighbour
until none is left. In the shortest modes a neighbour is feasible when the
extended rollout is still a hop-count shortest path from ``origin``;
``shortest-canonical`` additionally requires the current node to be the
neighbour's canonical BFS parent (its smallest-id neighbour one level closer
to ``origin``), which makes every node reachable from exactly one candidate.
``uniform-random`` only forbids revisiting rollout nodes.

Step convention: the candidate sits at ``t = 0`` and every other node at
``t = hop(origin, node) - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Collection

import numpy as np

from .navgraph import NavGraph, hop_distances

CANONICAL = "shortest-canonical"
SHORTEST_ALL = "shortest-all"
UNIFORM = "uniform-random"
MODES = (CANONICAL, SHORTEST_ALL, UNIFORM)
SHORTEST_MODES = (CANONICAL, SHORTEST_ALL)


class NotANeighbor(ValueError):
    pass


def check_mode(mode: str, allowed=MODES) -> str:
    if mode not in allowed:
        raise ValueError(f"rollout mode {mode!r} not in {allowed}")
    return mode


def canonical_parent(g: NavGraph, origin: int, node: int) -> int | None:
    """Smallest-id neighbour of ``node`` one BFS level closer to ``origin``."""
    hop = hop_distances(g, origin)
    level = hop[node] - 1
    if level < 0:
        return None
    for v in g.adjacency[node]:  # sorted ascending
        if hop[v] == level:
            return v
    raise AssertionError("BFS level structure violated")


def feasible_candidates(
    g: NavGraph,
    origin: int,
    current: int,
    mode: str = CANONICAL,
    visited: Collection[int] | None = None,
) -> list[int]:
    """Neighbours of ``current`` the rollout policy may move to next.

    ``visited`` is only consulted in ``uniform-random`` mode and defaults to
    ``{origin, current}``.
    """
    check_mode(mode)
    if mode == UNIFORM:
        seen = {origin, current} if visited is None else visited
        return [v for v in g.adjacency[current] if v not in seen]
    hop = hop_distances(g, origin)
    level = hop[current] + 1
    out = [v for v in g.adjacency[current] if hop[v] == level]
    if mode == CANONICAL:
        out = [v for v in out if canonical_parent(g, origin, v) == current]
    return out


def children_map(g: NavGraph, origin: int, mode: str) -> list[list[int]]:
    """``feasible_candidates`` for every node at once (shortest modes)."""
    check_mode(mode, SHORTEST_MODES)
    hop = hop_distances(g, origin)
    children: list[list[int]] = [[] for _ in range(g.n)]
    for v in range(g.n):
        if v == origin:
            continue
        if mode == CANONICAL:
            children[canonical_parent(g, origin, v)].append(v)
        else:
            for u in g.adjacency[v]:
                if hop[u] == hop[v] - 1:
                    children[u].append(v)
    for c in children:
        c.sort()
    return children


@dataclass(frozen=True)
class NodeStepDistribution:
    """Exact ``node -> (t, p)`` map for one (origin, candidate) pair.

    ``terminal`` holds, for every node where rollouts stop, the probability
    mass of rollouts ending there; it sums to one.
    """

    origin: int
    candidate: int
    mode: str
    entries: dict = field(default_factory=dict)
    terminal: dict = field(default_factory=dict)

    def support(self) -> set[int]:
        return set(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def node_step_distribution(
    g: NavGraph, origin: int, candidate: int, mode: str = CANONICAL,
    children: list[list[int]] | None = None,
) -> NodeStepDistribution:
    """Reachability probabilities by a layered sweep in ascending ``t``.

    Each node splits its probability evenly among its feasible children; a
    node without children terminates its mass. Pass a precomputed
    ``children_map`` to amortise it across candidates of the same origin.
    """
    check_mode(mode, SHORTEST_MODES)
    if candidate not in g.adjacency[origin]:
        raise NotANeighbor(f"{candidate} is not a neighbour of {origin}")
    if children is None:
        children = children_map(g, origin, mode)
    entries: dict[int, tuple[int, float]] = {}
    terminal: dict[int, float] = {}
    prob = {candidate: 1.0}
    layer = [candidate]
    t = 0
    while layer:
        nxt: list[int] = []
        for m in layer:
            pm = prob[m]
            entries[m] = (t, pm)
            kids = children[m]
            if not kids:
                terminal[m] = pm
                continue
            share = pm / len(kids)
            for c in kids:
                if c not in prob:
                    prob[c] = 0.0
                    nxt.append(c)
                prob[c] += share
        layer = sorted(nxt)
        t += 1
    return NodeStepDistribution(origin, candidate, mode, entries, terminal)


def _draw(rng, k: int) -> int:
    if hasattr(rng, "integers"):
        return int(rng.integers(k))
    return rng.randbelow(k)


def simulate_rollout(g: NavGraph, origin: int, candidate: int, mode: str, rng) -> list[int]:
    """One sampled rollout ``[origin, candidate, ...]``.

    ``rng`` may be a numpy ``Generator`` or a :class:`~qnav.rng.SplitMix64`.
    """
    check_mode(mode)
    if candidate not in g.adjacency[origin]:
        raise NotANeighbor(f"{candidate} is not a neighbour of {origin}")
    seq = [origin, candidate]
    visited = {origin, candidate}
    while True:
        opts = feasible_candidates(g, origin, seq[-1], mode, visited)
        if not opts:
            return seq
        nxt = opts[_draw(rng, len(opts))]
        seq.append(nxt)
        visited.add(nxt)


def sample_rollouts(
    g: NavGraph, origin: int, candidate: int, mode: str, n: int, rng: np.random.Generator
) -> np.ndarray:
    """``n`` independent rollouts as rows of an int array padded with -1.

    Column 0 is ``origin`` and column 1 is ``candidate``. All rollouts advance
    in lock-step, so this is the fast path for Monte-Carlo work.
    """
    check_mode(mode)
    if candidate not in g.adjacency[origin]:
        raise NotANeighbor(f"{candidate} is not a neighbour of {origin}")
    if mode == UNIFORM:
        lists = [list(g.adjacency[v]) for v in range(g.n)]
    else:
        lists = children_map(g, origin, mode)
    width = max(1, max(len(a) for a in lists))
    table = np.full((g.n, width), -1, dtype=np.int64)
    for v, a in enumerate(lists):
        table[v, : len(a)] = a

    rows = np.arange(n)
    cur = np.full(n, candidate, dtype=np.int64)
    cols = [np.full(n, origin, dtype=np.int64), cur.copy()]
    alive = np.ones(n, dtype=bool)
    if mode == UNIFORM:
        visited = np.zeros((n, g.n), dtype=bool)
        visited[:, origin] = True
        visited[:, candidate] = True
    while True:
        opts = table[np.where(alive, cur, 0)]
        valid = (opts >= 0) & alive[:, None]
        if mode == UNIFORM:
            valid &= ~visited[rows[:, None], np.clip(opts, 0, None)]
        k = valid.sum(axis=1)
        alive = k > 0
        if not alive.any():
            break
        pick = np.floor(rng.random(n) * k).astype(np.int64)
        pos = np.argmax(np.cumsum(valid, axis=1) > pick[:, None], axis=1)
        nxt = np.where(alive, opts[rows, pos], -1)
        if mode == UNIFORM:
            visited[rows[alive], nxt[alive]] = True
        cur = np.where(alive, nxt, cur)
        cols.append(nxt)
    return np.stack(cols, axis=1)


def visit_frequencies(
    g: NavGraph, origin: int, candidate: int, mode: str, n: int, rng: np.random.Generator
) -> dict[int, float]:
    """Fraction of ``n`` sampled rollouts that pass through each node (origin excluded)."""
    runs = sample_rollouts(g, origin, candidate, mode, n, rng)[:, 1:]
    counts = np.bincount(runs[runs >= 0], minlength=g.n)
    return {v: counts[v] / n for v in range(g.n) if counts[v]}


@dataclass(frozen=True)
class Violation:
    node: int
    candidates: tuple[int, ...]


def verify_uniqueness(g: NavGraph, origin: int, mode: str = CANONICAL) -> list[Violation]:
    """Nodes that more than one candidate action at ``origin`` can reach."""
    check_mode(mode, SHORTEST_MODES)
    children = children_map(g, origin, mode)
    owners: dict[int, list[int]] = {}
    for cand in g.adjacency[origin]:
        for node in node_step_distribution(g, origin, cand, mode, children).entries:
            owners.setdefault(node, []).append(cand)
    return [Violation(v, tuple(c)) for v, c in sorted(owners.items()) if len(c) > 1]


def export_support_map(
    g: NavGraph, origin: int, mode: str = CANONICAL, gamma: float = 0.5
) -> list[dict]:
    """Per-candidate supports with steps, probabilities and decay weights ``gamma**t``."""
    children = children_map(g, origin, mode)
    out = []
    for cand in g.adjacency[origin]:
        dist = node_step_distribution(g, origin, cand, mode, children)
        nodes = [
            {"id": v, "t": t, "p": p, "w": gamma**t}
            for v, (t, p) in sorted(dist.entries.items(), key=lambda kv: (kv[1][0], kv[0]))
        ]
        out.append({"candidate": cand, "nodes": nodes})
    return out
