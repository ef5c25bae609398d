"""Immutable navigation graph with hop-count and metric shortest-path queries.

Adjacency lists are sorted by node id; that ordering is the single tie-break
rule used by every downstream module.
"""
from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class NavGraphError(ValueError):
    pass


class DisconnectedGraph(NavGraphError):
    pass


class DuplicateEdge(NavGraphError):
    pass


class SelfLoop(NavGraphError):
    pass


class BadIdRange(NavGraphError):
    pass


class CoincidentPositions(NavGraphError):
    pass


class InvalidTrajectory(NavGraphError):
    pass


@dataclass(frozen=True)
class NodeRecord:
    id: int
    position: tuple[float, float]
    feature: tuple[float, ...]
    category: int = 0


@dataclass(frozen=True, eq=False)
class NavGraph:
    """Connected undirected graph; build it with :func:`build_graph`.

    Shortest-path queries are memoized per source node. The memo tables are
    write-once caches of pure functions of the graph, so concurrent readers
    only ever observe identical values.
    """

    nodes: tuple[NodeRecord, ...]
    edges: dict  # (u, v) with u < v -> metric length
    adjacency: tuple[tuple[int, ...], ...]
    features: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)
    _hops: dict = field(default_factory=dict, repr=False)
    _dist: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def neighbors(self, u: int) -> tuple[int, ...]:
        return self.adjacency[u]

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self.edges

    def edge_length(self, u: int, v: int) -> float:
        return self.edges[(min(u, v), max(u, v))]

    def feature(self, u: int) -> np.ndarray:
        return self.features[u]

    def category(self, u: int) -> int:
        return self.nodes[u].category

    def __eq__(self, other) -> bool:
        if not isinstance(other, NavGraph):
            return NotImplemented
        return self.nodes == other.nodes and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.nodes, tuple(sorted(self.edges))))


def build_graph(nodes: Sequence[NodeRecord], edges: Iterable[tuple[int, int]]) -> NavGraph:
    """Validate ``nodes``/``edges`` and return a :class:`NavGraph`.

    Edge lengths are the Euclidean distances between endpoint positions.
    """
    nodes = tuple(sorted(nodes, key=lambda r: r.id))
    n = len(nodes)
    if n == 0:
        raise BadIdRange("graph has no nodes")
    if [r.id for r in nodes] != list(range(n)):
        raise BadIdRange("node ids must be exactly 0..n-1")
    dims = {len(r.feature) for r in nodes}
    if len(dims) != 1:
        raise NavGraphError(f"non-uniform feature dimensions {sorted(dims)}")
    norm_nodes = tuple(
        NodeRecord(
            int(r.id),
            (float(r.position[0]), float(r.position[1])),
            tuple(float(x) for x in r.feature),
            int(r.category),
        )
        for r in nodes
    )
    pos = np.array([r.position for r in norm_nodes], dtype=np.float64)

    lengths: dict[tuple[int, int], float] = {}
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        u, v = int(u), int(v)
        if not (0 <= u < n and 0 <= v < n):
            raise BadIdRange(f"edge ({u}, {v}) references a missing node")
        if u == v:
            raise SelfLoop(f"self-loop at node {u}")
        key = (min(u, v), max(u, v))
        if key in lengths:
            raise DuplicateEdge(f"duplicate edge {key}")
        lengths[key] = math.hypot(pos[v, 0] - pos[u, 0], pos[v, 1] - pos[u, 1])
        adj[u].append(v)
        adj[v].append(u)

    seen = {0}
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    if len(seen) != n:
        raise DisconnectedGraph(f"{n - len(seen)} of {n} nodes unreachable from node 0")

    feats = np.array([r.feature for r in norm_nodes], dtype=np.float64).reshape(n, -1)
    feats.setflags(write=False)
    pos.setflags(write=False)
    return NavGraph(
        nodes=norm_nodes,
        edges=dict(sorted(lengths.items())),
        adjacency=tuple(tuple(sorted(a)) for a in adj),
        features=feats,
        positions=pos,
    )


def hop_distances(g: NavGraph, src: int) -> dict[int, int]:
    """Unweighted BFS distances from ``src``."""
    cached = g._hops.get(src)
    if cached is not None:
        return cached
    dist = {src: 0}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    g._hops[src] = dist
    return dist


def _dijkstra(g: NavGraph, src: int) -> tuple[dict[int, float], dict[int, int]]:
    cached = g._dist.get(src)
    if cached is not None:
        return cached
    dist = {src: 0.0}
    pred: dict[int, int] = {}
    done: set[int] = set()
    heap = [(0.0, src)]
    while heap:
        du, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for v in g.adjacency[u]:
            nd = du + g.edge_length(u, v)
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    g._dist[src] = (dist, pred)
    return dist, pred


def metric_distance(g: NavGraph, u: int, v: int) -> float:
    """Length in meters of the metric shortest path between ``u`` and ``v``."""
    if u == v:
        return 0.0
    return _dijkstra(g, u)[0][v]


def metric_path(g: NavGraph, u: int, v: int) -> list[int]:
    """Node sequence of one metric shortest path from ``u`` to ``v``."""
    _, pred = _dijkstra(g, u)
    path = [v]
    while path[-1] != u:
        path.append(pred[path[-1]])
    return path[::-1]


def path_length(g: NavGraph, path: Sequence[int]) -> float:
    return float(sum(g.edge_length(a, b) for a, b in zip(path, path[1:])))


def heading_encoding(g: NavGraph, src: int, dst: int) -> tuple[float, float]:
    """(sin, cos) of the heading of the straight segment ``src -> dst``."""
    dx = g.positions[dst, 0] - g.positions[src, 0]
    dy = g.positions[dst, 1] - g.positions[src, 1]
    r = math.hypot(dx, dy)
    if r == 0.0:
        raise CoincidentPositions(f"nodes {src} and {dst} share a position")
    return float(dy / r), float(dx / r)


def check_trajectory(g: NavGraph, traj: Sequence[int]) -> None:
    """Raise :class:`InvalidTrajectory` unless ``traj`` is a simple walk on ``g``."""
    if len(traj) == 0:
        raise InvalidTrajectory("trajectory is empty")
    if len(set(traj)) != len(traj):
        raise InvalidTrajectory("trajectory revisits a node")
    for u in traj:
        if not 0 <= u < g.n:
            raise InvalidTrajectory(f"unknown node {u}")
    for a, b in zip(traj, traj[1:]):
        if not g.has_edge(a, b):
            raise InvalidTrajectory(f"{a} and {b} are not adjacent")


def unvisited_neighbors(g: NavGraph, traj: Sequence[int]) -> list[int]:
    """Valid candidate actions at the tail of ``traj``."""
    seen = set(traj)
    return [v for v in g.adjacency[traj[-1]] if v not in seen]


def graph_to_dict(g: NavGraph) -> dict:
    return {
        "d": g.d,
        "nodes": [
            {"id": r.id, "pos": list(r.position), "cat": r.category, "feat": list(r.feature)}
            for r in g.nodes
        ],
        "edges": [[u, v] for (u, v) in g.edges],
    }


def graph_from_dict(data: dict) -> NavGraph:
    """Inverse of :func:`graph_to_dict`; assumes the schema was already checked."""
    nodes = [
        NodeRecord(
            int(r["id"]),
            (float(r["pos"][0]), float(r["pos"][1])),
            tuple(float(x) for x in r["feat"]),
            int(r["cat"]),
        )
        for r in data["nodes"]
    ]
    return build_graph(nodes, [tuple(e) for e in data["edges"]])


def line_graph(n: int = 3, d: int = 1) -> NavGraph:
    """Nodes 0..n-1 at (i, 0) joined in a path, with feature i in every dim."""
    nodes = [NodeRecord(i, (float(i), 0.0), (float(i),) * d) for i in range(n)]
    return build_graph(nodes, [(i, i + 1) for i in range(n - 1)])
