"""Seeded synthetic worlds and graph-file persistence.

Two generators are provided. ``grid-rooms`` lays nodes on a jittered grid cut
into rectangular rooms joined by a few doorway edges; ``random-geometric``
scatters points in a square and links pairs closer than a radius. A third,
``random-tree``, keeps only the Euclidean minimum spanning tree of a
geometric point set, for benchmarks where shortest paths must be unique.
"""
from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, fields

from .jsonio import dumps, atomic_write_text, read_json
from .navgraph import (
    DisconnectedGraph,
    NavGraph,
    NavGraphError,
    NodeRecord,
    build_graph,
    graph_from_dict,
    graph_to_dict,
)
from .rng import SplitMix64, derive_seed

KINDS = ("grid-rooms", "random-geometric", "random-tree")


class UnsatisfiableConfig(ValueError):
    pass


class ConnectivityRetriesExhausted(RuntimeError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class WorldConfig:
    kind: str = "grid-rooms"
    n_nodes: int = 30  # geometric/tree kinds; grid size comes from the room layout
    feature_dim: int = 16
    n_categories: int = 9
    noise_sigma: float = 0.1
    # random-geometric / random-tree
    connect_radius: float = 3.0
    extent: float = 10.0
    max_retries: int = 50
    # grid-rooms
    room_rows: int = 3
    room_cols: int = 3
    room_size: int = 3
    spacing: float = 1.0
    jitter: float = 0.1
    door_fraction: float = 0.34
    category_layout: str = "ordered"  # or "random"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown world kind {self.kind!r}; expected one of {KINDS}")
        if self.category_layout not in ("ordered", "random"):
            raise ValueError(f"unknown category layout {self.category_layout!r}")
        sizes = [self.n_nodes, self.feature_dim, self.n_categories, self.room_rows,
                 self.room_cols, self.room_size]
        if min(sizes) <= 0:
            raise ValueError("all sizes must be positive")
        if self.n_categories > self.feature_dim:
            raise ValueError("n_categories must not exceed feature_dim")
        if self.noise_sigma < 0 or self.connect_radius < 0 or not 0 <= self.door_fraction <= 1:
            raise ValueError("noise_sigma, connect_radius must be >= 0; door_fraction in [0, 1]")

    def replace(self, **changes) -> "WorldConfig":
        return WorldConfig(**{**asdict(self), **changes})

    @classmethod
    def from_dict(cls, data: dict) -> "WorldConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown WorldConfig keys: {sorted(unknown)}")
        return cls(**data)


def _node_feature(rng: SplitMix64, cat: int, cfg: WorldConfig) -> tuple[float, ...]:
    feat = [0.0] * cfg.feature_dim
    feat[cat] = 1.0
    if cfg.noise_sigma > 0:
        feat = [x + cfg.noise_sigma * rng.normal() for x in feat]
    return tuple(feat)


def gen_grid_rooms(cfg: WorldConfig) -> NavGraph:
    """Jittered grid partitioned into ``room_rows x room_cols`` square rooms.

    Inside a room every pair of grid neighbours is linked. Between two
    adjacent rooms, ``door_fraction`` of the boundary pairs (at least one)
    become doorway edges, which keeps the world connected.
    """
    if cfg.kind != "grid-rooms":
        raise ValueError("gen_grid_rooms needs kind='grid-rooms'")
    n_rooms = cfg.room_rows * cfg.room_cols
    if cfg.door_fraction == 0 and n_rooms > 1:
        raise UnsatisfiableConfig("door_fraction=0 leaves the rooms disconnected")

    rng_pos = SplitMix64(derive_seed(cfg.seed, "grid", "positions"))
    rng_cat = SplitMix64(derive_seed(cfg.seed, "grid", "categories"))
    rng_feat = SplitMix64(derive_seed(cfg.seed, "grid", "features"))
    rng_door = SplitMix64(derive_seed(cfg.seed, "grid", "doors"))

    if cfg.category_layout == "ordered":
        # consecutive categories along rows: the layout is shared across worlds
        # up to a per-world offset, which gives the Q-model something to learn
        offset = rng_cat.randbelow(cfg.n_categories)
        room_cat = [(offset + r) % cfg.n_categories for r in range(n_rooms)]
    else:
        room_cat = [rng_cat.randbelow(cfg.n_categories) for _ in range(n_rooms)]

    rows = cfg.room_rows * cfg.room_size
    cols = cfg.room_cols * cfg.room_size

    def node_id(r, c):
        return r * cols + c

    def room_of(r, c):
        return (r // cfg.room_size) * cfg.room_cols + c // cfg.room_size

    nodes = []
    for r in range(rows):
        for c in range(cols):
            x = c * cfg.spacing + rng_pos.uniform(-cfg.jitter, cfg.jitter)
            y = r * cfg.spacing + rng_pos.uniform(-cfg.jitter, cfg.jitter)
            cat = room_cat[room_of(r, c)]
            nodes.append(NodeRecord(node_id(r, c), (x, y), _node_feature(rng_feat, cat, cfg), cat))

    edges = []
    boundary: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for r in range(rows):
        for c in range(cols):
            for r2, c2 in ((r, c + 1), (r + 1, c)):
                if r2 >= rows or c2 >= cols:
                    continue
                a, b = room_of(r, c), room_of(r2, c2)
                pair = (node_id(r, c), node_id(r2, c2))
                if a == b:
                    edges.append(pair)
                else:
                    boundary.setdefault((min(a, b), max(a, b)), []).append(pair)
    for key in sorted(boundary):
        cands = boundary[key]
        k = max(1, round(cfg.door_fraction * len(cands)))
        edges.extend(sorted(rng_door.sample(cands, k)))
    return build_graph(nodes, edges)


def _scatter(cfg: WorldConfig, attempt: int):
    rng = SplitMix64(derive_seed(cfg.seed, cfg.kind, "attempt", attempt))
    pts = [(rng.uniform(0, cfg.extent), rng.uniform(0, cfg.extent)) for _ in range(cfg.n_nodes)]
    return pts, rng


def _categorize_and_build(cfg: WorldConfig, pts, rng: SplitMix64, edges) -> NavGraph:
    anchors = [(rng.uniform(0, cfg.extent), rng.uniform(0, cfg.extent))
               for _ in range(cfg.n_categories)]
    nodes = []
    for i, (x, y) in enumerate(pts):
        cat = min(range(cfg.n_categories),
                  key=lambda k: ((x - anchors[k][0]) ** 2 + (y - anchors[k][1]) ** 2, k))
        nodes.append(NodeRecord(i, (x, y), _node_feature(rng, cat, cfg), cat))
    return build_graph(nodes, edges)


def gen_random_geometric(cfg: WorldConfig) -> NavGraph:
    """Uniform points in ``[0, extent]^2``, edges between pairs within ``connect_radius``.

    Disconnected draws are discarded and redrawn from a derived seed, up to
    ``max_retries`` times.
    """
    if cfg.kind != "random-geometric":
        raise ValueError("gen_random_geometric needs kind='random-geometric'")
    r2 = cfg.connect_radius ** 2
    for attempt in range(cfg.max_retries):
        pts, rng = _scatter(cfg, attempt)
        edges = [
            (i, j)
            for i in range(len(pts))
            for j in range(i + 1, len(pts))
            if 0 < (pts[i][0] - pts[j][0]) ** 2 + (pts[i][1] - pts[j][1]) ** 2 <= r2
        ]
        try:
            return _categorize_and_build(cfg, pts, rng, edges)
        except DisconnectedGraph:
            continue
    raise ConnectivityRetriesExhausted(
        f"no connected graph after {cfg.max_retries} draws (radius {cfg.connect_radius})"
    )


def gen_random_tree(cfg: WorldConfig) -> NavGraph:
    """Euclidean minimum spanning tree of uniformly scattered points (Prim)."""
    if cfg.kind != "random-tree":
        raise ValueError("gen_random_tree needs kind='random-tree'")
    pts, rng = _scatter(cfg, 0)
    n = len(pts)
    best = {j: (math.dist(pts[0], pts[j]), 0) for j in range(1, n)}
    edges = []
    while best:
        j = min(best, key=lambda k: (best[k][0], k))
        _, parent = best.pop(j)
        edges.append((parent, j))
        for k in best:
            dk = math.dist(pts[j], pts[k])
            if dk < best[k][0]:
                best[k] = (dk, j)
    return _categorize_and_build(cfg, pts, rng, edges)


def generate(cfg: WorldConfig) -> NavGraph:
    return {
        "grid-rooms": gen_grid_rooms,
        "random-geometric": gen_random_geometric,
        "random-tree": gen_random_tree,
    }[cfg.kind](cfg)


def graph_bytes(g: NavGraph) -> bytes:
    return (dumps(graph_to_dict(g)) + "\n").encode("utf-8")


def save_graph(g: NavGraph, path: str | os.PathLike) -> None:
    atomic_write_text(path, graph_bytes(g).decode("utf-8"))


def _check_schema(data) -> None:
    if not isinstance(data, dict):
        raise SchemaError("graph file must hold a JSON object")
    for key in ("d", "nodes", "edges"):
        if key not in data:
            raise SchemaError(f"missing key {key!r}")
    d = data["d"]
    if not isinstance(d, int) or d <= 0:
        raise SchemaError("'d' must be a positive integer")
    if not isinstance(data["nodes"], list) or not isinstance(data["edges"], list):
        raise SchemaError("'nodes' and 'edges' must be arrays")
    for rec in data["nodes"]:
        if not isinstance(rec, dict) or not {"id", "pos", "cat", "feat"} <= set(rec):
            raise SchemaError(f"malformed node record {rec!r}")
        if len(rec["pos"]) != 2 or len(rec["feat"]) != d:
            raise SchemaError(f"node {rec.get('id')} has wrong pos/feat length")
    for e in data["edges"]:
        if not isinstance(e, list) or len(e) != 2 or not all(isinstance(x, int) for x in e):
            raise SchemaError(f"malformed edge {e!r}")
        if e[0] >= e[1]:
            raise SchemaError(f"edge {e!r} must be listed as [u, v] with u < v")


def load_graph(path: str | os.PathLike) -> NavGraph:
    """Read a graph file, rejecting schema or graph-invariant violations."""
    data = read_json(path)
    _check_schema(data)
    try:
        return graph_from_dict(data)
    except NavGraphError as exc:
        raise SchemaError(str(exc)) from exc
