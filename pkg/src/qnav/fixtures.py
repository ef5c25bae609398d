"""Small hand-built graphs shared by the invariant battery and the tests."""
from __future__ import annotations

import numpy as np

from .agent import EpisodeResult
from .navgraph import NavGraph, NodeRecord, build_graph, line_graph
from .worldgen import WorldConfig, generate


def _graph(positions, edges, d: int = 3, seed: int = 0) -> NavGraph:
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(len(positions), d))
    nodes = [NodeRecord(i, tuple(map(float, p)), tuple(feats[i])) for i, p in enumerate(positions)]
    return build_graph(nodes, edges)


def star(k: int = 4, d: int = 3) -> NavGraph:
    """Hub 0 with ``k`` leaves on the unit circle."""
    pos = [(0.0, 0.0)] + [(np.cos(2 * np.pi * i / k), np.sin(2 * np.pi * i / k)) for i in range(k)]
    return _graph(pos, [(0, i) for i in range(1, k + 1)], d)


def cycle4(d: int = 3) -> NavGraph:
    """Unit square 0-1-2-3-0."""
    return _graph([(0, 0), (1, 0), (1, 1), (0, 1)], [(0, 1), (1, 2), (2, 3), (3, 0)], d)


def diamond(d: int = 3) -> NavGraph:
    """Origin 0, candidates 1 and 2, both one hop from node 3."""
    return _graph([(0, 0), (1, 1), (1, -1), (2, 0)], [(0, 1), (0, 2), (1, 3), (2, 3)], d)


def fixture_graphs() -> dict[str, NavGraph]:
    return {"line": line_graph(5, 3), "star": star(), "cycle4": cycle4(), "diamond": diamond()}


def small_world(n: int, seed: int, kind: str = "random-geometric") -> NavGraph:
    """Seeded connected world of ``n`` nodes, dense enough to connect quickly."""
    return generate(WorldConfig(kind=kind, n_nodes=n, extent=1.5 * n**0.5, feature_dim=4,
                                n_categories=4, seed=seed))


def spl_fixtures() -> list[tuple[NavGraph, EpisodeResult, float]]:
    """Episodes on the 3-node line whose SPL contributions are 1.0, 0.5 and 0.0."""
    g = line_graph(3)

    def ep(path, radius=0):
        return EpisodeResult(0, path[0], 2, radius, "fixture", path, path[1:], "stop-rule", [0, 1, 2])

    return [
        (g, ep([0, 1, 2]), 1.0),
        (g, ep([0, 1, 0, 1, 2]), 0.5),
        (g, ep([0, 1]), 0.0),
    ]
