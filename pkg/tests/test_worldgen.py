import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qnav.navgraph import NodeRecord, build_graph, hop_distances
from qnav.worldgen import (
    ConnectivityRetriesExhausted,
    SchemaError,
    UnsatisfiableConfig,
    WorldConfig,
    generate,
    graph_bytes,
    load_graph,
    save_graph,
)


def test_small_grid_rooms():
    cfg = WorldConfig(room_rows=2, room_cols=2, room_size=2, seed=7)
    g = generate(cfg)
    assert g.n == 16
    assert len(hop_distances(g, 0)) == 16
    cols = 4
    for r in range(4):
        for c in range(4):
            same_room = [(r2, c2) for r2 in range(4) for c2 in range(4) if (r2 // 2, c2 // 2) == (r // 2, c // 2)]
            assert {g.category(r2 * cols + c2) for r2, c2 in same_room} == {g.category(r * cols + c)}
    assert graph_bytes(generate(cfg)) == graph_bytes(g)


def test_zero_noise_room_features_identical():
    g = generate(WorldConfig(noise_sigma=0.0, seed=2))
    for cat in set(g.category(u) for u in range(g.n)):
        rows = g.features[[u for u in range(g.n) if g.category(u) == cat]]
        assert np.all(rows == rows[0])


def test_no_doors_unsatisfiable():
    with pytest.raises(UnsatisfiableConfig):
        generate(WorldConfig(door_fraction=0.0))
    assert generate(WorldConfig(door_fraction=0.0, room_rows=1, room_cols=1)).n == 9


def test_geometric_connected_and_degree():
    g = generate(WorldConfig(kind="random-geometric", n_nodes=30, seed=4))
    assert len(hop_distances(g, 0)) == 30
    assert 2 * len(g.edges) / g.n > 2


def test_geometric_zero_radius():
    with pytest.raises(ConnectivityRetriesExhausted):
        generate(WorldConfig(kind="random-geometric", n_nodes=10, connect_radius=0.0, max_retries=3))


def test_geometric_fixed_seed_positions():
    cfg = WorldConfig(kind="random-geometric", n_nodes=25, seed=9)
    assert np.array_equal(generate(cfg).positions, generate(cfg).positions)


def test_tree_kind_is_a_tree():
    g = generate(WorldConfig(kind="random-tree", n_nodes=40, seed=1))
    assert len(g.edges) == g.n - 1


def test_config_validation():
    with pytest.raises(ValueError):
        WorldConfig(n_categories=20, feature_dim=16)
    with pytest.raises(ValueError):
        WorldConfig(kind="maze")
    with pytest.raises(ValueError):
        WorldConfig(n_nodes=0)
    with pytest.raises(ValueError):
        WorldConfig.from_dict({"colour": "red"})


@settings(max_examples=10)
@given(st.sampled_from(["grid-rooms", "random-geometric", "random-tree"]), st.integers(0, 2**40))
def test_round_trip(tmp_path_factory, kind, seed):
    g = generate(WorldConfig(kind=kind, seed=seed))
    path = tmp_path_factory.mktemp("g") / "w.json"
    save_graph(g, path)
    h = load_graph(path)
    assert h == g
    assert np.array_equal(h.features, g.features) and np.array_equal(h.positions, g.positions)
    assert graph_bytes(h) == path.read_bytes()


def test_missing_edges_key(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"d": 1, "nodes": []}))
    with pytest.raises(SchemaError):
        load_graph(path)


def test_invariant_violation_is_schema_error(tmp_path):
    path = tmp_path / "bad.json"
    nodes = [{"id": i, "pos": [i, 0], "cat": 0, "feat": [0.0]} for i in range(3)]
    path.write_text(json.dumps({"d": 1, "nodes": nodes, "edges": [[0, 1]]}))
    with pytest.raises(SchemaError):
        load_graph(path)


def test_hand_written_line_file(tmp_path):
    path = tmp_path / "line.json"
    nodes = [{"id": i, "pos": [float(i), 0.0], "cat": 0, "feat": [0.0]} for i in range(3)]
    path.write_text(json.dumps({"d": 1, "nodes": nodes, "edges": [[0, 1], [1, 2]]}))
    ref = build_graph([NodeRecord(i, (float(i), 0.0), (0.0,)) for i in range(3)], [(0, 1), (1, 2)])
    assert load_graph(path) == ref


def test_room_coherence():
    intra, inter = [], []
    for seed in range(5):
        g = generate(WorldConfig(noise_sigma=0.1, seed=seed))
        f = g.features / np.linalg.norm(g.features, axis=1, keepdims=True)
        sim = f @ f.T
        cats = np.array([g.category(u) for u in range(g.n)])
        same = cats[:, None] == cats[None, :]
        off = ~np.eye(g.n, dtype=bool)
        intra.append(sim[same & off].mean())
        inter.append(sim[~same].mean())
    assert np.mean(intra) > np.mean(inter)
