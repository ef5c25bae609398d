import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import graph_and_edge, pairs
from qnav.fixtures import small_world
from qnav.navgraph import NodeRecord, build_graph, line_graph
from qnav.qoracle import (
    GraphTooLarge,
    QOracleConfig,
    QTargetCache,
    RetriesExhausted,
    TrainingSample,
    bellman_qfeature,
    build_training_set,
    gt_qfeature,
    mc_qfeature,
    revalidate,
    sample_trajectory,
)
from qnav.rng import SplitMix64
from qnav.rollout import CANONICAL, SHORTEST_ALL, UNIFORM
from qnav.worldgen import WorldConfig, generate


def _scalar_star():
    feats = {0: 4.0, 1: 0.0, 2: 6.0, 3: 10.0}
    pos = [(0, 0), (-1, 0), (1, 0), (0, 1)]
    nodes = [NodeRecord(i, pos[i], (feats[i],)) for i in range(4)]
    return build_graph(nodes, [(0, 1), (0, 2), (0, 3)])


def test_line_example():
    g = line_graph(3)
    cfg = QOracleConfig(0.5)
    assert gt_qfeature(g, 0, 1, cfg).values[0] == 2.0
    assert bellman_qfeature(g, 0, 1, cfg).values[0] == 2.0
    rng = np.random.default_rng(0)
    assert mc_qfeature(g, 0, 1, QOracleConfig(0.5, mc_rollouts=3), rng).values[0] == 2.0


def test_star_example():
    g = _scalar_star()
    cfg = QOracleConfig(0.5)
    assert gt_qfeature(g, 1, 0, cfg).values[0] == 8.0
    assert bellman_qfeature(g, 1, 0, cfg).values[0] == 8.0
    mc = mc_qfeature(g, 1, 0, QOracleConfig(0.5, mc_rollouts=100_000), np.random.default_rng(1))
    assert abs(mc.values[0] - 8.0) <= 0.05


def test_gamma_zero_every_mode(grid_world):
    for mode in (CANONICAL, SHORTEST_ALL):
        cfg = QOracleConfig(0.0, mode)
        for o, c in pairs(grid_world)[:100]:
            assert np.array_equal(gt_qfeature(grid_world, o, c, cfg).values, grid_world.features[c])
    cfg = QOracleConfig(0.0, UNIFORM, 8)
    for o, c in pairs(grid_world)[:20]:
        v = mc_qfeature(grid_world, o, c, cfg, np.random.default_rng(0)).values
        assert np.array_equal(v, grid_world.features[c])


def test_config_validation():
    with pytest.raises(ValueError):
        QOracleConfig(gamma=1.0)
    with pytest.raises(ValueError):
        QOracleConfig(mode="spiral")
    with pytest.raises(ValueError):
        QOracleConfig(mode=UNIFORM, mc_rollouts=0)


def test_graph_too_large(grid_world):
    with pytest.raises(GraphTooLarge):
        bellman_qfeature(grid_world, 0, 1)


def test_uniform_cycle_is_deterministic(square):
    # no-revisit walks on a 4-cycle have a single continuation, so every estimate is exact
    ref = bellman_qfeature(square, 0, 1, QOracleConfig(0.5, UNIFORM)).values
    rng = np.random.default_rng(7)
    for n in (1, 10):
        assert np.allclose(mc_qfeature(square, 0, 1, QOracleConfig(0.5, UNIFORM, n), rng).values, ref, atol=1e-12)


def test_uniform_variance_shrinks():
    g = small_world(8, 3)
    c = g.adjacency[0][0]
    rng = np.random.default_rng(7)
    small = [mc_qfeature(g, 0, c, QOracleConfig(0.5, UNIFORM, 10), rng).values for _ in range(60)]
    big = [mc_qfeature(g, 0, c, QOracleConfig(0.5, UNIFORM, 1000), rng).values for _ in range(60)]
    assert np.var(big, axis=0).sum() < np.var(small, axis=0).sum()


def test_uniform_bellman_matches_mc(square):
    exact = bellman_qfeature(square, 0, 1, QOracleConfig(0.5, UNIFORM)).values
    est = mc_qfeature(square, 0, 1, QOracleConfig(0.5, UNIFORM, 50_000), np.random.default_rng(2)).values
    assert np.allclose(exact, est, atol=0.02)


@given(graph_and_edge(max_nodes=12), st.floats(0.0, 0.95), st.sampled_from([CANONICAL, SHORTEST_ALL]))
def test_recursion_matches_sweep(ge, gamma, mode):
    g, o, c = ge
    cfg = QOracleConfig(gamma, mode)
    assert np.allclose(bellman_qfeature(g, o, c, cfg).values, gt_qfeature(g, o, c, cfg).values,
                       rtol=0, atol=1e-9)


@given(graph_and_edge(max_nodes=12), st.floats(0.0, 0.9))
def test_linear_in_features(ge, gamma):
    g, o, c = ge
    doubled = build_graph([NodeRecord(r.id, r.position, tuple(2 * x for x in r.feature)) for r in g.nodes],
                          list(g.edges))
    cfg = QOracleConfig(gamma)
    assert np.array_equal(gt_qfeature(doubled, o, c, cfg).values, 2 * gt_qfeature(g, o, c, cfg).values)


@given(graph_and_edge(max_nodes=12))
def test_monotone_in_gamma_for_nonnegative_features(ge):
    g, o, c = ge
    pos = build_graph([NodeRecord(r.id, r.position, tuple(abs(x) for x in r.feature)) for r in g.nodes],
                      list(g.edges))
    qs = [gt_qfeature(pos, o, c, QOracleConfig(gm)).values for gm in (0.0, 0.2, 0.5, 0.8)]
    for a, b in zip(qs, qs[1:]):
        assert np.all(b >= a - 1e-12)


@given(graph_and_edge(max_nodes=12))
def test_support_restriction(ge):
    g, o, c = ge
    from qnav.rollout import node_step_distribution

    support = node_step_distribution(g, o, c).support()
    perturbed = build_graph(
        [NodeRecord(r.id, r.position, r.feature if r.id in support else tuple(x + 9.0 for x in r.feature))
         for r in g.nodes],
        list(g.edges))
    assert np.array_equal(gt_qfeature(perturbed, o, c).values, gt_qfeature(g, o, c).values)


def test_training_set_line_length_one():
    samples = build_training_set([line_graph(3)], 50, QOracleConfig(), max_traj_len=1, seed=3)
    for s in samples:
        assert len(s.trajectory) == 1
        assert s.candidate in line_graph(3).adjacency[s.trajectory[0]]


def test_training_set_deterministic_and_worker_independent():
    worlds = [generate(WorldConfig(seed=i)) for i in range(3)]
    a = build_training_set(worlds, 200, QOracleConfig(), seed=9)
    b = build_training_set(worlds, 200, QOracleConfig(), seed=9, workers=2)
    assert [(s.world, s.trajectory, s.candidate) for s in a] == [(s.world, s.trajectory, s.candidate) for s in b]
    assert all(np.array_equal(x.target, y.target) for x, y in zip(a, b))


def test_training_set_spot_check():
    worlds = [generate(WorldConfig(seed=i)) for i in range(10)]
    cfg = QOracleConfig()
    samples = build_training_set(worlds, 5000, cfg, seed=1)
    lengths = [len(s.trajectory) for s in samples]
    assert min(lengths) == 1 and max(lengths) == 8
    for s in samples[::50]:
        assert revalidate(s, worlds, cfg)
    small = [small_world(10, i) for i in range(3)]
    for s in build_training_set(small, 100, cfg, seed=2):
        ref = bellman_qfeature(small[s.world], s.trajectory[-1], s.candidate, cfg).values
        assert np.allclose(ref, s.target, atol=1e-9)


def test_record_round_trip():
    worlds = [generate(WorldConfig(seed=i)) for i in range(2)]
    names = ["a", "b"]
    for s in build_training_set(worlds, 20, QOracleConfig(), seed=4):
        back = TrainingSample.from_record(s.to_record(names), {"a": 0, "b": 1})
        assert back.trajectory == s.trajectory and np.array_equal(back.target, s.target)


def test_uniform_training_set_gamma_zero():
    worlds = [generate(WorldConfig(seed=1))]
    for s in build_training_set(worlds, 30, QOracleConfig(0.0, UNIFORM, 4), seed=0):
        assert np.array_equal(s.target, worlds[0].features[s.candidate])


def test_sample_trajectory_retries(star4):
    with pytest.raises(RetriesExhausted):
        sample_trajectory(star4, 4, SplitMix64(0), max_retries=10)
    traj, cand = sample_trajectory(star4, 2, SplitMix64(1))
    assert cand not in traj and len(traj) == 2


def test_cache_matches_direct(grid_world):
    cache = QTargetCache([grid_world], QOracleConfig())
    for o, c in pairs(grid_world)[:30]:
        assert np.array_equal(cache(0, o, c), gt_qfeature(grid_world, o, c).values)
