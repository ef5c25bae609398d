import numpy as np
import pytest

from qnav.agent import EpisodeResult, run_episode, sample_episodes
from qnav.evaluation import (
    REPORT_HEADER,
    BenchConfig,
    ablate_gamma,
    ablate_policy,
    check_report,
    compute_report,
    first_error_histogram,
    first_error_index,
    oracle_success,
    reports_csv,
    run_pipeline,
    spl_contribution,
    success,
    sweep,
    gamma_cells,
)
from qnav.fixtures import spl_fixtures
from qnav.navgraph import line_graph
from qnav.qmodel import TrainConfig
from qnav.rollout import UNIFORM
from qnav.worldgen import WorldConfig, generate


def tiny_bench(**kw):
    base = dict(
        n_worlds=3, n_train_worlds=2, n_qsamples=200, qtrain=TrainConfig(epochs=2, hidden=(16,)),
        s2_samples=200, s2train=TrainConfig(epochs=2, hidden=(16,)), n_episodes=12, mc_rollouts=4,
        world=WorldConfig(room_rows=2, room_cols=2),
    )
    base.update(kw)
    return BenchConfig(**base)


def _ep(path, goal, radius=0, expert=None, choices=None):
    return EpisodeResult(0, path[0], goal, radius, "t", path, choices if choices is not None else path[1:],
                         "stop-rule", expert or [path[0]])


def test_spl_fixtures():
    for g, ep, want in spl_fixtures():
        assert spl_contribution(ep, g) == want


def test_success_examples():
    g = line_graph(5)
    assert success(_ep([0, 1, 2], 2), g)
    assert success(_ep([0, 1], 2, radius=1), g)
    assert not success(_ep([0], 4), g)


def test_oracle_success_pass_through():
    g = line_graph(5)
    ep = _ep([0, 1, 2, 3], 2)
    assert oracle_success(ep, g) and not success(ep, g)
    assert not oracle_success(_ep([0, 1], 4), g)


def test_first_error():
    assert first_error_index(_ep([0, 1, 2], 2, expert=[0, 1, 2])) is None
    assert first_error_index(_ep([0, 3], 2, expert=[0, 1, 2], choices=[3])) == 0
    assert first_error_index(_ep([0, 1], 2, expert=[0, 1, 2], choices=[1])) == 1
    hist = first_error_histogram([_ep([0, 1, 2], 2, expert=[0, 1, 2]),
                                  _ep([0, 3], 2, expert=[0, 1, 2], choices=[3])])
    assert hist.identical == 1 and hist.bins == {0: 1}
    lines = hist.to_csv().splitlines()
    assert lines[0] == "bin,count" and lines[-1] == "identical,1"


def test_report_csv_header():
    g = line_graph(3)
    rep = compute_report([ep for _, ep, _ in spl_fixtures()], {0: g}, "t")
    assert reports_csv([rep]).splitlines()[0] == ",".join(REPORT_HEADER)
    assert rep.SPL == pytest.approx(0.5) and rep.SR == pytest.approx(2 / 3)
    assert check_report(rep)


def test_expert_on_trees_is_perfect():
    trees = [generate(WorldConfig(kind="random-tree", n_nodes=25, seed=s)) for s in range(3)]
    envs = sample_episodes(trees, 60, 2, min_hops=2)
    res = [run_episode(e, "expert", budget=25) for e in envs]
    rep = compute_report(res, dict(enumerate(trees)))
    assert rep.SR == 1.0 and rep.SPL == pytest.approx(1.0, abs=1e-12)


@pytest.fixture(scope="module")
def tiny_out():
    return run_pipeline(tiny_bench())


def test_pipeline_reports(tiny_out):
    assert [r.agent for r in tiny_out.reports] == [
        "random", "history-only", "foresighted-gt-q", "foresighted-learned-q", "pseudo-expert"]
    for rep in tiny_out.reports:
        assert check_report(rep)
        assert 0 <= rep.SPL <= rep.SR <= rep.OSR <= 1
    for results in tiny_out.episodes.values():
        hist = first_error_histogram(results)
        assert hist.total == len(results)


def test_metrics_recompute_from_logs(tiny_out):
    graphs = dict(enumerate(tiny_out.worlds))
    for rep, results in zip(tiny_out.reports, tiny_out.episodes.values()):
        back = [EpisodeResult.from_record(r.to_record()) for r in results]
        again = compute_report(back, graphs, rep.agent, rep.gamma, rep.mode)
        assert again == rep


def test_pipeline_deterministic(tiny_out):
    again = run_pipeline(tiny_bench())
    assert again.reports == tiny_out.reports


def test_heldout_split(tiny_out):
    # Q-model validation samples come from held-out worlds only
    assert all(s.world < 1 for s in tiny_out.q.val_samples)
    assert all(r.world >= 2 for res in tiny_out.episodes.values() for r in res)


def test_gamma_sweep_two_values():
    rows = ablate_gamma(tiny_bench(), [0.0, 0.5])
    assert [r.gamma for r in rows] == [0.0, 0.5]
    outs = sweep(gamma_cells(tiny_bench(), [0.0]))
    g0 = outs[0]
    train_worlds = g0.worlds[:2]
    for s in g0.q.samples:
        assert np.array_equal(s.target, train_worlds[s.world].features[s.candidate])


def test_sweep_workers_do_not_change_results():
    cells = gamma_cells(tiny_bench(n_episodes=4), [0.0, 0.5])
    a = [o.reports for o in sweep(cells, 1)]
    b = [o.reports for o in sweep(cells, 2)]
    assert a == b


def test_empty_gamma_list():
    with pytest.raises(ValueError):
        ablate_gamma(tiny_bench(), [])


def test_policy_ablation_gamma_zero_targets_agree():
    bench = tiny_bench(gamma=0.0, n_episodes=4)
    rows = ablate_policy(bench)
    assert [r.mode for r in rows] == ["shortest-canonical", UNIFORM]
    outs = sweep([bench, bench.replace(mode=UNIFORM)])
    for a, b in zip(outs[0].q.samples, outs[1].q.samples):
        assert (a.trajectory, a.candidate) == (b.trajectory, b.candidate)
        assert np.array_equal(a.target, b.target)


def test_bench_config_round_trip():
    bench = tiny_bench()
    assert BenchConfig.from_dict(bench.to_dict()) == bench
    with pytest.raises(ValueError):
        BenchConfig.from_dict({"episodes": 3})
