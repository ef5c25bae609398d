"""Acceptance criteria 1-10, each reported as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines inline; they
are also repeated in the terminal summary. Criteria 6, 7, 9 and 10 drive the
``qnav`` CLI at default benchmark scale (a few minutes in total).
"""
import csv
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE, pairs
from qnav import rollout
from qnav.cli import main
from qnav.evaluation import (
    DEFAULT_GAMMAS,
    BenchConfig,
    check_report,
    compute_report,
    data_scaling,
    spl_contribution,
)
from qnav.fixtures import diamond, fixture_graphs, small_world, spl_fixtures
from qnav.navgraph import hop_distances, line_graph
from qnav.qmodel import grad_check
from qnav.qoracle import QOracleConfig, bellman_qfeature, build_training_set, gt_qfeature
from qnav.rng import derive_seed
from qnav.rollout import CANONICAL, SHORTEST_ALL
from qnav.worldgen import WorldConfig, generate, load_graph
from test_qmodel import smooth_net

pytestmark = pytest.mark.acceptance

# pilot run of the default benchmark at master seed 0 (see notes/decisions.md)
PINNED_SR_MARGIN = 0.125
PINNED_SPL_MARGIN = 0.1953
PIN_TOL = 0.02
SEED = 0


def report(k: int, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k:>2}: {detail}"
    ACCEPTANCE[k] = line
    print(line)
    assert ok, line


def read_report(path):
    rows = list(csv.DictReader(open(path)))
    return {r["agent"]: {k: float(r[k]) for k in ("SR", "OSR", "SPL")} for r in rows}


def tree_bytes(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, argv
    return code


def pipeline(root, seed=SEED):
    w, q, m, s, b = (root / x for x in "wqmsb")
    cli("gen-worlds", "--seed", seed, "--out", w)
    cli("build-qdata", "--worlds", w, "--seed", seed, "--out", q)
    cli("train-qmodel", "--data", q, "--seed", seed, "--out", m)
    cli("train-s2", "--worlds", w, "--qmodel", m, "--seed", seed, "--out", s)
    cli("run-bench", "--worlds", w, "--heads", s, "--qmodel", m, "--seed", seed, "--out", b)
    return root


@pytest.fixture(scope="module")
def bench_runs(tmp_path_factory):
    """The default pipeline, twice, in sibling directories."""
    base = tmp_path_factory.mktemp("bench")
    t0 = time.perf_counter()
    a = pipeline(base / "run1")
    b = pipeline(base / "run2")
    return a, b, time.perf_counter() - t0


@pytest.fixture(scope="module")
def gamma_sweep(tmp_path_factory):
    out = tmp_path_factory.mktemp("ablate") / "out"
    t0 = time.perf_counter()
    cli("ablate", "--gammas", "0,0.3,0.5,0.7", "--seed", SEED, "--out", out)
    return out, time.perf_counter() - t0


def test_c01_oracle_equivalence():
    t0 = time.perf_counter()
    worst, n_pairs = 0.0, 0
    for i in range(50):
        n = 6 + i % 15
        kind = ("random-geometric", "random-tree")[i % 2]
        g = small_world(n, derive_seed(1, "c1", i), kind)
        gamma = (0.0, 0.3, 0.5, 0.7, 0.9)[i % 5]
        for mode in (CANONICAL, SHORTEST_ALL):
            cfg = QOracleConfig(gamma, mode)
            for o, c in pairs(g):
                d = bellman_qfeature(g, o, c, cfg).values - gt_qfeature(g, o, c, cfg).values
                worst = max(worst, float(np.abs(d).max()))
                n_pairs += 1
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-9 and dt < 30,
           f"max |bellman - sweep| = {worst:.2e} over {n_pairs} (pair, mode) cases on 50 graphs, {dt:.1f}s")


def test_c02_distribution_vs_monte_carlo():
    t0 = time.perf_counter()
    worst, n_pairs = 0.0, 0
    for i in range(10):
        g = small_world(12, derive_seed(1, "c2", i))
        rng = np.random.default_rng(derive_seed(1, "c2-mc", i))
        for mode in (CANONICAL, SHORTEST_ALL):
            for o, c in pairs(g):
                exact = rollout.node_step_distribution(g, o, c, mode)
                freq = rollout.visit_frequencies(g, o, c, mode, 100_000, rng)
                for v in set(exact.entries) | set(freq):
                    p = exact.entries[v][1] if v in exact.entries else 0.0
                    worst = max(worst, abs(p - freq.get(v, 0.0)))
                n_pairs += 1
    dt = time.perf_counter() - t0
    report(2, worst <= 0.01 and dt < 60,
           f"max |p - freq| = {worst:.4f} over {n_pairs} (pair, mode) cases, 1e5 rollouts each, {dt:.1f}s")


def test_c03_uniqueness():
    t0 = time.perf_counter()
    bad = 0
    for i in range(100):
        g = generate(WorldConfig(seed=derive_seed(1, "c3", i)))
        bad += sum(len(rollout.verify_uniqueness(g, o, CANONICAL)) for o in range(g.n))
    dia = diamond()
    lit = len(rollout.verify_uniqueness(dia, 0, SHORTEST_ALL))
    can = len(rollout.verify_uniqueness(dia, 0, CANONICAL))
    dt = time.perf_counter() - t0
    report(3, bad == 0 and lit == 1 and can == 0 and dt < 60,
           f"{bad} canonical violations on 100 worlds; diamond shortest-all={lit}, canonical={can}; {dt:.1f}s")


def test_c04_gamma_zero():
    graphs = {**fixture_graphs(), "line3": line_graph(3), "grid": generate(WorldConfig(seed=1)),
              "tree": generate(WorldConfig(kind="random-tree", seed=1))}
    checked, mism = 0, []
    for name, g in graphs.items():
        for mode in (CANONICAL, SHORTEST_ALL):
            cfg = QOracleConfig(0.0, mode)
            for o, c in pairs(g):
                checked += 1
                if not np.array_equal(gt_qfeature(g, o, c, cfg).values, g.features[c]):
                    mism.append((name, mode, o, c))
    report(4, not mism, f"{checked} (pair, mode) cases on {len(graphs)} fixtures, {len(mism)} not bit-exact")


def test_c05_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(derive_seed(1, "c5"))
    # relu draws with a preactivation within 1e-3 of zero are redrawn: there the
    # 1e-5 central difference straddles the kink and is not a valid reference
    errs, redrawn = [], 0
    for _ in range(100):
        cfg, r = smooth_net(rng)
        errs.append(grad_check(*cfg, eps=1e-5))
        redrawn += r
    dt = time.perf_counter() - t0
    report(5, max(errs) <= 1e-4 and dt < 30,
           f"max relative error {max(errs):.2e} over 100 random networks "
           f"({redrawn} near-kink relu draws redrawn), {dt:.1f}s")


def test_c06_determinism(bench_runs):
    a, b, dt = bench_runs
    ta, tb = tree_bytes(a), tree_bytes(b)
    diff = sorted(str(k) for k in set(ta) | set(tb) if ta.get(k) != tb.get(k))
    report(6, not diff and len(ta) > 0 and dt < 300,
           f"{len(ta)} files byte-identical across two default-scale runs"
           + (f", differing: {diff[:3]}" if diff else "") + f"; {dt:.1f}s for both")


def test_c07_gt_q_uplift(bench_runs):
    root = bench_runs[0]
    rep = read_report(root / "b" / "report.csv")
    gt, hist, ex = rep["foresighted-gt-q"], rep["history-only"], rep["pseudo-expert"]
    d_sr, d_spl = gt["SR"] - hist["SR"], gt["SPL"] - hist["SPL"]
    # the expert must finish within the step budget on every held-out world
    budget = BenchConfig().budget
    worlds = [load_graph(p) for p in sorted((root / "w").glob("world_*.json"))][BenchConfig().n_train_worlds:]
    diam = max(max(hop_distances(g, v).values()) for g in worlds for v in range(g.n))
    ok = (d_sr > 0 and d_spl > 0 and ex["SR"] == 1.0 and diam <= budget
          and abs(d_sr - PINNED_SR_MARGIN) <= PIN_TOL and abs(d_spl - PINNED_SPL_MARGIN) <= PIN_TOL)
    report(7, ok, f"gt-q minus history: SR {d_sr:+.3f} (pin {PINNED_SR_MARGIN:+.3f}), "
                  f"SPL {d_spl:+.4f} (pin {PINNED_SPL_MARGIN:+.4f}); expert SR {ex['SR']:.3f}, "
                  f"hop diameter {diam} <= budget {budget}")


def test_c08_generalization():
    t0 = time.perf_counter()
    res = [data_scaling(BenchConfig(seed=s)) for s in range(5)]
    wins = sum(r[10_000] <= r[100] for r in res)
    pairs_ = ", ".join(f"{r[10_000]:.4f}/{r[100]:.4f}" for r in res)
    dt = time.perf_counter() - t0
    report(8, wins >= 4, f"held-out MSE 1e4 <= 1e2 samples in {wins}/5 seeds ({pairs_}); {dt:.1f}s")


def test_c09_metric_sanity(bench_runs, gamma_sweep):
    rows = []
    for path in [bench_runs[0] / "b" / "report.csv", bench_runs[1] / "b" / "report.csv",
                 gamma_sweep[0] / "gamma.csv"]:
        rows += list(read_report(path).values()) if path.name == "report.csv" else \
            [{k: float(r[k]) for k in ("SR", "OSR", "SPL")} for r in csv.DictReader(open(path))]
    bad = [r for r in rows if not 0 <= r["SPL"] <= r["SR"] <= r["OSR"] <= 1]
    got = [spl_contribution(ep, g) for g, ep, _ in spl_fixtures()]
    want = [w for _, _, w in spl_fixtures()]
    g = spl_fixtures()[0][0]
    fixture_rep = compute_report([ep for _, ep, _ in spl_fixtures()], {0: g})
    report(9, not bad and got == want and check_report(fixture_rep),
           f"{len(rows)} report rows, {len(bad)} violating 0<=SPL<=SR<=OSR<=1; SPL fixtures {got} (want {want})")


def test_c10_gamma_sweep(gamma_sweep):
    out, dt = gamma_sweep
    rows = list(csv.DictReader(open(out / "gamma.csv")))
    gammas = tuple(float(r["gamma"]) for r in rows)
    # gamma=0 Q-targets on the sweep's own worlds must be the candidate features
    worlds = [load_graph(p) for p in sorted((out / "worlds").glob("world_*.json"))]
    samples = build_training_set(worlds, 500, QOracleConfig(0.0, CANONICAL), seed=derive_seed(1, "c10"))
    mism = sum(not np.array_equal(s.target, worlds[s.world].features[s.candidate]) for s in samples)
    best = max(rows, key=lambda r: float(r["SPL"]))["gamma"]
    table = " ".join(f"{r['gamma']}:{float(r['SR']):.3f}/{float(r['SPL']):.3f}" for r in rows)
    report(10, len(rows) == 4 and gammas == DEFAULT_GAMMAS and mism == 0,
           f"{len(rows)} rows for gammas {gammas}, gamma=0 targets {mism} mismatches of 500; "
           f"SR/SPL {table}; best SPL at gamma={best} (reported, not asserted); {dt:.1f}s")
