"""Quick invariant battery run by ``qnav verify``.

Each check is a reduced-size version of a property the test suite covers in
full; together they take a few seconds.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rollout
from .evaluation import check_report, compute_report, spl_contribution
from .fixtures import diamond, fixture_graphs, small_world, spl_fixtures
from .qmodel import grad_check, init_params
from .qoracle import QOracleConfig, bellman_qfeature, gt_qfeature
from .rng import derive_seed
from .rollout import CANONICAL, SHORTEST_ALL
from .worldgen import WorldConfig, generate


@dataclass(frozen=True)
class Check:
    name: str
    ok: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


def _pairs(g):
    return [(o, c) for o in range(g.n) for c in g.adjacency[o]]


def check_edge_lengths(seed: int) -> Check:
    worst = 0.0
    for i in range(5):
        g = generate(WorldConfig(seed=derive_seed(seed, "verify-edges", i)))
        for (u, v), length in g.edges.items():
            worst = max(worst, abs(length - float(np.linalg.norm(g.positions[u] - g.positions[v]))))
    return Check("edge lengths", worst <= 1e-9, f"max deviation {worst:.3g}")


def check_oracle_equivalence(seed: int) -> Check:
    worst = 0.0
    for i in range(10):
        g = small_world(8 + i, derive_seed(seed, "verify-oracle", i))
        for mode in (CANONICAL, SHORTEST_ALL):
            cfg = QOracleConfig(0.7, mode)
            for o, c in _pairs(g):
                diff = bellman_qfeature(g, o, c, cfg).values - gt_qfeature(g, o, c, cfg).values
                worst = max(worst, float(np.abs(diff).max()))
    return Check("recursion vs sweep", worst <= 1e-9, f"max |diff| {worst:.3g}")


def check_distribution(seed: int, n_rollouts: int = 20000) -> Check:
    worst = 0.0
    for i in range(3):
        g = small_world(12, derive_seed(seed, "verify-dist", i))
        rng = np.random.default_rng(derive_seed(seed, "verify-mc", i))
        o = 0
        for c in g.adjacency[o]:
            exact = rollout.node_step_distribution(g, o, c, CANONICAL)
            freq = rollout.visit_frequencies(g, o, c, CANONICAL, n_rollouts, rng)
            for v in set(exact.entries) | set(freq):
                p = exact.entries[v][1] if v in exact.entries else 0.0
                worst = max(worst, abs(p - freq.get(v, 0.0)))
    return Check("sweep vs Monte-Carlo", worst <= 0.02, f"max |p - freq| {worst:.4f}")


def check_terminal_mass(seed: int) -> Check:
    worst = 0.0
    for i in range(5):
        g = generate(WorldConfig(seed=derive_seed(seed, "verify-mass", i)))
        for o, c in _pairs(g)[:200]:
            dist = rollout.node_step_distribution(g, o, c)
            worst = max(worst, abs(sum(dist.terminal.values()) - 1.0))
    return Check("terminal mass", worst <= 1e-12, f"max |sum - 1| {worst:.3g}")


def check_uniqueness(seed: int) -> Check:
    bad = 0
    for i in range(10):
        g = generate(WorldConfig(seed=derive_seed(seed, "verify-unique", i)))
        bad += sum(len(rollout.verify_uniqueness(g, o, CANONICAL)) for o in range(g.n))
    dia = diamond()
    lit = len(rollout.verify_uniqueness(dia, 0, SHORTEST_ALL))
    can = len(rollout.verify_uniqueness(dia, 0, CANONICAL))
    ok = bad == 0 and lit == 1 and can == 0
    return Check("canonical uniqueness", ok, f"{bad} violations on worlds; diamond all={lit} canonical={can}")


def check_gamma_zero() -> Check:
    cfg = QOracleConfig(0.0, CANONICAL)
    mism = 0
    graphs = list(fixture_graphs().values()) + [generate(WorldConfig())]
    for g in graphs:
        for o, c in _pairs(g):
            mism += not np.array_equal(gt_qfeature(g, o, c, cfg).values, g.features[c])
    return Check("gamma=0 reduction", mism == 0, f"{mism} mismatches")


def check_gradients(seed: int) -> Check:
    rng = np.random.default_rng(derive_seed(seed, "verify-grad"))
    worst = 0.0
    for i in range(10):
        dims = [int(rng.integers(2, 6)) for _ in range(int(rng.integers(2, 4)))]
        act = ("tanh", "identity")[i % 2]
        p = init_params(dims, act, seed=int(rng.integers(2**31)))
        x = rng.normal(size=(3, dims[0]))
        y = rng.normal(size=(3, dims[-1]))
        worst = max(worst, grad_check(p, x, y))
    return Check("backprop vs finite differences", worst <= 1e-4, f"max rel err {worst:.3g}")


def check_metrics() -> Check:
    got = [spl_contribution(ep, g) for g, ep, _ in spl_fixtures()]
    want = [w for _, _, w in spl_fixtures()]
    g = spl_fixtures()[0][0]
    rep = compute_report([ep for _, ep, _ in spl_fixtures()], {0: g})
    ok = got == want and check_report(rep)
    return Check("SPL fixtures", ok, f"contributions {got}")


def run_all(seed: int = 0, log: Callable[[str], None] | None = None) -> list[Check]:
    battery = [
        ("edge lengths", lambda: check_edge_lengths(seed)),
        ("recursion vs sweep", lambda: check_oracle_equivalence(seed)),
        ("sweep vs Monte-Carlo", lambda: check_distribution(seed)),
        ("terminal mass", lambda: check_terminal_mass(seed)),
        ("canonical uniqueness", lambda: check_uniqueness(seed)),
        ("gamma=0 reduction", check_gamma_zero),
        ("backprop vs finite differences", lambda: check_gradients(seed)),
        ("SPL fixtures", check_metrics),
    ]
    checks = []
    for name, fn in battery:
        try:
            c = fn()
        except Exception as exc:  # a crashing check is a failing check
            c = Check(name, False, f"raised {type(exc).__name__}: {exc}")
        checks.append(c)
        if log:
            log(c.line())
    return checks
