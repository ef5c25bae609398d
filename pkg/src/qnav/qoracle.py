"""Ground-truth Q-features and the training-set builder.

A Q-feature is the expected decay-weighted sum of node features met by a
rollout after taking a candidate action::

    Q(T, a) = sum_N p(N) * gamma**t(N) * R(N)

with ``p`` and ``t`` from :func:`qnav.rollout.node_step_distribution`.
:func:`bellman_qfeature` evaluates the same quantity through the one-step
recursion ``Q = R(a) + gamma * E[Q(next)]`` and is kept independent of the
layered sweep so that the two can check each other.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rollout
from .navgraph import NavGraph, check_trajectory, hop_distances, unvisited_neighbors
from .rng import SplitMix64, derive_seed
from .rollout import CANONICAL, SHORTEST_MODES, UNIFORM, NotANeighbor


class GraphTooLarge(ValueError):
    pass


class RetriesExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class QOracleConfig:
    gamma: float = 0.5
    mode: str = CANONICAL
    mc_rollouts: int = 64

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        rollout.check_mode(self.mode)
        if self.mode == UNIFORM and self.mc_rollouts < 1:
            raise ValueError("uniform-random mode needs mc_rollouts >= 1")


@dataclass(frozen=True)
class QFeatureVector:
    values: np.ndarray
    gamma: float
    origin: int
    candidate: int


def _check_pair(g: NavGraph, origin: int, candidate: int) -> None:
    if candidate not in g.adjacency[origin]:
        raise NotANeighbor(f"{candidate} is not a neighbour of {origin}")


def qfeature_from_distribution(g: NavGraph, dist: rollout.NodeStepDistribution, gamma: float) -> np.ndarray:
    # start from the t=0 term and skip zero weights so gamma=0 returns R(candidate) bit-exactly
    q = g.features[dist.candidate].copy()
    for node, (t, p) in sorted(dist.entries.items(), key=lambda kv: (kv[1][0], kv[0])):
        if t == 0:
            continue
        w = p * gamma**t
        if w != 0.0:
            q += w * g.features[node]
    return q


def gt_qfeature(g: NavGraph, origin: int, candidate: int, cfg: QOracleConfig = QOracleConfig()) -> QFeatureVector:
    """Exact Q-feature of moving ``origin -> candidate`` (shortest modes)."""
    _check_pair(g, origin, candidate)
    rollout.check_mode(cfg.mode, SHORTEST_MODES)
    dist = rollout.node_step_distribution(g, origin, candidate, cfg.mode)
    return QFeatureVector(qfeature_from_distribution(g, dist, cfg.gamma), cfg.gamma, origin, candidate)


def bellman_qfeature(
    g: NavGraph, origin: int, candidate: int, cfg: QOracleConfig = QOracleConfig(),
    max_nodes: int = 64,
) -> QFeatureVector:
    """Reference Q-feature by plain recursion over every rollout branch.

    Exponential in the worst case; refuses graphs above ``max_nodes``. Also
    exact for ``uniform-random`` mode on small graphs.
    """
    _check_pair(g, origin, candidate)
    if g.n > max_nodes:
        raise GraphTooLarge(f"{g.n} nodes exceeds the recursion cap of {max_nodes}")
    gamma, mode = cfg.gamma, cfg.mode
    hop = hop_distances(g, origin)

    # feasibility re-derived here rather than borrowed from rollout
    def options(path: list[int]) -> list[int]:
        cur = path[-1]
        if mode == UNIFORM:
            return [v for v in g.adjacency[cur] if v not in path]
        out = []
        for v in g.adjacency[cur]:
            if hop[v] != len(path):  # path holds len(path)-1 hops so far
                continue
            if mode == CANONICAL:
                parents = [u for u in g.adjacency[v] if hop[u] == hop[v] - 1]
                if min(parents) != cur:
                    continue
            out.append(v)
        return out

    def q(path: list[int]) -> np.ndarray:
        val = g.features[path[-1]].copy()
        opts = options(path)
        if opts and gamma != 0.0:
            cont = sum(q(path + [v]) for v in opts) / len(opts)
            val = val + gamma * cont
        return val

    return QFeatureVector(q([origin, candidate]), gamma, origin, candidate)


def mc_qfeature(
    g: NavGraph, origin: int, candidate: int, cfg: QOracleConfig, rng: np.random.Generator
) -> QFeatureVector:
    """Average of ``sum_k gamma**t_k R(N_k)`` over ``cfg.mc_rollouts`` sampled rollouts."""
    _check_pair(g, origin, candidate)
    runs = rollout.sample_rollouts(g, origin, candidate, cfg.mode, cfg.mc_rollouts, rng)[:, 1:]
    if cfg.gamma == 0.0:
        return QFeatureVector(g.features[candidate].copy(), cfg.gamma, origin, candidate)
    weights = cfg.gamma ** np.arange(runs.shape[1], dtype=np.float64)
    total = np.zeros(g.d)
    for col in range(runs.shape[1]):
        nodes = runs[:, col]
        nodes = nodes[nodes >= 0]
        if nodes.size:
            total += weights[col] * g.features[nodes].sum(axis=0)
    return QFeatureVector(total / cfg.mc_rollouts, cfg.gamma, origin, candidate)


@dataclass(frozen=True)
class TrainingSample:
    world: int  # index into the world list the sample was drawn from
    trajectory: tuple[int, ...]
    candidate: int
    gamma: float
    target: np.ndarray = field(repr=False)

    def to_record(self, world_names: Sequence[str] | None = None) -> dict:
        name = world_names[self.world] if world_names is not None else self.world
        return {"world": name, "traj": list(self.trajectory), "cand": self.candidate,
                "gamma": self.gamma, "q": self.target}

    @classmethod
    def from_record(cls, rec: dict, world_index: dict | None = None) -> "TrainingSample":
        world = world_index[rec["world"]] if world_index is not None else int(rec["world"])
        return cls(world, tuple(int(v) for v in rec["traj"]), int(rec["cand"]),
                   float(rec["gamma"]), np.asarray(rec["q"], dtype=np.float64))


class QTargetCache:
    """Per-world memo of Q-targets for the shortest modes.

    In those modes the target depends only on (tail, candidate), so repeated
    pairs are computed once.
    """

    def __init__(self, worlds: Sequence[NavGraph], cfg: QOracleConfig):
        self.worlds = worlds
        self.cfg = cfg
        self._children: dict = {}
        self._q: dict = {}

    def __call__(self, world: int, origin: int, candidate: int, rng=None) -> np.ndarray:
        g = self.worlds[world]
        if self.cfg.mode == UNIFORM:
            if rng is None:
                raise ValueError("uniform-random targets need an rng")
            return mc_qfeature(g, origin, candidate, self.cfg, rng).values
        key = (world, origin, candidate)
        if key not in self._q:
            ck = (world, origin)
            if ck not in self._children:
                self._children[ck] = rollout.children_map(g, origin, self.cfg.mode)
            dist = rollout.node_step_distribution(g, origin, candidate, self.cfg.mode, self._children[ck])
            self._q[key] = qfeature_from_distribution(g, dist, self.cfg.gamma)
        return self._q[key].copy()


def sample_trajectory(
    g: NavGraph, length: int, rng: SplitMix64, max_retries: int = 100
) -> tuple[list[int], int]:
    """Random self-avoiding walk of ``length`` nodes plus one unvisited candidate.

    Walks that hit a dead end (or end with no candidate) are redrawn from
    scratch rather than truncated.
    """
    for _ in range(max_retries):
        traj = [rng.randbelow(g.n)]
        while len(traj) < length:
            opts = unvisited_neighbors(g, traj)
            if not opts:
                break
            traj.append(rng.choice(opts))
        if len(traj) < length:
            continue
        cands = unvisited_neighbors(g, traj)
        if cands:
            return traj, rng.choice(cands)
    raise RetriesExhausted(f"no walk of length {length} after {max_retries} attempts")


def _sample_one(worlds, cfg, max_traj_len, seed, index, cache) -> TrainingSample:
    rng = SplitMix64(derive_seed(seed, "qdata", index))
    w = rng.randbelow(len(worlds))
    length = rng.randint(1, max_traj_len)
    traj, cand = sample_trajectory(worlds[w], length, rng)
    target = cache(w, traj[-1], cand, rng.numpy() if cfg.mode == UNIFORM else None)
    return TrainingSample(w, tuple(traj), cand, cfg.gamma, target)


def _sample_range(args) -> list[TrainingSample]:
    worlds, cfg, max_traj_len, seed, lo, hi = args
    cache = QTargetCache(worlds, cfg)
    return [_sample_one(worlds, cfg, max_traj_len, seed, i, cache) for i in range(lo, hi)]


def build_training_set(
    worlds: Sequence[NavGraph],
    n_samples: int,
    cfg: QOracleConfig = QOracleConfig(),
    max_traj_len: int = 8,
    seed: int = 0,
    workers: int = 1,
) -> list[TrainingSample]:
    """Draw ``n_samples`` (trajectory, candidate, Q-target) records.

    Sample ``i`` depends only on ``(seed, i)``, so the result is identical
    for any ``workers`` count.
    """
    if max_traj_len < 1:
        raise ValueError("max_traj_len must be >= 1")
    if not worlds:
        raise ValueError("need at least one world")
    if workers <= 1 or n_samples < 2 * workers:
        return _sample_range((worlds, cfg, max_traj_len, seed, 0, n_samples))
    bounds = np.linspace(0, n_samples, workers + 1).astype(int)
    jobs = [(worlds, cfg, max_traj_len, seed, int(lo), int(hi)) for lo, hi in zip(bounds, bounds[1:])]
    with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1)) as pool:
        return [s for chunk in pool.map(_sample_range, jobs) for s in chunk]


def revalidate(sample: TrainingSample, worlds: Sequence[NavGraph], cfg: QOracleConfig, atol: float = 1e-9) -> bool:
    """Recompute a stored target and compare (shortest modes only)."""
    g = worlds[sample.world]
    check_trajectory(g, sample.trajectory)
    if sample.candidate in sample.trajectory:
        return False
    ref = gt_qfeature(g, sample.trajectory[-1], sample.candidate, cfg).values
    return bool(np.allclose(ref, sample.target, rtol=0, atol=atol))
