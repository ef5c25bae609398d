"""Frontier-selection agents that fuse a traversed-cost term with a distance-to-go heuristic.

The agent keeps an explored graph of visited nodes plus the frontier (nodes
seen from a visited node but not yet entered). Each frontier node carries a
Q-feature channel computed when it was first observed. A frontier is scored
A*-style::

    score(F) = alpha * s1(F) + beta * s2_hat(F)
    s1(F)    = (dist(start, current) + dist(current, F)) / D1
    s2(F)    = dist(F, goal) / D2

and the agent walks to the lowest-scoring frontier along known edges.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .navgraph import NavGraph, hop_distances, metric_distance, metric_path, path_length
from .qmodel import RegressorParams, TrainConfig, encode_input, forward, softmax, train
from .qoracle import QOracleConfig, gt_qfeature, sample_trajectory
from .rng import SplitMix64, derive_seed

AGENT_KINDS = ("random", "history-only", "foresighted-learned-q", "foresighted-gt-q", "pseudo-expert")
AGENT_ALIASES = {
    "random": "random",
    "history": "history-only",
    "learnedq": "foresighted-learned-q",
    "gtq": "foresighted-gt-q",
    "expert": "pseudo-expert",
}
N_BINS = 5


class EmptyFrontier(ValueError):
    pass


class UnknownFrontier(ValueError):
    pass


def resolve_kind(name: str) -> str:
    kind = AGENT_ALIASES.get(name, name)
    if kind not in AGENT_KINDS:
        raise ValueError(f"unknown agent kind {name!r}")
    return kind


@dataclass(frozen=True)
class GoalSpec:
    goal_feature: np.ndarray
    goal_node: int
    success_radius_hops: int = 0

    def __post_init__(self):
        if self.success_radius_hops < 0:
            raise ValueError("success radius must be >= 0")


def category_embedding(g: NavGraph, node: int) -> np.ndarray:
    emb = np.zeros(g.d)
    emb[g.category(node)] = 1.0
    return emb


def make_goal(g: NavGraph, goal_node: int, noise_sigma: float = 0.0, rng: SplitMix64 | None = None,
              radius: int = 0) -> GoalSpec:
    """Goal described by its category embedding plus optional Gaussian noise."""
    emb = category_embedding(g, goal_node)
    if noise_sigma > 0:
        emb = emb + noise_sigma * np.array([rng.normal() for _ in range(g.d)])
    return GoalSpec(emb, goal_node, radius)


@dataclass(frozen=True)
class ScoreWeights:
    alpha: float = 1.0
    beta: float = 1.0
    fusion: str = "weighted-sum"  # or "softmax-normalized"
    temperature: float = 0.1

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or (self.alpha == 0 and self.beta == 0):
            raise ValueError("alpha, beta must be >= 0 and not both zero")
        if self.fusion not in ("weighted-sum", "softmax-normalized"):
            raise ValueError(f"unknown fusion {self.fusion!r}")


# -- Q-feature sources ------------------------------------------------------

QSource = Callable[[NavGraph, Sequence[int], int], np.ndarray]


class GroundTruthQ:
    """Exact Q-features, memoized per (graph, tail, candidate)."""

    def __init__(self, cfg: QOracleConfig = QOracleConfig()):
        self.cfg = cfg
        self._memo: dict = {}
        self._graphs: dict = {}

    def __call__(self, g: NavGraph, trajectory: Sequence[int], candidate: int) -> np.ndarray:
        key = (id(g), trajectory[-1], candidate)
        if key not in self._memo:
            self._graphs[id(g)] = g
            self._memo[key] = gt_qfeature(g, trajectory[-1], candidate, self.cfg).values
        return self._memo[key]


class ObservationQ:
    """The candidate's own feature, i.e. the Q-feature at ``gamma = 0``."""

    def __call__(self, g: NavGraph, trajectory: Sequence[int], candidate: int) -> np.ndarray:
        return g.features[candidate]


class LearnedQ:
    def __init__(self, params: RegressorParams):
        self.params = params

    def __call__(self, g: NavGraph, trajectory: Sequence[int], candidate: int) -> np.ndarray:
        return forward(self.params, encode_input(g, trajectory, candidate))


# -- distance-to-go heads -----------------------------------------------------

@dataclass
class OracleHead:
    """Exact ``dist(node, goal) / D2`` clipped to [0, 1]."""

    graph: NavGraph
    goal_node: int
    d2: float

    def __call__(self, node: int, q: np.ndarray | None, goal_feature: np.ndarray) -> float:
        return min(1.0, metric_distance(self.graph, node, self.goal_node) / self.d2)


@dataclass
class S2Head:
    """Learned map from ``[Q | goal_feature]`` to the normalized distance to go.

    ``mode='classification'`` predicts one of five bins over [0, 1] and
    reports the probability-weighted bin centre.
    """

    params: RegressorParams
    mode: str = "regression"

    def predict(self, q: np.ndarray, goal_feature: np.ndarray) -> float:
        out = forward(self.params, np.concatenate([q, goal_feature]))
        if self.mode == "classification":
            centers = (np.arange(N_BINS) + 0.5) / N_BINS
            return float(softmax(out) @ centers)
        return float(np.clip(out[0], 0.0, 1.0))

    def __call__(self, node: int, q: np.ndarray | None, goal_feature: np.ndarray) -> float:
        return self.predict(q, goal_feature)

    def to_dict(self) -> dict:
        return {"mode": self.mode, **self.params.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "S2Head":
        return cls(RegressorParams.from_dict(data), data.get("mode", "regression"))


def heuristic_s2(q, goal: GoalSpec, head) -> float:
    """Estimated normalized distance to go for a frontier Q-feature.

    ``q`` is a :class:`~qnav.qoracle.QFeatureVector` (its ``candidate`` names
    the frontier node) and ``head`` an :class:`OracleHead` or :class:`S2Head`.
    """
    return head(q.candidate, q.values, goal.goal_feature)


def progress_s1(g: NavGraph, start: int, current: int, frontier: int, d1: float) -> float:
    return min(1.0, max(0.0, (metric_distance(g, start, current) + metric_distance(g, current, frontier)) / d1))


def distance_bin(s: float) -> int:
    return min(N_BINS - 1, int(min(max(s, 0.0), 1.0) * N_BINS))


def s2_training_data(
    worlds: Sequence[NavGraph], qsource: QSource, n_samples: int, seed: int = 0,
    goal_noise: float = 0.1, max_traj_len: int = 8,
) -> tuple[np.ndarray, np.ndarray]:
    """``([Q | goal_feature], s2)`` pairs from random episodes and walks.

    ``D2`` for each pair is the metric start-to-goal distance of a randomly
    drawn episode in the same world.
    """
    X, y = [], []
    for i in range(n_samples):
        rng = SplitMix64(derive_seed(seed, "s2data", i))
        g = worlds[rng.randbelow(len(worlds))]
        start = rng.randbelow(g.n)
        goal_node = rng.randbelow(g.n - 1)
        goal_node += goal_node >= start
        goal = make_goal(g, goal_node, goal_noise, rng)
        d2 = metric_distance(g, start, goal_node)
        traj, cand = sample_trajectory(g, rng.randint(1, max_traj_len), rng)
        q = qsource(g, traj, cand)
        X.append(np.concatenate([q, goal.goal_feature]))
        y.append(min(1.0, metric_distance(g, cand, goal_node) / d2))
    return np.array(X), np.array(y)


def train_s2_head(
    worlds: Sequence[NavGraph], qsource: QSource, n_samples: int,
    cfg: TrainConfig = TrainConfig(hidden=(64,), epochs=20), mode: str = "regression",
    seed: int = 0, goal_noise: float = 0.1, val_worlds: Sequence[NavGraph] | None = None,
):
    """Fit a distance-to-go head; returns ``(S2Head, TrainHistory)``."""
    if mode not in ("regression", "classification"):
        raise ValueError(f"unknown head mode {mode!r}")
    X, y = s2_training_data(worlds, qsource, n_samples, seed, goal_noise)
    val = None
    if val_worlds:
        Xv, yv = s2_training_data(val_worlds, qsource, max(1, n_samples // 4), derive_seed(seed, "val"), goal_noise)
        val = (Xv, _s2_targets(yv, mode))
    tcfg = TrainConfig(**{**cfg.__dict__, "loss": "xent" if mode == "classification" else "mse"})
    params, hist = train(X, _s2_targets(y, mode), tcfg, val=val)
    return S2Head(params, mode), hist


def _s2_targets(y: np.ndarray, mode: str) -> np.ndarray:
    if mode == "classification":
        return np.eye(N_BINS)[[distance_bin(v) for v in y]]
    return y[:, None]


# -- explored graph and environment -------------------------------------------

@dataclass(frozen=True)
class FrontierInfo:
    feature: np.ndarray
    q: np.ndarray | None
    observer: int


@dataclass
class NavEnv:
    """One episode: a world, a start node and a goal, plus the expert reference."""

    graph: NavGraph
    start: int
    goal: GoalSpec
    world: str | int = 0
    expert_path: list[int] = field(init=False)
    expert_length: float = field(init=False)

    def __post_init__(self):
        self.expert_path = metric_path(self.graph, self.start, self.goal.goal_node)
        self.expert_length = path_length(self.graph, self.expert_path)

    @property
    def d1(self) -> float:
        return 2.0 * max(self.expert_length, 1e-9)

    @property
    def d2(self) -> float:
        return max(self.expert_length, 1e-9)

    def oracle_head(self) -> OracleHead:
        return OracleHead(self.graph, self.goal.goal_node, self.d2)


@dataclass
class ExploredGraph:
    start: int
    current: int
    visited: tuple[int, ...]  # in order of first visit
    frontier: dict  # node -> FrontierInfo
    visited_q: dict = field(default_factory=dict)  # node -> Q channel carried over from the frontier

    def check(self, g: NavGraph) -> None:
        vis = set(self.visited)
        assert self.start in vis and self.current in vis
        assert not vis & set(self.frontier)
        for f in self.frontier:
            assert any(v in vis for v in g.adjacency[f]), f"frontier {f} not adjacent to a visited node"
        expected = {n for v in vis for n in g.adjacency[v]} - vis
        assert expected == set(self.frontier)


def _known_path(g: NavGraph, visited: set, src: int, dst: int) -> list[int]:
    """Metric shortest path from ``src`` to ``dst`` whose interior uses visited nodes only."""
    allowed = visited | {dst}
    dist = {src: 0.0}
    pred: dict[int, int] = {}
    done = set()
    heap = [(0.0, src)]
    while heap:
        du, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == dst:
            break
        if u != src and u not in visited:
            continue
        for v in g.adjacency[u]:
            if v not in allowed:
                continue
            nd = du + g.edge_length(u, v)
            if v not in dist or nd < dist[v]:
                dist[v] = nd
                pred[v] = u
                heapq.heappush(heap, (nd, v))
    if dst not in dist:
        raise UnknownFrontier(f"{dst} is unreachable through explored nodes")
    path = [dst]
    while path[-1] != src:
        path.append(pred[path[-1]])
    return path[::-1]


def _reveal(g: NavGraph, state_visited: set, frontier: dict, start: int, node: int, qsource) -> None:
    traj = None
    for nb in g.adjacency[node]:
        if nb in state_visited or nb in frontier:
            continue
        if qsource is not None and traj is None:
            traj = _known_path(g, state_visited - {node}, start, node) if node != start else [start]
        q = qsource(g, traj, nb) if qsource is not None else None
        frontier[nb] = FrontierInfo(g.features[nb], q, node)


def initial_state(env: NavEnv, qsource: QSource | None = None) -> ExploredGraph:
    frontier: dict = {}
    _reveal(env.graph, {env.start}, frontier, env.start, env.start, qsource)
    return ExploredGraph(env.start, env.start, (env.start,), frontier)


def step(env: NavEnv, state: ExploredGraph, choice: int, qsource: QSource | None = None):
    """Walk to ``choice`` along known edges; returns ``(new_state, sub_path)``."""
    if choice not in state.frontier:
        raise UnknownFrontier(f"{choice} is not on the frontier")
    g = env.graph
    visited = set(state.visited)
    sub = _known_path(g, visited, state.current, choice)
    visited.add(choice)
    frontier = dict(state.frontier)
    info = frontier.pop(choice)
    visited_q = dict(state.visited_q)
    visited_q[choice] = info.q
    _reveal(g, visited, frontier, state.start, choice, qsource)
    new = ExploredGraph(state.start, choice, state.visited + (choice,), frontier, visited_q)
    return new, sub


def score_frontiers(
    env: NavEnv, state: ExploredGraph, weights: ScoreWeights, head=None, kind: str = "foresighted-gt-q",
) -> dict[int, float]:
    """Score every frontier node; lower is better."""
    if not state.frontier:
        raise EmptyFrontier("nothing left to explore")
    g, goal = env.graph, env.goal
    nodes = sorted(state.frontier)
    s1 = np.array([progress_s1(g, state.start, state.current, f, env.d1) for f in nodes])
    if kind == "history-only":
        sim = np.array([_cosine(state.frontier[f].feature, goal.goal_feature) for f in nodes])
        scores = -sim + weights.alpha * s1
        return dict(zip(nodes, scores.tolist()))
    head = head if head is not None else env.oracle_head()
    s2 = np.array([head(f, state.frontier[f].q, goal.goal_feature) for f in nodes])
    if weights.fusion == "weighted-sum":
        scores = weights.alpha * s1 + weights.beta * s2
    else:
        scores = -(weights.alpha * softmax(-s1 / weights.temperature)
                   + weights.beta * softmax(-s2 / weights.temperature))
    return dict(zip(nodes, scores.tolist()))


def argmin_frontier(scores: dict[int, float]) -> int:
    return min(scores, key=lambda f: (scores[f], f))


def expert_choice(env: NavEnv, state: ExploredGraph, tol: float = 1e-9) -> int:
    """Frontier minimizing ``dist(current, F) + dist(F, goal)`` on the full graph."""
    if not state.frontier:
        raise EmptyFrontier("nothing left to explore")
    g, goal = env.graph, env.goal.goal_node
    cost = {f: metric_distance(g, state.current, f) + metric_distance(g, f, goal) for f in state.frontier}
    best = min(cost.values())
    return min(f for f, c in cost.items() if c <= best + tol)


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def semantic_stop_score(feature: np.ndarray, goal_feature: np.ndarray) -> float:
    """(1 - cosine) / 2: the distance-to-go surrogate for agents without a head."""
    return (1.0 - _cosine(feature, goal_feature)) / 2.0


@dataclass
class EpisodeResult:
    world: str | int
    start: int
    goal_node: int
    radius: int
    agent: str
    path: list[int]
    choices: list[int]
    stop: str  # "stop-rule", "budget" or "exhausted"
    expert: list[int]

    def to_record(self) -> dict:
        return {"world": self.world, "goal": self.goal_node, "radius": self.radius, "agent": self.agent,
                "path": self.path, "frontchoices": self.choices, "stop": self.stop, "expert": self.expert}

    @classmethod
    def from_record(cls, rec: dict) -> "EpisodeResult":
        return cls(rec["world"], rec["path"][0], rec["goal"], rec.get("radius", 0), rec["agent"],
                   list(rec["path"]), list(rec["frontchoices"]), rec["stop"], list(rec["expert"]))


def run_episode(
    env: NavEnv,
    kind: str,
    weights: ScoreWeights = ScoreWeights(),
    budget: int = 30,
    stop_tau: float = 0.1,
    rng: SplitMix64 | None = None,
    head=None,
    qsource: QSource | None = None,
    stop_head=None,
    check_invariants: bool = False,
) -> EpisodeResult:
    """Run one episode for at most ``budget`` frontier decisions.

    Foresighted agents score frontiers with ``head`` (default: the oracle
    head) fed by ``qsource``. After each move the agent stops once the
    current node's estimated distance to go is at or below ``stop_tau``:
    ``stop_head`` evaluated on the node's own feature when given, otherwise
    the scoring head on the node's Q channel (foresighted) or
    :func:`semantic_stop_score` (history-only, random). The pseudo-expert
    stops on reaching the goal.
    """
    kind = resolve_kind(kind)
    foresighted = kind.startswith("foresighted")
    if foresighted and head is None:
        head = env.oracle_head()
    g, goal = env.graph, env.goal
    qs = qsource if foresighted and not isinstance(head, OracleHead) else None
    state = initial_state(env, qs)
    path = [env.start]
    choices: list[int] = []
    reason = "budget"
    for _ in range(budget):
        if not state.frontier:
            reason = "exhausted"
            break
        if kind == "pseudo-expert":
            choice = expert_choice(env, state)
        elif kind == "random":
            choice = rng.choice(sorted(state.frontier))
        else:
            choice = argmin_frontier(score_frontiers(env, state, weights, head, kind))
        state, sub = step(env, state, choice, qs)
        if check_invariants:
            state.check(g)
        path.extend(sub[1:])
        choices.append(choice)
        cur = state.current
        if kind == "pseudo-expert":
            done = cur == goal.goal_node
        elif stop_head is not None:
            done = stop_head(cur, g.features[cur], goal.goal_feature) <= stop_tau
        elif foresighted:
            done = head(cur, state.visited_q.get(cur), goal.goal_feature) <= stop_tau
        else:
            done = semantic_stop_score(g.features[cur], goal.goal_feature) <= stop_tau
        if done:
            reason = "stop-rule"
            break
    return EpisodeResult(env.world, env.start, goal.goal_node, goal.success_radius_hops, kind,
                         path, choices, reason, list(env.expert_path))


def sample_episodes(
    worlds: Sequence[NavGraph], n: int, seed: int, goal_noise: float = 0.1, radius: int = 0,
    min_hops: int = 3, world_ids: Sequence | None = None,
) -> list[NavEnv]:
    """Seeded (world, start, goal) draws with the goal at least ``min_hops`` from the start."""
    envs = []
    for i in range(n):
        rng = SplitMix64(derive_seed(seed, "episode", i))
        w = rng.randbelow(len(worlds))
        g = worlds[w]
        for _ in range(1000):
            start, goal_node = rng.randbelow(g.n), rng.randbelow(g.n)
            if hop_distances(g, start)[goal_node] >= max(1, min_hops):
                break
        else:
            raise RuntimeError(f"no start/goal pair {min_hops} hops apart in world {w}")
        goal = make_goal(g, goal_node, goal_noise, rng, radius)
        envs.append(NavEnv(g, start, goal, world_ids[w] if world_ids is not None else w))
    return envs
