"""Navigation metrics, first-error analysis and the benchmark/ablation runners."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Mapping, Sequence

from .agent import (
    GroundTruthQ,
    LearnedQ,
    ObservationQ,
    ScoreWeights,
    EpisodeResult,
    resolve_kind,
    run_episode,
    sample_episodes,
    train_s2_head,
)
from .navgraph import NavGraph, hop_distances, metric_distance, path_length
from .qmodel import TrainConfig, encode_samples, evaluate_loss, train
from .qoracle import QOracleConfig, build_training_set
from .rng import SplitMix64, derive_seed
from .rollout import CANONICAL, UNIFORM
from .worldgen import WorldConfig, generate

DEFAULT_GAMMAS = (0.0, 0.3, 0.5, 0.7)


def success(result: EpisodeResult, g: NavGraph) -> bool:
    """Final node within ``radius`` hops of the goal."""
    return hop_distances(g, result.goal_node)[result.path[-1]] <= result.radius


def oracle_success(result: EpisodeResult, g: NavGraph) -> bool:
    hops = hop_distances(g, result.goal_node)
    return any(hops[v] <= result.radius for v in result.path)


def spl_contribution(result: EpisodeResult, g: NavGraph) -> float:
    if not success(result, g):
        return 0.0
    best = metric_distance(g, result.start, result.goal_node)
    taken = path_length(g, result.path)
    denom = max(taken, best)
    return 1.0 if denom == 0 else best / denom


def _mean(xs) -> float:
    xs = list(xs)
    return float(sum(xs) / len(xs)) if xs else 0.0


def sr(results: Sequence[EpisodeResult], graphs: Mapping) -> float:
    return _mean(success(r, graphs[r.world]) for r in results)


def osr(results: Sequence[EpisodeResult], graphs: Mapping) -> float:
    return _mean(oracle_success(r, graphs[r.world]) for r in results)


def spl(results: Sequence[EpisodeResult], graphs: Mapping) -> float:
    return _mean(spl_contribution(r, graphs[r.world]) for r in results)


@dataclass(frozen=True)
class MetricsReport:
    agent: str
    gamma: float | None
    mode: str | None
    n: int
    SR: float
    OSR: float
    SPL: float
    mean_len: float

    def row(self) -> list:
        g = "" if self.gamma is None else format(self.gamma, "g")
        return [self.agent, g, self.mode or "", self.n, *(format(v, ".6f") for v in
                (self.SR, self.OSR, self.SPL, self.mean_len))]


REPORT_HEADER = ["agent", "gamma", "mode", "n", "SR", "OSR", "SPL", "mean_len"]


def compute_report(results: Sequence[EpisodeResult], graphs: Mapping, agent: str | None = None,
                   gamma: float | None = None, mode: str | None = None) -> MetricsReport:
    agent = agent if agent is not None else (results[0].agent if results else "")
    return MetricsReport(
        agent, gamma, mode, len(results),
        sr(results, graphs), osr(results, graphs), spl(results, graphs),
        _mean(path_length(graphs[r.world], r.path) for r in results),
    )


def reports_csv(reports: Sequence[MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for rep in reports:
        w.writerow(rep.row())
    return buf.getvalue()


def first_error_index(result: EpisodeResult) -> int | None:
    """Decision index of the first choice off the expert path; ``None`` if identical."""
    expert = result.expert[1:]
    for k, (c, e) in enumerate(zip(result.choices, expert)):
        if c != e:
            return k
    if len(result.choices) == len(expert):
        return None
    return min(len(result.choices), len(expert))


@dataclass
class ErrorHistogram:
    bins: dict = field(default_factory=dict)
    identical: int = 0

    @property
    def total(self) -> int:
        return self.identical + sum(self.bins.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "count"])
        for k in sorted(self.bins):
            w.writerow([k, self.bins[k]])
        w.writerow(["identical", self.identical])
        return buf.getvalue()


def first_error_histogram(results: Sequence[EpisodeResult]) -> ErrorHistogram:
    hist = ErrorHistogram()
    for r in results:
        k = first_error_index(r)
        if k is None:
            hist.identical += 1
        else:
            hist.bins[k] = hist.bins.get(k, 0) + 1
    return hist


# -- benchmark pipeline -------------------------------------------------------

@dataclass(frozen=True)
class BenchConfig:
    seed: int = 0
    world: WorldConfig = WorldConfig()
    n_worlds: int = 10
    n_train_worlds: int = 8
    gamma: float = 0.5
    mode: str = CANONICAL
    mc_rollouts: int = 32
    n_qsamples: int = 5000
    max_traj_len: int = 8
    qtrain: TrainConfig = TrainConfig()
    s2_samples: int = 10000
    s2_mode: str = "regression"
    s2train: TrainConfig = TrainConfig(hidden=(128,), epochs=60, lr=3e-3)
    n_episodes: int = 200
    budget: int = 40
    stop_tau: float = 0.4
    goal_noise: float = 0.1
    success_radius_hops: int = 2
    min_goal_hops: int = 4
    weights: ScoreWeights = ScoreWeights()
    agents: tuple[str, ...] = ("random", "history", "gtq", "learnedq", "expert")
    workers: int = 1

    def oracle(self) -> QOracleConfig:
        return QOracleConfig(self.gamma, self.mode, self.mc_rollouts)

    def replace(self, **changes) -> "BenchConfig":
        return BenchConfig(**{**{f.name: getattr(self, f.name) for f in fields(self)}, **changes})

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BenchConfig":
        data = dict(data)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown BenchConfig keys: {sorted(unknown)}")
        if "world" in data and isinstance(data["world"], dict):
            data["world"] = WorldConfig.from_dict(data["world"])
        for key in ("qtrain", "s2train"):
            if key in data and isinstance(data[key], dict):
                d = dict(data[key])
                if "hidden" in d:
                    d["hidden"] = tuple(d["hidden"])
                data[key] = TrainConfig(**d)
        if "weights" in data and isinstance(data["weights"], dict):
            data["weights"] = ScoreWeights(**data["weights"])
        if "agents" in data:
            data["agents"] = tuple(data["agents"])
        return cls(**data)


def build_worlds(bench: BenchConfig) -> list[NavGraph]:
    return [generate(bench.world.replace(seed=derive_seed(bench.seed, "world", i)))
            for i in range(bench.n_worlds)]


@dataclass
class QStage:
    samples: list
    val_samples: list
    params: object
    history: object


def train_q_stage(bench: BenchConfig, train_worlds, val_worlds) -> QStage:
    cfg = bench.oracle()
    samples = build_training_set(train_worlds, bench.n_qsamples, cfg, bench.max_traj_len,
                                 derive_seed(bench.seed, "qdata"), bench.workers)
    val_samples = build_training_set(val_worlds, max(1, bench.n_qsamples // 5), cfg, bench.max_traj_len,
                                     derive_seed(bench.seed, "qdata-val"), bench.workers)
    X, Y = encode_samples(samples, train_worlds)
    Xv, Yv = encode_samples(val_samples, val_worlds)
    tcfg = TrainConfig(**{**bench.qtrain.__dict__, "seed": derive_seed(bench.seed, "qtrain") % 2**32})
    params, hist = train(X, Y, tcfg, val=(Xv, Yv))
    return QStage(samples, val_samples, params, hist)


def gt_qsource(bench: BenchConfig) -> GroundTruthQ:
    if bench.mode == UNIFORM:
        # exact targets only exist for the shortest modes
        return GroundTruthQ(QOracleConfig(bench.gamma, CANONICAL))
    return GroundTruthQ(bench.oracle())


def train_heads(bench: BenchConfig, train_worlds, val_worlds, qparams, which=("gt", "learned")):
    heads, hists = {}, {}
    s2cfg = TrainConfig(**{**bench.s2train.__dict__, "seed": derive_seed(bench.seed, "s2train") % 2**32})
    for src in which:
        qsource = {"gt": gt_qsource(bench), "obs": ObservationQ()}.get(src) or LearnedQ(qparams)
        heads[src], hists[src] = train_s2_head(
            train_worlds, qsource, bench.s2_samples, s2cfg, bench.s2_mode,
            derive_seed(bench.seed, "s2data"), bench.goal_noise, val_worlds)
    return heads, hists


def run_agents(bench: BenchConfig, eval_worlds, world_ids, qparams, heads) -> dict[str, list[EpisodeResult]]:
    envs = sample_episodes(eval_worlds, bench.n_episodes, derive_seed(bench.seed, "episodes"),
                           bench.goal_noise, bench.success_radius_hops, bench.min_goal_hops, world_ids)
    out = {}
    for name in bench.agents:
        kind = resolve_kind(name)
        head = qsource = None
        if kind == "foresighted-gt-q":
            head, qsource = heads["gt"], gt_qsource(bench)
        elif kind == "foresighted-learned-q":
            head, qsource = heads["learned"], LearnedQ(qparams)
        results = []
        for i, env in enumerate(envs):
            rng = SplitMix64(derive_seed(bench.seed, "agent-rng", kind, i))
            results.append(run_episode(env, kind, bench.weights, bench.budget, bench.stop_tau,
                                       rng, head, qsource, stop_head=heads.get("obs")))
        out[kind] = results
    return out


@dataclass
class PipelineOutput:
    worlds: list
    q: QStage
    heads: dict
    head_histories: dict
    episodes: dict
    reports: list


def run_pipeline(bench: BenchConfig) -> PipelineOutput:
    """worlds -> Q data -> Q-model -> s2 heads -> episodes on held-out worlds -> metrics."""
    worlds = build_worlds(bench)
    tr, ev = worlds[: bench.n_train_worlds], worlds[bench.n_train_worlds:]
    if not ev:
        raise ValueError("need at least one held-out world")
    q = train_q_stage(bench, tr, ev)
    kinds = {resolve_kind(a) for a in bench.agents}
    which = ["obs"] + [s for s, k in (("gt", "foresighted-gt-q"), ("learned", "foresighted-learned-q"))
                       if k in kinds]
    heads, hh = train_heads(bench, tr, ev, q.params, which)
    ids = list(range(bench.n_train_worlds, bench.n_worlds))
    episodes = run_agents(bench, ev, ids, q.params, heads)
    graphs = dict(enumerate(worlds))
    reports = [compute_report(res, graphs, kind, bench.gamma, bench.mode) for kind, res in episodes.items()]
    return PipelineOutput(worlds, q, heads, hh, episodes, reports)


def sweep(benches: Sequence[BenchConfig], workers: int = 1) -> list[PipelineOutput]:
    """Run independent pipeline cells, in a process pool when ``workers > 1``.

    Each cell is a pure function of its config, so the output order and
    content do not depend on ``workers``.
    """
    benches = list(benches)
    if workers <= 1 or len(benches) < 2:
        return [run_pipeline(b) for b in benches]
    with ProcessPoolExecutor(max_workers=min(workers, len(benches))) as pool:
        return list(pool.map(run_pipeline, benches))


def gamma_cells(bench: BenchConfig, gammas: Sequence[float] = DEFAULT_GAMMAS,
                agents: Sequence[str] = ("learnedq",)) -> list[BenchConfig]:
    if not gammas:
        raise ValueError("empty gamma list")
    return [bench.replace(gamma=float(g), agents=tuple(agents)) for g in gammas]


def policy_cells(bench: BenchConfig, modes: Sequence[str] = (CANONICAL, UNIFORM),
                 agents: Sequence[str] = ("learnedq",)) -> list[BenchConfig]:
    if not modes:
        raise ValueError("empty mode list")
    return [bench.replace(mode=m, agents=tuple(agents)) for m in modes]


def ablate_gamma(bench: BenchConfig, gammas: Sequence[float] = DEFAULT_GAMMAS,
                 agents: Sequence[str] = ("learnedq",), workers: int = 1) -> list[MetricsReport]:
    """Full pipeline once per decay ratio; one report row per (gamma, agent)."""
    return [r for out in sweep(gamma_cells(bench, gammas, agents), workers) for r in out.reports]


def ablate_policy(bench: BenchConfig, modes: Sequence[str] = (CANONICAL, UNIFORM),
                  agents: Sequence[str] = ("learnedq",), workers: int = 1) -> list[MetricsReport]:
    """Full pipeline once per rollout policy; the random policy uses Monte-Carlo targets."""
    return [r for out in sweep(policy_cells(bench, modes, agents), workers) for r in out.reports]


def check_report(rep: MetricsReport, tol: float = 1e-12) -> bool:
    return -tol <= rep.SPL <= rep.SR + tol and rep.SR <= rep.OSR + tol and rep.OSR <= 1 + tol


def data_scaling(bench: BenchConfig, sizes: Sequence[int] = (100, 10_000), n_val: int = 1000) -> dict[int, float]:
    """Held-out-world Q-model MSE after training on each of ``sizes`` samples.

    Smaller sets are prefixes of the largest, and every size gets the same
    number of optimizer steps (the default epoch count at the largest size),
    so only the amount of data differs between runs.
    """
    worlds = build_worlds(bench)
    tr, ev = worlds[: bench.n_train_worlds], worlds[bench.n_train_worlds:]
    if not ev:
        raise ValueError("need at least one held-out world")
    cfg = bench.oracle()
    pool = build_training_set(tr, max(sizes), cfg, bench.max_traj_len, derive_seed(bench.seed, "qdata"),
                              bench.workers)
    val = build_training_set(ev, n_val, cfg, bench.max_traj_len, derive_seed(bench.seed, "qdata-val"),
                             bench.workers)
    X, Y = encode_samples(pool, tr)
    Xv, Yv = encode_samples(val, ev)
    q = bench.qtrain
    steps = q.epochs * -(-max(sizes) // q.batch_size)
    out = {}
    for n in sizes:
        epochs = max(1, round(steps / -(-n // q.batch_size)))
        tcfg = TrainConfig(**{**q.__dict__, "epochs": epochs, "seed": derive_seed(bench.seed, "qtrain") % 2**32})
        params, _ = train(X[:n], Y[:n], tcfg)
        out[n] = evaluate_loss(params, Xv, Yv, q.loss)
    return out
