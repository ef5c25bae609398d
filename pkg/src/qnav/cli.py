"""Command-line front end: ``qnav <subcommand> [--flags]``.

Every stage reads a benchmark config (defaults, then ``--config`` JSON, then
explicit flags), derives its child seeds from ``--seed``, and writes its
artifacts atomically next to a ``manifest.json`` that records the config,
seeds and versions. Paths inside manifests are relative to the manifest, so
two runs in sibling directories produce identical bytes.
"""
from __future__ import annotations

import argparse
import json
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, rollout
from .agent import S2Head, resolve_kind
from .evaluation import (
    DEFAULT_GAMMAS,
    BenchConfig,
    check_report,
    compute_report,
    first_error_histogram,
    gamma_cells,
    policy_cells,
    reports_csv,
    run_agents,
    sweep,
    train_heads,
)
from .jsonio import atomic_write_text, read_json, read_jsonl, write_json, write_jsonl
from .qmodel import TrainConfig, encode_samples, load_params, save_params, train
from .qoracle import TrainingSample, build_training_set, revalidate
from .rng import derive_seed
from .worldgen import KINDS, generate, load_graph, save_graph

KIND_ALIASES = {"grid": "grid-rooms", "geometric": "random-geometric", "tree": "random-tree"}
MODE_ALIASES = {"canonical": rollout.CANONICAL, "all": rollout.SHORTEST_ALL, "random": rollout.UNIFORM,
                "uniform": rollout.UNIFORM}
HEAD_SOURCES = ("obs", "gt", "learned")


class CliError(Exception):
    """Bad input discovered after argument parsing; reported in one line."""


# -- argument helpers ---------------------------------------------------------

def _kind(s: str) -> str:
    k = KIND_ALIASES.get(s, s)
    if k not in KINDS:
        raise argparse.ArgumentTypeError(f"unknown kind {s!r}; choose from {sorted(KIND_ALIASES)} or {list(KINDS)}")
    return k


def _mode(s: str) -> str:
    m = MODE_ALIASES.get(s, s)
    if m not in rollout.MODES:
        raise argparse.ArgumentTypeError(f"unknown mode {s!r}; choose from {sorted(MODE_ALIASES)}")
    return m


def _gamma(s: str) -> float:
    try:
        g = float(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {s!r}") from None
    if not 0.0 <= g < 1.0:
        raise argparse.ArgumentTypeError(f"gamma must lie in [0, 1), got {g}")
    return g


def _csv_list(conv):
    def parse(s: str):
        items = [t.strip() for t in s.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty list")
        return [conv(t) for t in items]
    return parse


def _agent(s: str) -> str:
    try:
        resolve_kind(s)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return s


def _hidden(s: str) -> tuple[int, ...]:
    return tuple(int(t) for t in s.split(",") if t.strip())


def _common(p: argparse.ArgumentParser, out_required: bool = True) -> None:
    p.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    p.add_argument("--out", required=out_required, help="output directory")
    p.add_argument("--config", help="benchmark config JSON; explicit flags override it")
    p.add_argument("--workers", type=int, default=None, help="process-pool size")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qnav", description="Foresighted navigation on synthetic graphs.")
    ap.add_argument("--version", action="version", version=f"qnav {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-worlds", help="generate seeded world graphs")
    _common(p)
    p.add_argument("--kind", type=_kind)
    p.add_argument("--n", type=int, help="number of worlds")
    p.add_argument("--n-train", type=int, help="worlds in the training split (rest held out)")
    p.add_argument("--n-nodes", type=int)

    p = sub.add_parser("build-qdata", help="sample trajectories and ground-truth Q targets")
    _common(p)
    p.add_argument("--worlds", required=True, help="world manifest")
    p.add_argument("--n", type=int, help="number of training samples")
    p.add_argument("--gamma", type=_gamma)
    p.add_argument("--mode", type=_mode)
    p.add_argument("--mc-rollouts", type=int)
    p.add_argument("--max-traj-len", type=int)

    p = sub.add_parser("train-qmodel", help="fit the Q-feature regressor")
    _common(p)
    p.add_argument("--data", required=True, help="Q-data manifest")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--hidden", type=_hidden)

    p = sub.add_parser("train-s2", help="fit distance-to-go heads")
    _common(p)
    p.add_argument("--worlds", required=True, help="world manifest")
    p.add_argument("--qmodel", help="Q-model manifest (needed for the learned head)")
    p.add_argument("--heads", type=_csv_list(str), default=list(HEAD_SOURCES),
                   help=f"comma list from {HEAD_SOURCES}")
    p.add_argument("--head-mode", choices=("regression", "classification"))
    p.add_argument("--gamma", type=_gamma)
    p.add_argument("--mode", type=_mode)
    p.add_argument("--n", type=int, help="training pairs per head")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("run-bench", help="run agents on held-out worlds and report metrics")
    _common(p)
    p.add_argument("--worlds", required=True, help="world manifest")
    p.add_argument("--heads", required=True, help="s2 manifest")
    p.add_argument("--qmodel", help="Q-model manifest (needed for learnedq)")
    p.add_argument("--agents", type=_csv_list(_agent))
    p.add_argument("--episodes", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--stop-tau", type=float)

    p = sub.add_parser("ablate", help="full-pipeline sweeps over gamma and rollout policy")
    _common(p)
    p.add_argument("--gammas", type=_csv_list(_gamma), default=None,
                   help="comma list of decay ratios (default 0,0.3,0.5,0.7)")
    p.add_argument("--modes", type=_csv_list(_mode), default=None, help="also sweep rollout policies")
    p.add_argument("--agents", type=_csv_list(_agent), default=["learnedq"])
    p.add_argument("--episodes", type=int)

    p = sub.add_parser("export-supports", help="per-candidate support maps of one world")
    _common(p)
    p.add_argument("--world", required=True, help="graph JSON file")
    p.add_argument("--origin", type=int, help="decision node (default: every node)")
    p.add_argument("--gamma", type=_gamma)
    p.add_argument("--mode", type=_mode)

    p = sub.add_parser("verify", help="run the invariant battery")
    _common(p, out_required=False)
    return ap


# -- config and manifests -----------------------------------------------------

def load_bench(args, base: BenchConfig | None = None, **overrides) -> BenchConfig:
    """``--config`` if given, else ``base`` (an upstream manifest's config), else defaults; then flags."""
    bench = base or BenchConfig()
    if getattr(args, "config", None):
        try:
            bench = BenchConfig.from_dict(read_json(args.config))
        except (TypeError, ValueError) as exc:
            raise CliError(f"bad config {args.config}: {exc}") from None
    changes = {k: v for k, v in overrides.items() if v is not None}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "workers", None) is not None:
        changes["workers"] = args.workers
    return bench.replace(**changes)


def _versions() -> dict:
    return {"qnav": __version__, "numpy": np.__version__, "python": platform.python_version()}


def write_manifest(out: Path, command: str, bench: BenchConfig, seeds: dict, files: list[str],
                   **extra) -> None:
    data = {"tool": "qnav", "command": command, "versions": _versions(), "seed": bench.seed,
            "seeds": seeds, "config": bench.to_dict(), **extra, "files": files}
    write_json(out / "manifest.json", data)


def read_manifest(path: str | os.PathLike, command: str) -> tuple[Path, dict]:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    if not path.is_file():
        raise CliError(f"missing manifest {path}")
    data = read_json(path)
    if data.get("command") != command:
        raise CliError(f"{path} is a {data.get('command')!r} manifest, expected {command!r}")
    return path.parent, data


def _rel(target: Path, base: Path) -> str:
    return os.path.relpath(target.resolve(), base.resolve())


def load_worlds(path) -> tuple[Path, dict, dict]:
    """World manifest -> (dir, manifest, {"train": [(name, g)], "eval": [...]})."""
    root, man = read_manifest(path, "gen-worlds")
    split = {"train": [], "eval": []}
    for rec in man["worlds"]:
        split[rec["split"]].append((rec["name"], load_graph(root / rec["file"])))
    return root, man, split


def _resolve(base: Path, rel: str) -> Path:
    return (base / rel).resolve()


# -- subcommands --------------------------------------------------------------

def cmd_gen_worlds(args) -> str:
    bench = load_bench(args)
    world = bench.world
    if args.kind:
        world = world.replace(kind=args.kind)
    if args.n_nodes:
        world = world.replace(n_nodes=args.n_nodes)
    n = args.n if args.n is not None else bench.n_worlds
    n_train = args.n_train if args.n_train is not None else (bench.n_train_worlds if args.n is None
                                                              else max(1, n - max(1, n // 5)))
    if n < 1 or not 1 <= n_train <= n:
        raise CliError(f"need n >= 1 and 1 <= n_train <= n, got n={n}, n_train={n_train}")
    bench = bench.replace(world=world, n_worlds=n, n_train_worlds=n_train)
    out = Path(args.out)
    recs, seeds = [], {}
    for i in range(n):
        s = derive_seed(bench.seed, "world", i)
        name = f"world_{i:03d}"
        save_graph(generate(world.replace(seed=s)), out / f"{name}.json")
        recs.append({"name": name, "file": f"{name}.json", "seed": s,
                     "split": "train" if i < n_train else "eval"})
        seeds[name] = s
    write_manifest(out, "gen-worlds", bench, seeds, [r["file"] for r in recs], worlds=recs)
    return f"wrote {n} worlds ({n_train} train) to {out}"


def cmd_build_qdata(args) -> str:
    wroot, wman, split = load_worlds(args.worlds)
    base = BenchConfig.from_dict(wman["config"])
    bench = load_bench(args, base, gamma=args.gamma, mode=args.mode, mc_rollouts=args.mc_rollouts,
                       n_qsamples=args.n, max_traj_len=args.max_traj_len)
    bench = bench.replace(world=base.world)
    cfg = bench.oracle()
    out = Path(args.out)
    seeds = {"train": derive_seed(bench.seed, "qdata"), "val": derive_seed(bench.seed, "qdata-val")}
    stats = {}
    files = []
    for part, n in (("train", bench.n_qsamples), ("val", max(1, bench.n_qsamples // 5))):
        named = split["train" if part == "train" else "eval"] or split["train"]
        names, graphs = [nm for nm, _ in named], [g for _, g in named]
        samples = build_training_set(graphs, n, cfg, bench.max_traj_len, seeds[part], bench.workers)
        if cfg.mode in rollout.SHORTEST_MODES:
            for s in samples:
                if not revalidate(s, graphs, cfg):
                    raise CliError(f"sample failed revalidation: world {names[s.world]} traj {s.trajectory}")
        write_jsonl(out / f"{part}.jsonl", [s.to_record(names) for s in samples])
        files.append(f"{part}.jsonl")
        stats[part] = {"samples": len(samples), "worlds": names,
                       "mean_traj_len": float(np.mean([len(s.trajectory) for s in samples])),
                       "gamma": cfg.gamma, "mode": cfg.mode}
    write_json(out / "stats.json", stats)
    files.append("stats.json")
    write_manifest(out, "build-qdata", bench, seeds, files, worlds=_rel(wroot / "manifest.json", out),
                   stats=stats)
    return f"wrote {stats['train']['samples']} train / {stats['val']['samples']} val samples to {out}"


def _load_samples(root: Path, part: str, names: list[str]):
    index = {nm: i for i, nm in enumerate(names)}
    try:
        return [TrainingSample.from_record(r, index) for r in read_jsonl(root / f"{part}.jsonl")]
    except KeyError as exc:
        raise CliError(f"{part}.jsonl references unknown world {exc}") from None


def cmd_train_qmodel(args) -> str:
    droot, dman = read_manifest(args.data, "build-qdata")
    _, _, split = load_worlds(_resolve(droot, dman["worlds"]))
    bench = load_bench(args, BenchConfig.from_dict(dman["config"]))
    q = TrainConfig(**{**bench.qtrain.__dict__, **{k: v for k, v in
                       (("epochs", args.epochs), ("lr", args.lr), ("hidden", args.hidden)) if v is not None}})
    bench = bench.replace(qtrain=q)
    tr = split["train"]
    ev = split["eval"] or split["train"]
    samples = _load_samples(droot, "train", dman["stats"]["train"]["worlds"])
    val = _load_samples(droot, "val", dman["stats"]["val"]["worlds"])
    X, Y = encode_samples(samples, [g for _, g in tr])
    Xv, Yv = encode_samples(val, [g for _, g in ev])
    seed = derive_seed(bench.seed, "qtrain") % 2**32
    params, hist = train(X, Y, TrainConfig(**{**q.__dict__, "seed": seed}), val=(Xv, Yv))
    out = Path(args.out)
    save_params(params, out / "qmodel.json")
    atomic_write_text(out / "loss.csv", hist.to_csv())
    write_manifest(out, "train-qmodel", bench, {"qtrain": seed}, ["qmodel.json", "loss.csv"],
                   data=_rel(droot / "manifest.json", out), gamma=dman["config"]["gamma"],
                   final={"train_mse": hist.train[-1], "val_mse": hist.val[-1]})
    return f"trained Q-model: train MSE {hist.train[-1]:.4g}, held-out MSE {hist.val[-1]:.4g}"


def _qparams(qmodel_arg, out: Path):
    if not qmodel_arg:
        return None, None
    root, man = read_manifest(qmodel_arg, "train-qmodel")
    return load_params(root / "qmodel.json"), _rel(root / "manifest.json", out)


def cmd_train_s2(args) -> str:
    _, wman, split = load_worlds(args.worlds)
    out = Path(args.out)
    for h in args.heads:
        if h not in HEAD_SOURCES:
            raise CliError(f"unknown head source {h!r}; choose from {HEAD_SOURCES}")
    if "obs" not in args.heads:
        args.heads = ["obs", *args.heads]
    qparams, qrel = _qparams(args.qmodel, out)
    if "learned" in args.heads and qparams is None:
        raise CliError("the learned head needs --qmodel")
    base = BenchConfig.from_dict(wman["config"])
    bench = load_bench(args, base, gamma=args.gamma, mode=args.mode, s2_samples=args.n, s2_mode=args.head_mode)
    if args.epochs is not None:
        bench = bench.replace(s2train=TrainConfig(**{**bench.s2train.__dict__, "epochs": args.epochs}))
    bench = bench.replace(world=base.world)
    tr = [g for _, g in split["train"]]
    ev = [g for _, g in split["eval"]] or None
    heads, hists = train_heads(bench, tr, ev, qparams, list(dict.fromkeys(args.heads)))
    files = []
    for src, head in heads.items():
        write_json(out / f"head_{src}.json", head.to_dict())
        atomic_write_text(out / f"loss_{src}.csv", hists[src].to_csv())
        files += [f"head_{src}.json", f"loss_{src}.csv"]
    seeds = {"s2data": derive_seed(bench.seed, "s2data"), "s2train": derive_seed(bench.seed, "s2train") % 2**32}
    write_manifest(out, "train-s2", bench, seeds, files, heads=sorted(heads), qmodel=qrel)
    return f"trained heads {', '.join(heads)} to {out}"


def cmd_run_bench(args) -> str:
    _, wman, split = load_worlds(args.worlds)
    hroot, hman = read_manifest(args.heads, "train-s2")
    out = Path(args.out)
    base = BenchConfig.from_dict(hman["config"])
    bench = load_bench(args, base, agents=tuple(args.agents) if args.agents else None,
                       n_episodes=args.episodes, budget=args.budget, stop_tau=args.stop_tau)
    # Q-features seen by the agents must match the ones the heads were trained on
    bench = bench.replace(gamma=base.gamma, mode=base.mode)
    kinds = [resolve_kind(a) for a in bench.agents]
    heads = {src: S2Head.from_dict(read_json(hroot / f"head_{src}.json")) for src in hman["heads"]}
    need = {"foresighted-gt-q": "gt", "foresighted-learned-q": "learned"}
    for k in kinds:
        if k in need and need[k] not in heads:
            raise CliError(f"agent {k} needs the {need[k]!r} head, which {args.heads} lacks")
    qparams, qrel = _qparams(args.qmodel, out)
    if "foresighted-learned-q" in kinds and qparams is None:
        raise CliError("agent learnedq needs --qmodel")
    if not split["eval"]:
        raise CliError("world manifest has no held-out worlds")
    names = [nm for nm, _ in split["eval"]]
    graphs = dict(split["eval"])
    episodes = run_agents(bench, [g for _, g in split["eval"]], names, qparams, heads)
    reports = [compute_report(res, graphs, kind, bench.gamma, bench.mode) for kind, res in episodes.items()]
    for rep in reports:
        if not check_report(rep):
            raise CliError(f"metric ordering violated for {rep.agent}: {rep}")
    files = ["episodes.jsonl", "report.csv"]
    write_jsonl(out / "episodes.jsonl", [r.to_record() for res in episodes.values() for r in res])
    atomic_write_text(out / "report.csv", reports_csv(reports))
    for kind, res in episodes.items():
        atomic_write_text(out / f"histogram_{kind}.csv", first_error_histogram(res).to_csv())
        files.append(f"histogram_{kind}.csv")
    write_manifest(out, "run-bench", bench, {"episodes": derive_seed(bench.seed, "episodes")}, files,
                   heads=_rel(hroot / "manifest.json", out), qmodel=qrel)
    return "\n".join(",".join(map(str, rep.row())) for rep in reports)


def _write_cells(out: Path, tag: str, outs, key) -> list[str]:
    files = []
    for o in outs:
        cell = f"{tag}_{key(o)}"
        write_jsonl(out / f"episodes_{cell}.jsonl",
                    [r.to_record() for res in o.episodes.values() for r in res])
        files.append(f"episodes_{cell}.jsonl")
    return files


def cmd_ablate(args) -> str:
    bench = load_bench(args, n_episodes=args.episodes)
    out = Path(args.out)
    gammas = args.gammas if args.gammas is not None else list(DEFAULT_GAMMAS)
    cells = gamma_cells(bench, gammas, args.agents)
    outs = sweep(cells, bench.workers)
    reports = [r for o in outs for r in o.reports]
    atomic_write_text(out / "gamma.csv", reports_csv(reports))
    files = ["gamma.csv"] + _write_cells(out, "gamma", outs, lambda o: format(o.reports[0].gamma, "g"))
    lines = [",".join(map(str, r.row())) for r in reports]
    if args.modes:
        pouts = sweep(policy_cells(bench, args.modes, args.agents), bench.workers)
        preps = [r for o in pouts for r in o.reports]
        atomic_write_text(out / "policy.csv", reports_csv(preps))
        files += ["policy.csv"] + _write_cells(out, "policy", pouts, lambda o: o.reports[0].mode)
        lines += [",".join(map(str, r.row())) for r in preps]
    for i, g in enumerate(outs[0].worlds):
        save_graph(g, out / "worlds" / f"world_{i:03d}.json")
    write_manifest(out, "ablate", bench, {"master": bench.seed}, files, gammas=list(map(float, gammas)),
                   modes=args.modes or [])
    return "\n".join(lines)


def cmd_export_supports(args) -> str:
    bench = load_bench(args, gamma=args.gamma, mode=args.mode)
    try:
        g = load_graph(args.world)
    except FileNotFoundError:
        raise CliError(f"missing world file {args.world}") from None
    rollout.check_mode(bench.mode, rollout.SHORTEST_MODES)
    origins = [args.origin] if args.origin is not None else list(range(g.n))
    if any(not 0 <= o < g.n for o in origins):
        raise CliError(f"origin {args.origin} outside 0..{g.n - 1}")
    maps = []
    for o in origins:
        cands = rollout.export_support_map(g, o, bench.mode, bench.gamma)
        owned = [v["id"] for c in cands for v in c["nodes"]]
        maps.append({"origin": o, "disjoint": len(owned) == len(set(owned)), "candidates": cands})
    out = Path(args.out)
    write_json(out / "supports.json", {"gamma": bench.gamma, "mode": bench.mode, "maps": maps})
    write_manifest(out, "export-supports", bench, {}, ["supports.json"], world=os.path.basename(args.world))
    n_overlap = sum(not m["disjoint"] for m in maps)
    return f"exported {len(maps)} support maps; {n_overlap} with overlapping supports"


def cmd_verify(args) -> str:
    from .verify import run_all

    seed = args.seed if args.seed is not None else 0
    checks = run_all(seed, print)
    if args.out:
        write_json(Path(args.out) / "verify.json",
                   {"seed": seed, "versions": _versions(),
                    "checks": [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in checks]})
    failed = [c.name for c in checks if not c.ok]
    if failed:
        raise CliError(f"{len(failed)} invariant check(s) failed: {', '.join(failed)}")
    return f"all {len(checks)} invariant checks passed"


COMMANDS = {
    "gen-worlds": cmd_gen_worlds,
    "build-qdata": cmd_build_qdata,
    "train-qmodel": cmd_train_qmodel,
    "train-s2": cmd_train_s2,
    "run-bench": cmd_run_bench,
    "ablate": cmd_ablate,
    "export-supports": cmd_export_supports,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        msg = COMMANDS[args.command](args)
    except (CliError, ValueError, RuntimeError, OSError, KeyError, json.JSONDecodeError) as exc:
        text = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"qnav {args.command}: error: {text}", file=sys.stderr)
        return 1
    if msg:
        print(msg)
    return 0


if __name__ == "__main__":
    sys.exit(main())
