"""GT-Q uplift over the history-only baseline on the default benchmark, per seed.

The seed-0 margins are the ones pinned by the acceptance suite.

    python scripts/pilot_uplift.py --seeds 0,1,2 --workers 3
"""
import argparse

from qnav.evaluation import BenchConfig, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0", help="comma-separated master seeds")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]
    outs = sweep([BenchConfig(seed=s) for s in seeds], args.workers)
    print("seed,dSR,dSPL,gtq_SR,gtq_SPL,hist_SR,hist_SPL,expert_SR")
    for s, out in zip(seeds, outs):
        rep = {r.agent: r for r in out.reports}
        gt, hi, ex = rep["foresighted-gt-q"], rep["history-only"], rep["pseudo-expert"]
        print(f"{s},{gt.SR - hi.SR:+.4f},{gt.SPL - hi.SPL:+.4f},{gt.SR:.4f},{gt.SPL:.4f},"
              f"{hi.SR:.4f},{hi.SPL:.4f},{ex.SR:.4f}")


if __name__ == "__main__":
    main()
