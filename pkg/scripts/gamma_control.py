"""Does foresight matter, or just having a learned s2 head?

Runs the GT-Q agent with gamma=0 heads (one-step lookahead: the candidate's own
features) next to gamma=0.5 and the history-only baseline.

    python scripts/gamma_control.py --seeds 0,1,2
"""
import argparse

from qnav.evaluation import BenchConfig, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2")
    ap.add_argument("--gammas", default="0,0.5")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    seeds = [int(s) for s in args.seeds.split(",")]
    gammas = [float(g) for g in args.gammas.split(",")]
    cells = [BenchConfig(seed=s, gamma=g, agents=("history", "gtq")) for s in seeds for g in gammas]
    print("seed,gamma,agent,SR,OSR,SPL")
    for cfg, out in zip(cells, sweep(cells, args.workers)):
        for r in out.reports:
            print(f"{cfg.seed},{cfg.gamma:g},{r.agent},{r.SR:.4f},{r.OSR:.4f},{r.SPL:.4f}")


if __name__ == "__main__":
    main()
