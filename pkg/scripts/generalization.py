"""Held-out-world Q-model MSE against training-set size.

    python scripts/generalization.py --seeds 0,1,2,3,4 --sizes 100,1000,10000
"""
import argparse

from qnav.evaluation import BenchConfig, data_scaling


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0,1,2,3,4")
    ap.add_argument("--sizes", default="100,10000")
    args = ap.parse_args()
    sizes = [int(n) for n in args.sizes.split(",")]
    print("seed," + ",".join(f"mse_{n}" for n in sizes))
    for s in (int(t) for t in args.seeds.split(",")):
        res = data_scaling(BenchConfig(seed=s), sizes)
        print(f"{s}," + ",".join(f"{res[n]:.6f}" for n in sizes), flush=True)


if __name__ == "__main__":
    main()
