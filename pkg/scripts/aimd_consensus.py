"""Consensus of utility derivatives under AIMD, compared with the water-filling optimum.

    python3 scripts/aimd_consensus.py --seeds 20
    python3 scripts/aimd_consensus.py --beta 0.5 --seeds 5
"""

import argparse
import dataclasses
from pathlib import Path

import numpy as np

from sponge.aimd import kkt_oracle
from sponge.engine import run_scenario
from sponge.io import load_scenario

ROOT = Path(__file__).resolve().parent.parent


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--beta", type=float, default=None)
    ap.add_argument("--alpha", type=float, default=None)
    args = ap.parse_args()

    base = load_scenario(ROOT / "scenarios" / "aimd_consensus.json")
    ctrl = base.controller
    if args.beta is not None:
        ctrl = dataclasses.replace(ctrl, beta=args.beta)
    if args.alpha is not None:
        ctrl = dataclasses.replace(ctrl, alpha=args.alpha)

    print(f"{'seed':>4} {'cv':>7} {'within15%':>9} {'delivered':>9} {'time':>6}")
    for seed in range(args.seeds):
        sc = dataclasses.replace(base, controller=ctrl, fleet=dataclasses.replace(base.fleet, seed=seed))
        _, summary = run_scenario(sc)
        agents = [a for a in summary.agents if a["in_consensus"]]
        a = np.array([g["a"] for g in agents])
        x = np.array([g["share"] for g in agents])
        opt = kkt_oracle(a, float(x.sum()))
        within = np.mean(np.abs(x - opt) / np.maximum(opt, 0.05) <= 0.15)
        w = summary.windows[0]
        print(f"{seed:>4} {summary.consensus_spread:7.4f} {within:9.2f} {w.achieved / w.target:9.4f} "
              f"{summary.wall_clock_s:6.2f}")


if __name__ == "__main__":
    main()
