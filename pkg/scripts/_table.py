"""Shared driver: simulate a bundled delay grid and compare with its reference."""
import argparse
import time

import numpy as np

from sumshrink.config import load_config
from sumshrink.engine import set_threads
from sumshrink.experiments import run_table


def main(config: str, mult: float = 3.0) -> None:
    p = argparse.ArgumentParser(description=f"Reproduce the {config} delay grid.")
    p.add_argument("--reps", type=int, default=2500)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    args = p.parse_args()
    set_threads(args.threads)
    cfg = load_config(config)
    cfg.reps = args.reps
    if args.seed is not None:
        cfg.seed = args.seed
    ref = cfg.reference
    se = np.array(ref["se_max"])
    counts = [len(sc.affected) for sc in cfg.change_scenarios()]
    print(f"{cfg.name}: {cfg.delay_reps} reps, seed {cfg.seed}")
    print(f"{'scheme':>18s} " + " ".join(f"{m:>7d}" for m in counts))
    t0 = time.time()
    table = run_table(cfg.experiment())
    hits = 0
    for i, spec in enumerate(table.schemes):
        sim = table.means()[i]
        pub = np.array(ref["delays"][spec.name])
        z = (sim - pub) / se
        hits += int(np.sum(np.abs(z) <= mult))
        print(f"{spec.name:>18s} " + " ".join(f"{v:7.2f}" for v in sim))
        print(f"{'published':>18s} " + " ".join(f"{v:7.1f}" for v in pub))
        print(f"{'dev/maxSE':>18s} " + " ".join(f"{v:+7.1f}" for v in z))
    lo = [f"{a:.2f}" for a, _ in table.se_range()]
    hi = [f"{b:.2f}" for _, b in table.se_range()]
    print(f"{'min SE':>18s} " + " ".join(f"{v:>7s}" for v in lo))
    print(f"{'max SE':>18s} " + " ".join(f"{v:>7s}" for v in hi))
    n = len(table.cells)
    print(f"{hits}/{n} cells within {mult:g} published max-SE ({time.time() - t0:.0f} s)")
