"""Adjacency ablation: train short runs with each graph wiring and compare.

Trains one model per graph type on identical data and seeds, then reports
final reconstruction loss and 400 ms error on held-out sequences. Short
budget per arm; intended for relative comparison, not converged numbers.
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from natmotion import data as dt
from natmotion import evaluate as ev
from natmotion import model as md
from natmotion import training as tr
from natmotion.skeleton import GRAPH_TYPES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--iters", type=int, default=80)
    ap.add_argument("--batch", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    train_seqs = dt.generate_synthetic(dt.SyntheticSpec(
        class_count=3, joints=8, sequences_per_class=60, seed=args.seed))
    held_seqs = dt.generate_synthetic(dt.SyntheticSpec(
        class_count=3, joints=8, sequences_per_class=10, seed=args.seed + 1))
    tcfg = tr.TrainConfig(iterations=args.iters, batch=args.batch,
                          horizon=10, seed=args.seed)

    print(f"{args.iters} iterations per arm")
    print("  graph          recst   400ms err")
    for graph in GRAPH_TYPES:
        cfg = md.ModelConfig(tree=train_seqs[0].tree, class_count=3,
                             graph_type=graph, graph_seed=args.seed)
        t0 = time.perf_counter()
        params, recs = tr.train(train_seqs, cfg, tcfg)
        report = ev.evaluate_model(params, cfg, held_seqs, horizons=(400,))
        print(f"  {graph:<13s} {recs[-1].recst:7.4f} {report.horizons[400]:9.4f}"
              f"   ({time.perf_counter() - t0:.0f}s)", flush=True)


if __name__ == "__main__":
    main()
