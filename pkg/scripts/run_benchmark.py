#!/usr/bin/env python3
"""Compare training objectives on the probing tasks.

Retrains the encoder for every (objective, seed) pair on one shared synthetic
dataset, then probes global, local-binary, and next-code performance. With
the default config this is the local/global trade-off benchmark; expect
roughly a minute per objective-seed on one core.

    python3 scripts/run_benchmark.py --objectives ar,coles --seeds 0,1,2 \
        --out benchmark.json
"""
import argparse
import logging
import sys
import time

from seqrep.config import load_config
from seqrep.pipeline import compare_objectives, load_dataset, prepare_splits
from seqrep.report import write_report


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--config", help="config file (defaults when omitted)")
    p.add_argument("--objectives", default="ar,coles",
                   help="comma-separated objectives to retrain")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    p.add_argument("--tasks", default="global,next_mcc",
                   help="probing tasks: global, local_binary, next_mcc")
    p.add_argument("--out", default="benchmark.json", help="report path")
    return p.parse_args()


def main() -> int:
    args = parse_args()
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = load_config(args.config)
    objectives = [o.strip() for o in args.objectives.split(",") if o.strip()]
    seeds = [int(s) for s in args.seeds.split(",")]
    tasks = tuple(t.strip() for t in args.tasks.split(",") if t.strip())

    t0 = time.perf_counter()
    splits = prepare_splits(cfg, load_dataset(cfg))
    results = compare_objectives(cfg, splits, objectives, seeds, tasks=tasks)
    elapsed = time.perf_counter() - t0

    payload = {
        "config_digest": cfg.digest,
        "seeds": seeds,
        "clients": splits.counts(),
        "objectives": {
            obj: {task: rep.summary() for task, rep in by_task.items()}
            for obj, by_task in results.items()
        },
    }
    write_report(args.out, payload, timings={"total_seconds": elapsed})

    print(f"{'objective':<12}" + "".join(f"{t:>16}" for t in tasks))
    for obj in objectives:
        cells = []
        for task in tasks:
            mean = results[obj][task].mean()["roc_auc"]
            std = results[obj][task].std()["roc_auc"]
            cells.append(f"{mean:.4f}±{std:.3f}")
        print(f"{obj:<12}" + "".join(f"{c:>16}" for c in cells))
    print(f"\nwrote {args.out} ({elapsed:.1f}s)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
