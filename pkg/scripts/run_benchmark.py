"""Desk-scale benchmark: Tikhonov, ElasticNet and the INN on one simulated dataset.

    python scripts/run_benchmark.py --config configs/reference.toml --n 1000 --out runs/bench
"""

import argparse
import csv
from pathlib import Path

from magtomo import pipeline
from magtomo.config import RunConfig, load_config
from magtomo.dataset import generate
from magtomo.dither import write_scores, write_summary


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--n", type=int, default=1000, help="number of scenes")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dataset", help="reuse an existing .btom instead of generating")
    ap.add_argument("--out", default="runs/bench")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else RunConfig().validate()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dataset:
        ds = pipeline.load_dataset(args.dataset)
    else:
        ds = generate(cfg, n_scenes=args.n, seed=args.seed)
        ds.write(out / "dataset.btom")
    print(f"T={ds.n_rows} N={ds.n_features} M={ds.n_sensors}")

    bench = pipeline.run_benchmark(ds, cfg, progress=print)
    scores = list(bench.scores.values())
    write_scores(scores, out / "scores.csv")
    write_summary(scores, out / "summary.csv")
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "seconds"])
        for name, sec in bench.seconds.items():
            w.writerow([name, repr(sec)])
    print(f"-> {out}")


if __name__ == "__main__":
    main()
