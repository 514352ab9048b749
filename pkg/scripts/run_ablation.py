"""Ablation sweep over sensor standoff, sensor count and coupling depth.

    python scripts/run_ablation.py --config configs/reference.toml --n 1000 --out runs/ablation
"""

import argparse
from pathlib import Path

from magtomo import pipeline
from magtomo.config import RunConfig, load_config
from magtomo.dataset import generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--n", type=int, default=1000, help="number of scenes")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--dataset", help="reuse an existing .btom instead of generating")
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else RunConfig().validate()
    ds = pipeline.load_dataset(args.dataset) if args.dataset else generate(cfg, n_scenes=args.n, seed=args.seed)

    def show(row, seconds):
        print(f"d={row['d_sensor_mm']:g}mm M={row['n_sensors']} k={row['k']}: val L_x {row['val_loss']:.4f}  "
              f"loglik {row['mean_loglik']:.2f}  [{row['status']}]  {seconds:.0f}s")

    rows = pipeline.run_ablation(ds, cfg, seed=args.seed, progress=show)
    print(f"-> {pipeline.write_ablation(rows, Path(args.out) / 'ablation.csv')}")


if __name__ == "__main__":
    main()
