"""``magtomo`` command line: generate, train, fit-linear, reconstruct, evaluate, ablate, selftest."""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dither, pipeline
from ._util import deterministic_mode
from .config import RunConfig, load_config
from .dataset import generate
from .errors import ConfigError, MagtomoError
from .inn.train import write_curve

log = logging.getLogger("magtomo")


def _config(args):
    if args.config is None:
        return RunConfig().validate()
    return load_config(args.config)


def _out(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args):
    cfg = _config(args)
    n = cfg.dataset.n_scenes if args.n is None else args.n
    if n < 1:
        raise ConfigError(f"--n must be >= 1, got {n}")
    ds = generate(cfg, n_scenes=n, seed=args.seed)
    path = ds.write(_out(args) / Path(cfg.dataset.path).name)
    print(f"scenes: {ds.n_rows}  resampled: {ds.meta['resample_count']}  "
          f"N={ds.n_features} M={ds.n_sensors}  -> {path}")


def cmd_train(args):
    cfg = _config(args)
    ds = pipeline.load_dataset(args.dataset)
    report = (lambda e, tl, vl: print(f"epoch {e:4d}  train {tl:.6f}  val {vl:.6f}")) if args.verbose else None
    model, result, st = pipeline.train_inn(ds, cfg, seed=args.seed, k=args.k, progress=report)
    out = _out(args)
    model.save(out / "inn.binn")
    write_curve(result.curve, out / "inn_curve.csv")
    st.write(out / "standardizer.bstd")
    print(f"best epoch {result.best_epoch}  val L_x {result.best_val_loss:.6f}  "
          f"epochs run {result.curve[-1][0]}  time {result.wall_time:.1f}s  -> {out / 'inn.binn'}")


def cmd_fit_linear(args):
    cfg = _config(args)
    ds = pipeline.load_dataset(args.dataset)
    out = _out(args)
    kinds = ["tikhonov", "elasticnet"] if args.kind == "both" else [args.kind]
    for kind in kinds:
        model, st = pipeline.fit_linear(ds, cfg, kind, seed=args.seed)
        model.save(out / f"{kind}.blin")
        with open(out / f"{kind}_cv_report.json", "w") as fh:
            json.dump(model.cv_report, fh, indent=1, sort_keys=True)
        st.write(out / "standardizer.bstd")
        print(f"{kind}: lambda_l2 {model.lambda_l2:.4g}  lambda_l1 {model.lambda_l1:.4g}  "
              f"time {model.fit_seconds:.1f}s  -> {out / (kind + '.blin')}")


def cmd_reconstruct(args):
    cfg = _config(args)
    ds = pipeline.load_dataset(args.dataset)
    if args.model in ("groundtruth", "mean"):
        preds = pipeline.reference_predictions(ds, args.model, args.split)
    else:
        model = pipeline.load_model(args.model)
        n_z = cfg.inn.n_z if args.n_z is None else args.n_z
        seed = cfg.inn.seed if args.seed is None else args.seed
        preds = pipeline.predict(model, ds, args.split, n_z=n_z, seed=seed, name=args.name)
    name = args.name or preds.model
    preds.meta["model"] = name
    path = preds.write(_out(args) / f"pred_{name}_{args.split}.bprd")
    print(f"{len(preds.rows)} predictions ({name}, {args.split}) -> {path}")


def cmd_evaluate(args):
    cfg = _config(args)
    ds = pipeline.load_dataset(args.dataset)
    preds = [pipeline.Predictions.read(p) for p in args.predictions]
    scores = pipeline.evaluate(preds, ds, cfg, seed=args.seed)
    out = _out(args)
    dither.write_scores(scores, out / "scores.csv")
    dither.write_summary(scores, out / "summary.csv")
    for s in scores:
        print(f"{s.model}: mean loglik {s.mean:.4f}  std {s.std:.4f}  n {len(s.loglik)}")


def cmd_ablate(args):
    cfg = _config(args)
    if args.dataset is not None:
        ds = pipeline.load_dataset(args.dataset)
    else:
        ds = generate(cfg, seed=args.seed)

    def report(row, seconds):
        print(f"d={row['d_sensor_mm']:g}mm  sensors={row['n_sensors']}  k={row['k']}  "
              f"val {row['val_loss']:.6f}  loglik {row['mean_loglik']:.4f}  {row['status']}  ({seconds:.1f}s)")

    rows = pipeline.run_ablation(ds, cfg, seed=args.seed, progress=report)
    path = pipeline.write_ablation(rows, _out(args) / "ablation.csv")
    print(f"{len(rows)} cells -> {path}")
    if all(r["status"] != "ok" for r in rows):
        raise MagtomoError("every ablation cell failed")


def cmd_selftest(args):
    from . import selftest

    results = selftest.run_all()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    if not all(ok for _, ok, _ in results):
        return 4
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration (defaults to the built-in reference)")
    common.add_argument("--seed", type=int, default=None, help="override the seed of the step being run")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--deterministic", action="store_true", help="single-threaded BLAS for bitwise reruns")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="magtomo", description="Magnetic tomography of conductivity maps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common], help="simulate a dataset")
    p.add_argument("--n", type=int, default=None, help="number of scenes")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train the invertible network")
    p.add_argument("--dataset", required=True)
    p.add_argument("--k", type=int, default=None, help="number of coupling blocks")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fit-linear", parents=[common], help="fit the Tikhonov and/or ElasticNet baselines")
    p.add_argument("--dataset", required=True)
    p.add_argument("--kind", choices=["tikhonov", "elasticnet", "both"], default="both")
    p.set_defaults(func=cmd_fit_linear)

    p = sub.add_parser("reconstruct", parents=[common], help="write continuous predictions for one split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True, help="BINN/BLIN file, or 'groundtruth' / 'mean'")
    p.add_argument("--split", choices=["train", "val", "all"], default="val")
    p.add_argument("--n-z", type=int, default=None, help="latent draws averaged per INN prediction")
    p.add_argument("--name", default=None, help="model name recorded in the scores")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", parents=[common], help="dither log-likelihood scores")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", nargs="+", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", parents=[common], help="sensor distance / count / block-count sweep")
    p.add_argument("--dataset", default=None, help="reuse these maps (generated from the config otherwise)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("selftest", parents=[common], help="run the built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with deterministic_mode(args.deterministic):
            code = args.func(args)
    except MagtomoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
