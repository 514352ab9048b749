"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is printed in the terminal summary.
Criteria 5 to 7 share one desk-scale benchmark (1000 scenes, N=510, M=100,
d_sensor=5 mm, reference hyperparameters), which takes several minutes.
"""

import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from magtomo.cli import main
from magtomo.config import RunConfig
from magtomo.dataset import generate, physics_from_meta, regenerate_readings, select_sensors
from magtomo.dither import CLASSIC_FRACTIONS, constant_sampler, dirichlet_sampler, dither_once
from magtomo.inn.layers import Mixer
from magtomo.inn.model import InnModel, gradient_check, perturb_parameters
from magtomo.physics import checkerboard_indices
from magtomo.pipeline import run_benchmark, train_inn
from magtomo.selftest import check_uniform_current, check_wire_field, textbook_floyd_steinberg

TINY_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "tiny.toml"


def test_c1_physics_oracle(report):
    t0 = time.perf_counter()
    wire_ok, wire = check_wire_field()
    cond_ok, cond = check_uniform_current()
    dt = time.perf_counter() - t0
    ok = wire_ok and cond_ok and dt < 10
    report("C1 physics oracle", ok, f"{wire}; {cond}; {dt:.1f}s (< 10s)")
    assert ok


def test_c2_invertibility(report):
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(1, 7):
        model = perturb_parameters(InnModel(24, 6, k=k, hidden=16, seed=k), rng, scale=0.05)
        x = rng.standard_normal((1000, 24))
        y, z = model.forward_map(x)
        worst = max(worst, float(np.max(np.abs(model.inverse_map(y, z) - x))))
        v = np.hstack([rng.standard_normal((1000, 6)), rng.standard_normal((1000, 18))])
        worst = max(worst, float(np.max(np.abs(np.hstack(model.forward_map(model.inverse_map(v[:, :6], v[:, 6:]))) - v))))
    mix_worst = 0.0
    for init in ("orthogonal", "permutation"):
        mix = Mixer(24, rng, init=init)
        mix.params["lower"] += 0.1 * rng.standard_normal((24, 24))
        mix.params["upper"] += 0.1 * rng.standard_normal((24, 24))
        w = rng.standard_normal((1000, 24))
        dense = np.linalg.solve(mix.matrix(), w.T).T
        mix_worst = max(mix_worst, float(np.max(np.abs(mix.inverse(w) - dense))))
    ok = worst < 1e-10 and mix_worst < 1e-10
    report("C2 invertibility", ok, f"round trip max err {worst:.1e}, mixer vs dense solve {mix_worst:.1e} (< 1e-10)")
    assert ok


def test_c3_gradients(report):
    rng = np.random.default_rng(3)
    t0 = time.perf_counter()
    worst = 0.0
    for n, m, k in ((16, 4, 1), (16, 4, 3), (10, 3, 2), (8, 5, 4)):
        model = perturb_parameters(InnModel(n, m, k=k, hidden=8, seed=n + k), rng)
        x, y, z = rng.standard_normal((6, n)), rng.standard_normal((6, m)), rng.standard_normal((6, n - m))
        worst = max(worst, gradient_check(model, x, y, z))
    dt = time.perf_counter() - t0
    ok = worst < 1e-4 and dt < 60
    report("C3 gradient check", ok, f"max relative error {worst:.1e} (< 1e-4), {dt:.1f}s (< 60s)")
    assert ok


def test_c4_dither_limit_and_simplex(report):
    rng = np.random.default_rng(2024)
    sampler = constant_sampler(CLASSIC_FRACTIONS)
    same = 0
    for i in range(50):
        img = rng.random((32, 32))
        same += int(np.array_equal(dither_once(img, sampler, seed=i), textbook_floyd_steinberg(img)))
    fr = dirichlet_sampler((1.0, 1.0, 1.0, 1.0))(rng, (32, 32))
    sum_err = float(np.max(np.abs(fr.sum(axis=-1) - 1.0)))
    ok = same == 50 and sum_err < 1e-12
    report("C4 dither limit", ok, f"{same}/50 identical to textbook Floyd-Steinberg, fraction-sum error {sum_err:.1e}")
    assert ok


# desk-scale benchmark -------------------------------------------------------

@pytest.fixture(scope="module")
def desk():
    cfg = RunConfig()
    ds = generate(cfg, n_scenes=1000, seed=0)
    bench = run_benchmark(ds, cfg, progress=print)
    return cfg, ds, bench


@pytest.mark.slow
def test_c5_benchmark_ordering(desk, report):
    _, _, bench = desk
    ll = {name: s.mean for name, s in bench.scores.items()}
    ok = ll["inn"] > ll["elasticnet"] >= ll["tikhonov"]
    report("C5 INN > ElasticNet >= Tikhonov", ok,
           "mean loglik " + ", ".join(f"{n} {ll[n]:.2f}" for n in ("inn", "elasticnet", "tikhonov", "mean")))
    assert ok


@pytest.mark.slow
def test_c6_ablation_directions(desk, report):
    cfg, ds, bench = desk
    phys = physics_from_meta(ds)
    far = regenerate_readings(ds, replace(phys, d_sensor_mm=25.0))
    board = checkerboard_indices(phys.sensor_rows, phys.sensor_cols)
    val = {("5", 100, cfg.inn.k): bench.inn_result.best_val_loss}
    val[("25", 100, cfg.inn.k)] = train_inn(far, cfg)[1].best_val_loss
    val[("25", 50, cfg.inn.k)] = train_inn(select_sensors(far, board), cfg)[1].best_val_loss
    val[("5", 100, 1)] = train_inn(ds, cfg, k=1)[1].best_val_loss
    k = cfg.inn.k
    checks = {
        "loss(25mm,100) > loss(5mm,100)": val[("25", 100, k)] > val[("5", 100, k)],
        "loss(25mm,50) >= loss(25mm,100)": val[("25", 50, k)] >= val[("25", 100, k)],
        f"loss(k=1) > loss(k={k})": val[("5", 100, 1)] > val[("5", 100, k)],
    }
    ok = all(checks.values())
    detail = "; ".join(f"{c} {'ok' if v else 'violated'}" for c, v in checks.items())
    detail += " | " + ", ".join(f"d={d} M={m} k={kk}: {v:.4f}" for (d, m, kk), v in val.items())
    report("C6 ablation directionality", ok, detail)
    assert ok


@pytest.mark.slow
def test_c7_inn_faster_than_elasticnet_cv(desk, report):
    _, _, bench = desk
    inn, enet = bench.seconds["inn"], bench.seconds["elasticnet"]
    ok = inn < enet
    report("C7 speed", ok, f"INN to early stop {inn:.1f}s, ElasticNet CV grid {enet:.1f}s, "
                           f"Tikhonov CV {bench.seconds['tikhonov']:.1f}s")
    assert ok


def test_c8_determinism(tmp_path, report):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        ds = str(out / "dataset.btom")
        common = ["--config", str(TINY_CONFIG), "--out", str(out), "--deterministic", "--seed", "5"]
        assert main(["generate", *common]) == 0
        assert main(["train", "--dataset", ds, *common]) == 0
        assert main(["reconstruct", "--dataset", ds, "--model", str(out / "inn.binn"), *common]) == 0
        assert main(["evaluate", "--dataset", ds, "--predictions", str(out / "pred_inn_val.bprd"), *common]) == 0
        outs.append(out)
    names = ("dataset.btom", "inn.binn", "pred_inn_val.bprd", "scores.csv", "summary.csv")
    differ = [n for n in names if (outs[0] / n).read_bytes() != (outs[1] / n).read_bytes()]
    ok = not differ
    report("C8 determinism", ok, "byte-identical: " + ", ".join(names) if ok else f"differ: {differ}")
    assert ok
