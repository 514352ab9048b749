"""Quick oracle checks behind ``magtomo selftest``.

Each check compares the implementation against an independent computation:
the closed-form field of a finite straight wire, central finite differences of
the loss, and a plainly written Floyd-Steinberg routine.
"""

import numpy as np

from .dither import CLASSIC_FRACTIONS, constant_sampler, dither_once
from .inn.model import InnModel, gradient_check, perturb_parameters
from .physics import MU0, CurrentField, SensorArray, biot_savart, solve_current
from .scene import ChannelSpec, ConductivityMap


def finite_wire_field(current, d, x1, x2):
    """Field magnitude at perpendicular distance ``d`` from a wire running from ``x1`` to ``x2``."""
    return MU0 * current / (4 * np.pi * d) * (x2 / np.hypot(x2, d) - x1 / np.hypot(x1, d))


def textbook_floyd_steinberg(img):
    img = np.clip(np.array(img, dtype=np.float64), 0.0, 1.0)
    h, w = img.shape
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        for x in range(w):
            old = img[y, x]
            new = 1.0 if old >= 0.5 else 0.0
            out[y, x] = int(new)
            e = old - new
            if x + 1 < w:
                img[y, x + 1] += e * 7 / 16
            if y + 1 < h:
                if x > 0:
                    img[y + 1, x - 1] += e * 3 / 16
                img[y + 1, x] += e * 5 / 16
                if x + 1 < w:
                    img[y + 1, x + 1] += e * 1 / 16
    return out


def check_wire_field():
    spec = ChannelSpec(length_x=0.2, length_y=0.01, thickness=0.002, grid_nx=100, grid_ny=5)
    current = 3.0
    jx = np.zeros(spec.shape)
    jx[2, :] = current / (spec.dy * spec.thickness)
    field = CurrentField(jx=jx, jy=np.zeros(spec.shape), phi=np.zeros(spec.shape), total_current=current)
    worst = 0.0
    for cells in (3, 5, 10):
        d = cells * spec.dx
        got = biot_savart(field, spec, SensorArray(rows=1, cols=1, d_sensor=d, component="y")).values[0]
        want = finite_wire_field(current, d, -spec.length_x / 2, spec.length_x / 2)
        worst = max(worst, abs(got - want) / abs(want))
    return worst < 0.01, f"max relative deviation from the finite-wire field {worst:.2e} (< 1e-2)"


def check_uniform_current():
    spec = ChannelSpec()
    field = solve_current(ConductivityMap(np.ones(spec.shape)), spec, 1.0)
    err = float(np.max(np.abs(field.cross_section_currents() - 1.0)))
    return err < 1e-8, f"cross-section current error {err:.2e} (< 1e-8)"


def check_gradients():
    rng = np.random.default_rng(0)
    worst = 0.0
    for k in (1, 2):
        model = perturb_parameters(InnModel(8, 3, k=k, hidden=6, seed=k), rng)
        x, y, z = rng.standard_normal((5, 8)), rng.standard_normal((5, 3)), rng.standard_normal((5, 5))
        worst = max(worst, gradient_check(model, x, y, z))
    return worst < 1e-4, f"max relative gradient error {worst:.2e} (< 1e-4)"


def check_dither_limit(n_images=10):
    rng = np.random.default_rng(0)
    sampler = constant_sampler(CLASSIC_FRACTIONS)
    bad = 0
    for i in range(n_images):
        img = rng.random((32, 32))
        bad += int(not np.array_equal(dither_once(img, sampler, seed=i), textbook_floyd_steinberg(img)))
    return bad == 0, f"{n_images - bad}/{n_images} images identical to textbook Floyd-Steinberg"


def run_all():
    checks = [("wire field", check_wire_field), ("uniform conduction", check_uniform_current),
              ("gradient check", check_gradients), ("dither degenerate limit", check_dither_limit)]
    return [(name, *fn()) for name, fn in checks]
