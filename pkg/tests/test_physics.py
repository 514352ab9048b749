import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from magtomo.errors import ConfigError, InfeasibleSceneError, SingularEvaluationError
from magtomo.physics import (MU0, CurrentField, SensorArray, biot_savart, checkerboard_indices, forward,
                             solve_current)
from magtomo.scene import ChannelSpec, ConductivityMap, DiskConfig, DiskSet, rasterize, sample_scene

SPEC = ChannelSpec()


def finite_wire_field(current, d, x1, x2):
    """|B| at perpendicular distance d from the foot point, wire ends at x1 < x2 along the wire axis."""
    s1 = x1 / np.hypot(x1, d)
    s2 = x2 / np.hypot(x2, d)
    return MU0 * current / (4 * np.pi * d) * (s2 - s1)


def wire_field(spec, row, jx_value):
    jx = np.zeros(spec.shape)
    jx[row, :] = jx_value
    return CurrentField(jx=jx, jy=np.zeros(spec.shape), phi=np.zeros(spec.shape), total_current=0.0)


def scene_map(seed, **disk_kw):
    disks = sample_scene(SPEC, DiskConfig(**disk_kw), seed)
    return rasterize(SPEC, disks)


def test_sensor_lattice():
    arr = SensorArray()
    pos = arr.positions(SPEC)
    assert pos.shape == (100, 3)
    assert np.all(pos[:, 2] == -0.005)
    assert np.isclose(pos[:, 0].min(), 0.008) and np.isclose(pos[:, 0].max(), 0.152)


def test_uniform_map_gives_uniform_current():
    field = solve_current(ConductivityMap(np.ones(SPEC.shape)), SPEC, 2.0)
    expected = 2.0 / (SPEC.length_y * SPEC.thickness)
    assert np.allclose(field.jx, expected, rtol=1e-9)
    assert np.max(np.abs(field.jy)) < 1e-9 * expected
    # potential linear in x
    slope = np.diff(field.phi, axis=1)
    assert np.allclose(slope, slope[0, 0], rtol=1e-8)
    cross = field.cross_section_currents()
    assert np.max(np.abs(cross - 2.0)) < 1e-8 * 2.0


def test_one_zero_cell_conserves_current():
    values = np.ones(SPEC.shape)
    values[8, 15] = 0.0
    field = solve_current(ConductivityMap(values), SPEC, 1.0)
    jmax = max(np.abs(field.jx).max(), np.abs(field.jy).max())
    h = min(SPEC.dx, SPEC.dy)
    # divergence scaled by the cell size is a current density, comparable with |j|_max
    assert np.max(np.abs(field.divergence(SPEC))) * h < 1e-8 * jmax
    assert np.max(np.abs(field.cross_section_currents() - 1.0)) < 1e-8


@settings(max_examples=10)
@given(st.integers(0, 2 ** 31 - 1))
def test_conservation_on_random_scenes(seed):
    field = solve_current(scene_map(seed), SPEC, 1.5)
    assert np.max(np.abs(field.cross_section_currents() - 1.5)) < 1e-8 * 1.5


def test_mirror_symmetry():
    half = scene_map(5).values
    sym = np.minimum(half, half[::-1, :])  # symmetric under y -> -y
    field = solve_current(ConductivityMap(sym), SPEC, 1.0)
    scale = np.abs(field.jx).max()
    assert np.max(np.abs(field.jx - field.jx[::-1, :])) < 1e-8 * scale
    assert np.max(np.abs(field.jy + field.jy[::-1, :])) < 1e-8 * scale


def test_blocked_channel_is_infeasible():
    values = np.ones(SPEC.shape)
    values[:, 10] = 0.0
    with pytest.raises(InfeasibleSceneError):
        solve_current(ConductivityMap(values), SPEC, 1.0)


def test_solver_rejects_bad_inputs():
    with pytest.raises(ConfigError):
        solve_current(ConductivityMap(np.ones(SPEC.shape)), SPEC, 0.0)
    with pytest.raises(ConfigError):
        solve_current(ConductivityMap(np.ones((3, 3))), SPEC, 1.0)


def test_zero_current_gives_zero_field():
    field = CurrentField(np.zeros(SPEC.shape), np.zeros(SPEC.shape), np.zeros(SPEC.shape), 0.0)
    assert np.all(biot_savart(field, SPEC, SensorArray()).values == 0.0)


def test_single_element_field_is_along_y():
    spec = ChannelSpec(length_x=0.01, length_y=0.01, grid_nx=2, grid_ny=2)
    jx = np.zeros(spec.shape)
    jx[0, 0] = 1e4
    field = CurrentField(jx, np.zeros(spec.shape), np.zeros(spec.shape), 0.0)
    arr = {c: SensorArray(rows=2, cols=2, d_sensor=0.02, component=c) for c in "xyz"}
    bx = biot_savart(field, spec, arr["x"]).values
    by = biot_savart(field, spec, arr["y"]).values
    bz = biot_savart(field, spec, arr["z"]).values
    # sensor 0 sits directly below the element
    assert bx[0] == 0.0 and bz[0] == 0.0
    assert by[0] > 0


@pytest.mark.parametrize("d_cells", [3, 5, 10])
def test_line_of_cells_matches_finite_wire(d_cells):
    spec = ChannelSpec(length_x=0.2, length_y=0.01, thickness=0.002, grid_nx=100, grid_ny=5)
    current = 3.0
    jx_value = current / (spec.dy * spec.thickness)
    field = wire_field(spec, 2, jx_value)
    d = d_cells * spec.dx
    arr = SensorArray(rows=1, cols=1, d_sensor=d, component="y")  # sensor under the wire midpoint
    measured = biot_savart(field, spec, arr).values[0]
    expected = finite_wire_field(current, d, -spec.length_x / 2, spec.length_x / 2)
    assert abs(measured - expected) < 0.01 * abs(expected)


def test_sensor_too_close_is_singular():
    spec = ChannelSpec(thickness=0.005)
    with pytest.raises(SingularEvaluationError):
        biot_savart(wire_field(spec, 0, 1.0), spec, SensorArray(d_sensor=0.002))


def test_inclusion_perturbs_readings():
    arr = SensorArray()
    uniform = forward(ConductivityMap(np.ones(SPEC.shape)), SPEC, arr, 1.0).values
    disks = DiskSet(np.array([[0.08, 0.035]]), np.array([0.0025]))
    holed = forward(rasterize(SPEC, disks), SPEC, arr, 1.0).values
    assert np.linalg.norm(holed - uniform) > 1e-3 * np.linalg.norm(uniform)


def test_readings_linear_in_current():
    m = scene_map(2)
    arr = SensorArray()
    one = forward(m, SPEC, arr, 1.0).values
    two = forward(m, SPEC, arr, 2.0).values
    assert np.allclose(two, 2 * one, rtol=1e-12, atol=0)


@settings(max_examples=8)
@given(st.integers(0, 2 ** 31 - 1))
def test_readings_decay_with_distance(seed):
    m = scene_map(seed)
    peaks = [np.abs(forward(m, SPEC, SensorArray(d_sensor=d), 1.0).values).max() for d in (0.005, 0.010, 0.025)]
    assert peaks[0] > peaks[1] > peaks[2]


def smooth_map(spec):
    c = spec.cell_centers()
    r2 = (c[:, 0] - 0.08) ** 2 + (c[:, 1] - 0.035) ** 2
    return ConductivityMap((1 - 0.6 * np.exp(-r2 / (2 * 0.015 ** 2))).reshape(spec.shape))


def test_mesh_refinement_changes_readings_little():
    coarse, fine = ChannelSpec(), ChannelSpec(grid_nx=60, grid_ny=34)
    arr = SensorArray(d_sensor=0.010)
    a = forward(smooth_map(coarse), coarse, arr, 1.0).values
    b = forward(smooth_map(fine), fine, arr, 1.0).values
    assert np.linalg.norm(a - b) < 0.02 * np.linalg.norm(b)


def test_checkerboard_keeps_half_the_sensors():
    idx = checkerboard_indices(10, 10)
    assert len(idx) == 50
    grid = np.zeros(100, dtype=int)
    grid[idx] = 1
    grid = grid.reshape(10, 10)
    assert np.all(grid.sum(axis=0) == 5) and np.all(grid.sum(axis=1) == 5)
