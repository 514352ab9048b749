"""Steady conduction in the channel and the Biot-Savart sensor model.

The potential is solved with cell-centred finite volumes (harmonic-mean face
conductivities, Dirichlet electrodes at x = 0 and x = length_x, insulated side
walls). The solution is then rescaled so that the net current equals the
applied current. Each cell is treated as a point current element at its
centre when integrating Biot-Savart.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, InfeasibleSceneError, SingularEvaluationError, SolverError

MU0 = 4e-7 * np.pi
# effective conductance below this fraction of the homogeneous channel's counts as blocked
BLOCKED_CONDUCTANCE_RATIO = 1e-3
_COMPONENTS = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class SensorArray:
    rows: int = 10
    cols: int = 10
    d_sensor: float = 0.005
    component: str = "z"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError("sensor array needs at least one row and column")
        if self.d_sensor <= 0:
            raise ConfigError("d_sensor must be positive")
        if self.component.lower() not in _COMPONENTS:
            raise ConfigError(f"component must be one of x, y, z (got {self.component!r})")

    @property
    def n_sensors(self):
        return self.rows * self.cols

    def positions(self, spec):
        """(M, 3) sensor coordinates: a cell-centred lattice over the channel footprint at z = -d_sensor."""
        xs = (np.arange(self.cols) + 0.5) * spec.length_x / self.cols
        ys = (np.arange(self.rows) + 0.5) * spec.length_y / self.rows
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel(), np.full(gx.size, -self.d_sensor)])


@dataclass
class CurrentField:
    jx: np.ndarray  # (ny, nx) cell-centred current density, A/m^2
    jy: np.ndarray
    phi: np.ndarray  # (ny, nx) potential, V
    total_current: float
    flux_x: np.ndarray = None  # (ny, nx + 1) current through x-faces, A
    flux_y: np.ndarray = None  # (ny + 1, nx) current through y-faces, A

    def cross_section_currents(self):
        """Net current through every x-face column, left electrode to right."""
        return self.flux_x.sum(axis=0)

    def divergence(self, spec):
        """Discrete div(j) per cell, A/m^3 (net face outflow over cell volume)."""
        out = (self.flux_x[:, 1:] - self.flux_x[:, :-1]) + (self.flux_y[1:, :] - self.flux_y[:-1, :])
        return out / (spec.dx * spec.dy * spec.thickness)


@dataclass
class SensorReading:
    values: np.ndarray  # (M,), tesla
    array: SensorArray


def _conductance_system(sigma, spec):
    """Assemble the SPD finite-volume matrix for unit potential difference.

    Returns ``(A, b, gx, gy, gl, gr)`` where gx/gy are interior face
    conductances and gl/gr the half-cell conductances to the electrodes.
    """
    ny, nx = sigma.shape
    dx, dy, t = spec.dx, spec.dy, spec.thickness
    hx = 2.0 * sigma[:, :-1] * sigma[:, 1:] / (sigma[:, :-1] + sigma[:, 1:])
    hy = 2.0 * sigma[:-1, :] * sigma[1:, :] / (sigma[:-1, :] + sigma[1:, :])
    gx = hx * (dy * t) / dx  # (ny, nx-1)
    gy = hy * (dx * t) / dy  # (ny-1, nx)
    gl = sigma[:, 0] * (dy * t) / (0.5 * dx)
    gr = sigma[:, -1] * (dy * t) / (0.5 * dx)

    idx = np.arange(ny * nx).reshape(ny, nx)
    diag = np.zeros((ny, nx))
    diag[:, :-1] += gx
    diag[:, 1:] += gx
    diag[:-1, :] += gy
    diag[1:, :] += gy
    diag[:, 0] += gl
    diag[:, -1] += gr
    rows = [idx.ravel(), idx[:, :-1].ravel(), idx[:, 1:].ravel(), idx[:-1, :].ravel(), idx[1:, :].ravel()]
    cols = [idx.ravel(), idx[:, 1:].ravel(), idx[:, :-1].ravel(), idx[1:, :].ravel(), idx[:-1, :].ravel()]
    vals = [diag.ravel(), -gx.ravel(), -gx.ravel(), -gy.ravel(), -gy.ravel()]
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(ny * nx, ny * nx))
    b = np.zeros((ny, nx))
    b[:, 0] += gl * 1.0  # left electrode at 1 V, right at 0 V
    return A, b.ravel(), gx, gy, gl, gr


def solve_current(cmap, spec, applied_current, sigma_floor=1e-6, tol=1e-12, max_iter=20000):
    """Current distribution for a conductivity map driven by ``applied_current`` amperes."""
    values = np.asarray(cmap.values if hasattr(cmap, "values") else cmap, dtype=np.float64)
    if values.shape != spec.shape:
        raise ConfigError(f"map shape {values.shape} does not match grid {spec.shape}")
    if applied_current <= 0:
        raise ConfigError("applied_current must be positive")
    if np.any(values < 0) or np.any(values > 1):
        raise ConfigError("relative conductivities must lie in [0, 1]")
    sigma = np.maximum(values, sigma_floor) * spec.sigma_ref
    A, b, gx, gy, gl, gr = _conductance_system(sigma, spec)

    # Jacobi-preconditioned CG; the operator is SPD
    dinv = 1.0 / A.diagonal()
    precond = spla.LinearOperator(A.shape, matvec=lambda v: dinv * v)
    x0 = np.tile(1.0 - (np.arange(spec.grid_nx) + 0.5) / spec.grid_nx, spec.grid_ny)
    phi, info = spla.cg(A, b, x0=x0, rtol=tol, atol=0.0, maxiter=max_iter, M=precond)
    residual = float(np.linalg.norm(A @ phi - b) / np.linalg.norm(b))
    if info != 0 or not np.isfinite(residual):
        raise SolverError(f"conduction solve did not converge in {max_iter} iterations "
                          f"(relative residual {residual:.3e})", residual=residual)
    phi = phi.reshape(spec.shape)

    ny, nx = spec.shape
    flux_x = np.empty((ny, nx + 1))
    flux_x[:, 1:-1] = gx * (phi[:, :-1] - phi[:, 1:])
    flux_x[:, 0] = gl * (1.0 - phi[:, 0])
    flux_x[:, -1] = gr * phi[:, -1]
    flux_y = np.zeros((ny + 1, nx))
    flux_y[1:-1, :] = gy * (phi[:-1, :] - phi[1:, :])

    conductance = flux_x[:, 0].sum()  # per volt
    homogeneous = spec.sigma_ref * spec.length_y * spec.thickness / spec.length_x
    if not conductance > BLOCKED_CONDUCTANCE_RATIO * homogeneous:
        raise InfeasibleSceneError(
            f"channel blocked: effective conductance {conductance:.3e} S is below "
            f"{BLOCKED_CONDUCTANCE_RATIO:g} x homogeneous ({homogeneous:.3e} S)")

    scale = applied_current / conductance
    flux_x *= scale
    flux_y *= scale
    phi = phi * scale
    jx_faces = flux_x / (spec.dy * spec.thickness)
    jy_faces = flux_y / (spec.dx * spec.thickness)
    return CurrentField(
        jx=0.5 * (jx_faces[:, :-1] + jx_faces[:, 1:]),
        jy=0.5 * (jy_faces[:-1, :] + jy_faces[1:, :]),
        phi=phi,
        total_current=float(applied_current),
        flux_x=flux_x,
        flux_y=flux_y,
    )


def biot_savart(field, spec, array):
    """One field component at every sensor, midpoint quadrature over cells."""
    pos = array.positions(spec)
    centers = spec.cell_centers()
    min_standoff = 0.5 * spec.thickness
    if np.any(np.abs(pos[:, 2]) < min_standoff):
        raise SingularEvaluationError("sensor lies inside the conductor slab")
    r = pos[:, None, :] - centers[None, :, :]  # (M, N, 3)
    dist = np.sqrt(np.einsum("mnk,mnk->mn", r, r))
    half_diag = 0.5 * np.sqrt(spec.dx ** 2 + spec.dy ** 2 + spec.thickness ** 2)
    if dist.min() < half_diag:
        raise SingularEvaluationError(
            f"sensor {np.unravel_index(dist.argmin(), dist.shape)[0]} is {dist.min():.3e} m from a "
            f"cell centre (< half cell diagonal {half_diag:.3e} m)")
    jx = np.asarray(field.jx, dtype=np.float64).ravel()
    jy = np.asarray(field.jy, dtype=np.float64).ravel()
    inv3 = 1.0 / dist ** 3
    # j = (jx, jy, 0):  j x r = (jy rz, -jx rz, jx ry - jy rx)
    comp = _COMPONENTS[array.component.lower()]
    if comp == 0:
        integrand = jy[None, :] * r[..., 2]
    elif comp == 1:
        integrand = -jx[None, :] * r[..., 2]
    else:
        integrand = jx[None, :] * r[..., 1] - jy[None, :] * r[..., 0]
    dv = spec.dx * spec.dy * spec.thickness
    values = MU0 / (4 * np.pi) * dv * np.sum(integrand * inv3, axis=1)
    return SensorReading(values=values, array=array)


def forward(cmap, spec, array, applied_current, sigma_floor=1e-6, tol=1e-12, max_iter=20000):
    """Sensor readings for a conductivity map (conduction solve, then Biot-Savart)."""
    field = solve_current(cmap, spec, applied_current, sigma_floor=sigma_floor, tol=tol, max_iter=max_iter)
    return biot_savart(field, spec, array)


def checkerboard_indices(rows, cols):
    """Alternating subset of a rows x cols array (row-major indices), e.g. 50 of 100."""
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    return np.flatnonzero(((ii + jj) % 2 == 0).ravel())
