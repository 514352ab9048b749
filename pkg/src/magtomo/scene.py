"""Random cell geometries: non-conducting disks in a thin conducting channel.

Grids are stored image-style with shape ``(grid_ny, grid_nx)``: rows run along
y, columns along x. Flattening is row-major, so a map of the reference
30 x 17 channel becomes a length-510 vector.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfeasibleConfigError


@dataclass(frozen=True)
class ChannelSpec:
    length_x: float = 0.16
    length_y: float = 0.07
    thickness: float = 0.005
    grid_nx: int = 30
    grid_ny: int = 17
    sigma_ref: float = 3.3e6

    def __post_init__(self):
        if min(self.length_x, self.length_y, self.thickness) <= 0:
            raise ConfigError("channel dimensions must be positive")
        if self.grid_nx < 2 or self.grid_ny < 2:
            raise ConfigError("grid_nx and grid_ny must be >= 2")
        if self.sigma_ref <= 0:
            raise ConfigError("sigma_ref must be positive")

    @property
    def n_cells(self):
        return self.grid_nx * self.grid_ny

    @property
    def shape(self):
        return (self.grid_ny, self.grid_nx)

    @property
    def dx(self):
        return self.length_x / self.grid_nx

    @property
    def dy(self):
        return self.length_y / self.grid_ny

    def cell_centers(self):
        """(N, 3) cell-centre coordinates on the channel midplane z = 0, row-major."""
        xs = (np.arange(self.grid_nx) + 0.5) * self.dx
        ys = (np.arange(self.grid_ny) + 0.5) * self.dy
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])


@dataclass(frozen=True)
class DiskConfig:
    min_disks: int = 30
    max_disks: int = 120
    diameter_min_mm: float = 4.0
    diameter_max_mm: float = 5.0
    max_attempts: int = 1000

    def __post_init__(self):
        if self.min_disks < 0 or self.max_disks < self.min_disks:
            raise ConfigError("need 0 <= min_disks <= max_disks")
        if self.diameter_min_mm <= 0 or self.diameter_max_mm < self.diameter_min_mm:
            raise ConfigError("need 0 < diameter_min_mm <= diameter_max_mm")
        if self.max_attempts < 1:
            raise ConfigError("max_attempts must be >= 1")

    @property
    def r_min(self):
        return self.diameter_min_mm * 0.5e-3

    @property
    def r_max(self):
        return self.diameter_max_mm * 0.5e-3


@dataclass
class DiskSet:
    centers: np.ndarray  # (count, 2), metres
    radii: np.ndarray  # (count,), metres

    @property
    def count(self):
        return len(self.radii)

    def inside(self, spec):
        c, r = self.centers, self.radii
        return bool(np.all((c[:, 0] - r >= 0) & (c[:, 0] + r <= spec.length_x)
                           & (c[:, 1] - r >= 0) & (c[:, 1] + r <= spec.length_y)))


@dataclass
class ConductivityMap:
    values: np.ndarray  # (grid_ny, grid_nx), relative conductivity in [0, 1]
    binary: bool = False
    meta: dict = field(default_factory=dict)

    def flat(self):
        return self.values.ravel()


def sample_scene(spec, disk_cfg, rng_seed):
    """Draw a random disk configuration.

    The disk count is uniform on ``[min_disks, max_disks]`` and radii are
    uniform on ``[r_min, r_max]``. Centres are rejection-sampled uniformly over
    the channel until the whole disk lies inside it; overlaps are allowed.
    """
    rng = np.random.default_rng(rng_seed)
    count = int(rng.integers(disk_cfg.min_disks, disk_cfg.max_disks + 1))
    radii = rng.uniform(disk_cfg.r_min, disk_cfg.r_max, size=count)
    centers = np.empty((count, 2))
    for i, r in enumerate(radii):
        for _ in range(disk_cfg.max_attempts):
            cx = rng.uniform(0.0, spec.length_x)
            cy = rng.uniform(0.0, spec.length_y)
            if r <= cx <= spec.length_x - r and r <= cy <= spec.length_y - r:
                centers[i] = (cx, cy)
                break
        else:
            raise InfeasibleConfigError(
                f"disk of radius {r * 1e3:.3f} mm could not be placed inside a "
                f"{spec.length_x * 1e3:g} x {spec.length_y * 1e3:g} mm channel "
                f"after {disk_cfg.max_attempts} attempts")
    return DiskSet(centers=centers, radii=radii)


def rasterize(spec, disks, subsample=8):
    """Conducting area fraction of each cell, by ``subsample**2`` point samples per cell."""
    s = int(subsample)
    if s < 1:
        raise ConfigError("subsample must be >= 1")
    ny, nx = spec.shape
    # sample-point coordinates on the fine lattice
    px = (np.arange(nx * s) + 0.5) * (spec.dx / s)
    py = (np.arange(ny * s) + 0.5) * (spec.dy / s)
    covered = np.zeros((ny * s, nx * s), dtype=bool)
    for (cx, cy), r in zip(disks.centers, disks.radii):
        i0 = max(int(np.floor((cy - r) / (spec.dy / s))), 0)
        i1 = min(int(np.ceil((cy + r) / (spec.dy / s))) + 1, ny * s)
        j0 = max(int(np.floor((cx - r) / (spec.dx / s))), 0)
        j1 = min(int(np.ceil((cx + r) / (spec.dx / s))) + 1, nx * s)
        if i0 >= i1 or j0 >= j1:
            continue
        ddx = px[j0:j1][None, :] - cx
        ddy = py[i0:i1][:, None] - cy
        covered[i0:i1, j0:j1] |= ddx * ddx + ddy * ddy <= r * r
    frac = covered.reshape(ny, s, nx, s).mean(axis=(1, 3))
    return ConductivityMap(values=1.0 - frac, binary=False)


def binarize(cmap, threshold=0.25):
    """Values below ``threshold`` become 0, everything else 1."""
    values = np.where(np.asarray(cmap.values) < threshold, 0.0, 1.0)
    return ConductivityMap(values=values, binary=True, meta=dict(cmap.meta))
