"""Run configuration: one TOML file with sections scene, physics, dataset, inn, linear, eval, ablation."""

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .physics import SensorArray
from .scene import ChannelSpec, DiskConfig

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib


@dataclass
class SceneConfig:
    grid_nx: int = 30
    grid_ny: int = 17
    min_disks: int = 30
    max_disks: int = 120
    diameter_min_mm: float = 4.0
    diameter_max_mm: float = 5.0
    binarize_threshold: float = 0.25
    subsample: int = 8  # area-fraction map fed to the physics
    # the learning target is binarized from a point-sampled map (1 sample per cell centre);
    # set equal to ``subsample`` to threshold the area-fraction map instead
    target_subsample: int = 1

    def channel(self):
        return ChannelSpec(grid_nx=self.grid_nx, grid_ny=self.grid_ny)

    def disks(self):
        return DiskConfig(min_disks=self.min_disks, max_disks=self.max_disks,
                          diameter_min_mm=self.diameter_min_mm, diameter_max_mm=self.diameter_max_mm)


@dataclass
class PhysicsConfig:
    d_sensor_mm: float = 5.0
    sensor_rows: int = 10
    sensor_cols: int = 10
    component: str = "z"
    applied_current_a: float = 1.0
    sigma_floor: float = 1e-6
    solver_tol: float = 1e-12
    solver_max_iter: int = 20000

    def sensors(self):
        return SensorArray(rows=self.sensor_rows, cols=self.sensor_cols,
                           d_sensor=self.d_sensor_mm * 1e-3, component=self.component)


@dataclass
class DatasetConfig:
    n_scenes: int = 1000
    val_fraction: float = 0.2
    seed: int = 0
    path: str = "dataset.btom"
    forward_on_binary: bool = False
    max_resamples: int = 100


@dataclass
class InnConfig:
    k: int = 3
    hidden: int = 256
    s_clamp: float = 2.0
    batch_size: int = 100
    learning_rate: float = 1e-4
    adam_beta1: float = 0.8
    adam_beta2: float = 0.9
    adam_eps: float = 1e-8
    max_epochs: int = 1000
    patience: int = 10
    seed: int = 0
    n_z: int = 1
    mixer_init: str = "orthogonal"


@dataclass
class LinearConfig:
    lambda_grid: list = field(default_factory=lambda: np.logspace(-4, 2, 13).tolist())
    l1_ratio_grid: list = field(default_factory=lambda: [0.1, 0.5, 0.9])
    folds: int = 5
    seed: int = 0
    tol: float = 1e-6
    max_iter: int = 1000
    clip: bool = False


@dataclass
class EvalConfig:
    ensemble_size: int = 100
    dirichlet_alpha: list = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.0])
    seed: int = 0
    granularity: str = "pixel"
    epsilon: float = None


@dataclass
class AblationConfig:
    d_sensor_mm: list = field(default_factory=lambda: [5.0, 25.0])
    n_sensors: list = field(default_factory=lambda: [100, 50])
    k: list = field(default_factory=lambda: [3])
    sensor_indices: list = None


@dataclass
class RunConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    inn: InnConfig = field(default_factory=InnConfig)
    linear: LinearConfig = field(default_factory=LinearConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)

    @property
    def n_features(self):
        return self.scene.grid_nx * self.scene.grid_ny

    @property
    def n_sensors(self):
        return self.physics.sensor_rows * self.physics.sensor_cols

    def validate(self):
        if self.n_features <= self.n_sensors:
            raise ConfigError(f"need N > M, got N={self.n_features}, M={self.n_sensors}")
        self.scene.channel()
        if self.scene.subsample < 1 or self.scene.target_subsample < 1:
            raise ConfigError("scene.subsample and scene.target_subsample must be >= 1")
        self.scene.disks()
        self.physics.sensors()
        if not 0.0 <= self.dataset.val_fraction < 1.0:
            raise ConfigError("dataset.val_fraction must be in [0, 1)")
        inn = self.inn
        if min(inn.k, inn.hidden, inn.batch_size, inn.max_epochs, inn.patience, inn.n_z) < 1:
            raise ConfigError("inn.k, hidden, batch_size, max_epochs, patience, n_z must be >= 1")
        if inn.learning_rate < 0 or inn.s_clamp <= 0 or inn.adam_eps <= 0:
            raise ConfigError("inn.learning_rate must be >= 0, s_clamp and adam_eps > 0")
        if not (0 < inn.adam_beta1 < 1 and 0 < inn.adam_beta2 < 1):
            raise ConfigError("adam betas must lie in (0, 1)")
        if inn.mixer_init not in ("orthogonal", "permutation"):
            raise ConfigError("inn.mixer_init must be 'orthogonal' or 'permutation'")
        lin = self.linear
        if not lin.lambda_grid or min(lin.lambda_grid) <= 0:
            raise ConfigError("linear.lambda_grid must be non-empty and positive")
        if not lin.l1_ratio_grid or not all(0 <= r <= 1 for r in lin.l1_ratio_grid):
            raise ConfigError("linear.l1_ratio_grid entries must be in [0, 1]")
        if lin.folds < 2:
            raise ConfigError("linear.folds must be >= 2")
        ev = self.eval
        if ev.ensemble_size < 1 or len(ev.dirichlet_alpha) != 4 or min(ev.dirichlet_alpha) <= 0:
            raise ConfigError("eval needs ensemble_size >= 1 and four positive dirichlet_alpha")
        if ev.granularity not in ("pixel", "member"):
            raise ConfigError("eval.granularity must be 'pixel' or 'member'")
        if ev.epsilon is not None and not 0 < ev.epsilon < 0.5:
            raise ConfigError("eval.epsilon must lie in (0, 0.5)")
        ab = self.ablation
        if not ab.d_sensor_mm or not ab.n_sensors or not ab.k:
            raise ConfigError("ablation lists d_sensor_mm, n_sensors and k must be non-empty")
        return self

    def to_dict(self):
        return asdict(self)


_SECTION_TYPES = {
    "scene": SceneConfig, "physics": PhysicsConfig, "dataset": DatasetConfig, "inn": InnConfig,
    "linear": LinearConfig, "eval": EvalConfig, "ablation": AblationConfig,
}


def from_dict(data):
    kwargs = {}
    for name, payload in data.items():
        if name not in _SECTION_TYPES:
            raise ConfigError(f"unknown config section [{name}]")
        cls = _SECTION_TYPES[name]
        known = {f.name for f in fields(cls)}
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown keys in [{name}]: {', '.join(sorted(unknown))}")
        kwargs[name] = cls(**payload)
    return RunConfig(**kwargs).validate()


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return from_dict(data)


def with_overrides(cfg, **sections):
    """Copy of ``cfg`` with per-section field overrides, e.g. ``physics={"d_sensor_mm": 25}``."""
    updated = {name: replace(getattr(cfg, name), **vals) for name, vals in sections.items()}
    return replace(cfg, **updated).validate()
