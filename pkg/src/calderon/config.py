"""Run configuration: a versioned JSON schema with strict validation and a
stable hash so manifests can reproduce runs exactly."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .families import FAMILIES

SCHEMA_VERSION = 1


@dataclasses.dataclass
class RunConfig:
    grid_n: int = 32
    box_halfwidth: float = 1.0
    domain_radius_frac: float = 0.7
    collar_frac: float = 0.2
    family: str = "bump"
    family_params: dict = dataclasses.field(default_factory=dict)
    ellipticity_c: float = 0.2
    delta: float = 0.25
    k_min: float = 4.0
    k_factor: float = 2.0
    rho: float = None  # default 4 pi / L
    cgo_tol: float = 1e-8
    cgo_max_iter: int = 200
    eps_sym: float = 1e-6
    noise_levels: list = None
    stability_s: float = 0.25
    seed: int = 0
    workers: int = 1
    out_dir: str = "runs/out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        import numpy as np
        if self.grid_n < 16:
            raise ConfigError("grid must have at least 16 nodes per axis")
        if self.grid_n % 2:
            raise ConfigError("grid size must be even (kernel lattices embed "
                              "at a half-box offset)")
        if not self.box_halfwidth > 0:
            raise ConfigError("box_halfwidth must be positive")
        if not (0.0 < self.delta < 0.5):
            raise ConfigError("delta must lie in (0, 1/2)")
        if not (0.0 < self.ellipticity_c < 1.0):
            raise ConfigError("ellipticity_c must lie in (0, 1)")
        if self.k_min < 1.0:
            raise ConfigError("k_min must be at least 1")
        if not (0.0 < self.domain_radius_frac < 1.0):
            raise ConfigError("domain_radius_frac must lie in (0, 1)")
        if not (0.0 < self.collar_frac < self.domain_radius_frac):
            raise ConfigError("collar_frac must lie in (0, radius_frac)")
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown family {self.family!r}")
        if self.rho is not None and self.rho <= 0:
            raise ConfigError("rho must be positive")
        if self.noise_levels is not None:
            lv = np.asarray(self.noise_levels, dtype=float)
            if np.any((lv <= 0) | (lv >= 1)) or np.any(np.diff(lv) <= 0):
                raise ConfigError("noise_levels must be strictly increasing "
                                  "values in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def rho_value(self) -> float:
        import numpy as np
        return self.rho if self.rho is not None \
            else 4.0 * np.pi / self.box_halfwidth

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["schema"] = SCHEMA_VERSION
        return d

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        schema = data.pop("schema", SCHEMA_VERSION)
        if schema != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {schema}")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(self.canonical_json())
