"""Pipeline configuration and the package's exception types."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass
from typing import Any, Mapping, Optional


class PointSegError(ValueError):
    """Base class for all errors raised on bad input data."""


class ConfigError(PointSegError):
    """Invalid or inconsistent configuration values."""


class DataError(PointSegError):
    """Malformed or inconsistent input data."""


@dataclass
class PipelineConfig:
    """Every tunable of the pipeline in one place.

    Defaults that have no published value are engineering choices and are
    documented in the README.
    """

    # heatmap targets
    sigma: float = 4.0
    r1: float = 8.0
    r2: float = 15.0
    w_fg: float = 1.0
    w_bg: float = 0.1
    peak_threshold: float = 0.65
    # curriculum
    k_neighbors: int = 4
    curriculum_period_epochs: int = 30
    existing_radius: Optional[float] = None  # None -> r1
    # coarse labels
    fg_radius: float = 2.0
    dist_clip: float = 20.0
    kmeans_iters: int = 100
    seed: int = 0
    # affinity / boundary loss
    T_f: float = 0.6
    T_b: float = 0.05
    gamma: int = 8
    stride: int = 1
    beta: float = 0.1
    eps_log: float = 1e-7
    # post-processing
    bin_threshold: float = 0.5
    min_object_area: int = 20
    hole_fill_area: int = 20
    connectivity: int = 8
    # evaluation
    match_radius: float = 6.0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0 < self.r1 < self.r2:
            raise ConfigError(f"need 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not 0 < self.T_b < self.T_f < 1:
            raise ConfigError(f"need 0 < T_b < T_f < 1, got T_b={self.T_b}, T_f={self.T_f}")
        if self.gamma < 1:
            raise ConfigError(f"gamma must be >= 1, got {self.gamma}")
        if self.stride < 1:
            raise ConfigError(f"stride must be >= 1, got {self.stride}")
        if not 0 < self.eps_log <= 1e-3:
            raise ConfigError(f"eps_log must lie in (0, 1e-3], got {self.eps_log}")
        if self.connectivity not in (4, 8):
            raise ConfigError(f"connectivity must be 4 or 8, got {self.connectivity}")
        if self.k_neighbors < 1:
            raise ConfigError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.match_radius <= 0:
            raise ConfigError(f"match_radius must be positive, got {self.match_radius}")
        if self.dist_clip <= 0:
            raise ConfigError(f"dist_clip must be positive, got {self.dist_clip}")

    @property
    def overlap_radius(self) -> float:
        return self.r1 if self.existing_radius is None else self.existing_radius

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(d) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**dict(d))

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[Mapping[str, Any]] = None) -> "PipelineConfig":
        """Resolve a config from a JSON file (or ``$BONUS_CONFIG``) plus overrides.

        Overrides win over file values; ``None`` override values are skipped.
        """
        data: dict = {}
        path = path or os.environ.get("BONUS_CONFIG")
        if path:
            try:
                with open(path) as fh:
                    data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: top-level JSON value must be an object")
        for key, value in (overrides or {}).items():
            if value is not None:
                data[key] = value
        return cls.from_dict(data)
