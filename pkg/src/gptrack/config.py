"""Validated experiment configuration.

A config is a JSON object; only ``experiment`` is required.  Everything
else is filled from the per-experiment defaults below and then checked
against the preconditions of the numerical modules, so that a bad config
fails before any computation starts.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .acquisition import AcquisitionGeometry, GeometryError

TWO_PI = 2 * np.pi

EXPERIMENTS = ("spectrum", "recon-vs-aperture", "track-fullview", "track-limited")


class ConfigError(ValueError):
    """Config file is missing, malformed or violates a precondition."""


def balanced_groups(n: int, count: int = 5, span: float = 0.2 * np.pi):
    """``count`` groups of width ``span`` starting at ``2 pi g / count``.

    Sensors are shared out as evenly as possible, earlier groups first,
    e.g. ``n=21`` gives counts ``(5, 4, 4, 4, 4)``.
    """
    if count < 1 or n < count:
        raise ValueError(f"cannot split {n} sensors into {count} groups")
    base, extra = divmod(n, count)
    return [(TWO_PI * g / count, span, base + (g < extra)) for g in range(count)]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GeometryConfig(_Strict):
    layout: Literal["uniform", "grouped"] = "uniform"
    n: int = Field(gt=0)
    radius: float = Field(gt=0)
    delta: float = Field(default=1.0, gt=0)
    gamma: float = Field(default=TWO_PI, gt=0, le=TWO_PI)
    # (start, span, count); defaults to balanced_groups(n) for "grouped"
    groups: Optional[list[tuple[float, float, int]]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.radius <= self.delta:
            raise ValueError(f"rho = radius/delta must exceed 1 (radius={self.radius}, delta={self.delta})")
        if self.groups is not None:
            if self.layout != "grouped":
                raise ValueError("groups given for a uniform layout")
            total = sum(g[2] for g in self.groups)
            if total != self.n:
                raise ValueError(f"group counts sum to {total}, expected n={self.n}")
        return self

    def build(self) -> AcquisitionGeometry:
        if self.layout == "uniform":
            return AcquisitionGeometry.uniform(self.n, self.radius, self.delta, self.gamma)
        groups = self.groups if self.groups is not None else balanced_groups(self.n)
        return AcquisitionGeometry.grouped(groups, self.radius, self.delta)


class MaterialConfig(_Strict):
    kappa: float = Field(default=3.0, gt=0)

    @field_validator("kappa")
    @classmethod
    def _not_one(cls, v):
        if v == 1:
            raise ValueError("kappa = 1 gives no contrast")
        return v


class OrdersConfig(_Strict):
    k_data: int = Field(default=5, ge=1)
    k_track: int = Field(default=2, ge=1)


class MotionConfig(_Strict):
    sigma_a: float = Field(default=2.0, ge=0)
    sigma_theta: float = Field(default=0.5, ge=0)
    dtau: float = Field(default=0.01, gt=0)
    duration: float = Field(default=10.0, gt=0)

    @property
    def steps(self) -> int:
        return max(1, int(round(self.duration / self.dtau)))


class MuGridConfig(_Strict):
    low: float = Field(default=1e-6, gt=0)
    high: float = Field(default=1e-1, gt=0)
    count: int = Field(default=26, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.high < self.low:
            raise ValueError("high must be >= low")
        return self

    def values(self) -> np.ndarray:
        return np.logspace(np.log10(self.low), np.log10(self.high), self.count)


Vector5 = tuple[float, float, float, float, float]


class ExperimentConfig(_Strict):
    experiment: Literal["spectrum", "recon-vs-aperture", "track-fullview", "track-limited"]
    geometry: GeometryConfig
    material: MaterialConfig = MaterialConfig()
    orders: OrdersConfig = OrdersConfig()
    motion: MotionConfig = MotionConfig()
    noise_levels: list[float] = Field(default_factory=lambda: [0.1])
    seeds: list[int] = Field(default_factory=lambda: [0])
    out: str = "results"
    # reference target: "asymmetric", "ellipse", "disk", or a CGPT JSON path
    target: str = "asymmetric"
    gammas: list[float] = Field(default_factory=list)
    target_scales: list[float] = Field(default_factory=list)
    initial_state: Vector5 = (-1.0, 1.0, 5.0, -5.0, 1.5 * np.pi)
    initial_guess: Vector5 = (0.0, 0.0, 10.0, -0.5, 0.0)
    initial_cov_diag: Vector5 = (1.0, 1.0, 25.0, 25.0, np.pi**2)
    mu_grid: MuGridConfig = MuGridConfig()
    dps: Optional[int] = Field(default=None, ge=16)

    @field_validator("noise_levels")
    @classmethod
    def _levels(cls, v):
        if not v or any(p < 0 for p in v):
            raise ValueError("noise levels must be a non-empty list of values >= 0")
        return v

    @field_validator("seeds")
    @classmethod
    def _seeds(cls, v):
        if not v or any(s < 0 for s in v):
            raise ValueError("seeds must be a non-empty list of non-negative integers")
        return v

    @field_validator("gammas")
    @classmethod
    def _gammas(cls, v):
        if any(not 0 < g <= TWO_PI + 1e-12 for g in v):
            raise ValueError("apertures must lie in (0, 2 pi]")
        return [min(g, TWO_PI) for g in v]

    @field_validator("target_scales")
    @classmethod
    def _scales(cls, v):
        if any(not d > 0 for d in v):
            raise ValueError("target scales must be positive")
        return v

    @field_validator("initial_cov_diag")
    @classmethod
    def _cov(cls, v):
        if any(not c > 0 for c in v):
            raise ValueError("initial covariance diagonal must be positive")
        return v

    @model_validator(mode="after")
    def _preconditions(self):
        n = self.geometry.n
        K = self.orders.k_data
        if self.experiment in ("track-fullview", "track-limited"):
            K = max(K, self.orders.k_track)
            if self.orders.k_track > self.orders.k_data:
                raise ValueError("orders.k_track must not exceed orders.k_data")
        if n < 2 * K:
            raise ValueError(f"need N >= 2K (N={n}, K={K})")
        try:
            self.geometry.build()
        except GeometryError as exc:
            raise ValueError(f"geometry: {exc}") from exc
        if self.experiment in ("track-fullview", "track-limited"):
            r = self.geometry.radius
            z = float(np.hypot(*self.initial_state[2:4]))
            for d in self.target_scales or [self.geometry.delta]:
                if not z + d < r:
                    raise ValueError(f"initial state at |z|={z:.6g} with scale {d} is outside "
                                     f"the circle of radius {r}")
        return self

    @property
    def steps(self) -> int:
        return self.motion.steps

    def canonical_json(self) -> str:
        """Sorted compact JSON of everything except the output directory."""
        return json.dumps(self.model_dump(mode="json", exclude={"out"}), sort_keys=True,
                          separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


DEFAULTS = {
    "spectrum": {
        "geometry": {"n": 101, "radius": 1.2, "delta": 1.0},
        "orders": {"k_data": 50, "k_track": 1},
        "gammas": [TWO_PI, 1.5 * np.pi, np.pi, 0.5 * np.pi],
    },
    "recon-vs-aperture": {
        "geometry": {"n": 101, "radius": 1.2, "delta": 1.0},
        "orders": {"k_data": 5, "k_track": 2},
        "noise_levels": [0.0, 0.01, 0.1],
        "seeds": list(range(10)),
        "target": "ellipse",
        "gammas": [np.pi * j / 8 for j in range(1, 17)],
    },
    "track-fullview": {
        "geometry": {"n": 20, "radius": 15.0, "delta": 5.0},
        "noise_levels": [0.1, 0.2],
        "target_scales": [5.0, 0.5],
    },
    "track-limited": {
        "geometry": {"n": 21, "radius": 40.0, "delta": 5.0, "gamma": np.pi},
        "noise_levels": [0.1],
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{path}: {err['msg']}")
    return "\n".join(lines)


def make_config(data: dict | None = None, **overrides) -> ExperimentConfig:
    """Build a config from a mapping, filling per-experiment defaults."""
    data = _merge(dict(data or {}), overrides)
    exp = data.get("experiment")
    if exp not in DEFAULTS:
        raise ConfigError(f"experiment: expected one of {', '.join(EXPERIMENTS)} (got {exp!r})")
    try:
        return ExperimentConfig.model_validate(_merge(DEFAULTS[exp], data))
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def load_config(path) -> ExperimentConfig:
    """Read and validate a JSON config; a missing file raises FileNotFoundError."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return make_config(data)
