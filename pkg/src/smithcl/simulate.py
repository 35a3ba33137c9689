"""Spectral simulation of the Smith process and dataset containers."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .model import ParameterDomainError, SmithParams

MAX_STORMS = 1_000_000
_FIRST_BATCH = 256

SCALES = ("frechet", "gumbel", "raw")


class SimulationError(RuntimeError):
    """The storm loop hit its hard cap before the field was complete."""


@dataclass
class SimConfig:
    sites: np.ndarray
    params: SmithParams
    years: int = 40
    days_per_year: int = 91
    seed: int = 0
    buffer_radius: float | None = None
    stop_tolerance: float = 1e-6

    def __post_init__(self):
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        if self.years < 1 or self.days_per_year < 1:
            raise ParameterDomainError("years and days_per_year must be >= 1")
        if self.buffer_radius is None:
            self.buffer_radius = default_buffer(self.params)
        if not self.buffer_radius > 0:
            raise ParameterDomainError("buffer_radius must be positive")
        if not 0 < self.stop_tolerance <= 1e-3:
            raise ParameterDomainError("stop_tolerance must lie in (0, 1e-3]")


@dataclass
class Dataset:
    """T x p observations at planar sites, one row per day."""

    values: np.ndarray
    sites: np.ndarray
    scale: str
    year_index: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        self.sites = np.atleast_2d(np.asarray(self.sites, dtype=float))
        self.year_index = np.asarray(self.year_index, dtype=np.int64)
        if self.scale not in SCALES:
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.values.shape[1] != self.sites.shape[0]:
            raise ValueError("column count does not match the number of sites")
        if self.year_index.shape[0] != self.values.shape[0]:
            raise ValueError("year_index must have one entry per row")
        if self.scale == "frechet" and np.any(self.values <= 0):
            raise ParameterDomainError("Frechet-scale values must be positive")

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_sites(self) -> int:
        return self.values.shape[1]

    def rows(self, idx) -> "Dataset":
        return Dataset(self.values[idx], self.sites, self.scale, self.year_index[idx], self.meta)

    def block_maxima(self) -> np.ndarray:
        """Per-year columnwise maxima, years in increasing order."""
        years = np.unique(self.year_index)
        return np.vstack([self.values[self.year_index == y].max(axis=0) for y in years])

    def to_csv(self, path) -> None:
        """Write values with 17 significant digits and a JSON sidecar next to ``path``."""
        path = Path(path)
        header = ",".join(f"site_{x!r}_{y!r}" for x, y in self.sites.tolist())
        np.savetxt(path, self.values, delimiter=",", fmt="%.17g", header=header, comments="")
        side = {
            "sites": self.sites.tolist(),
            "scale": self.scale,
            "year_index": self.year_index.tolist(),
            **self.meta,
        }
        sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        path = Path(path)
        side = json.loads(sidecar_path(path).read_text())
        values = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        meta = {k: v for k, v in side.items() if k not in ("sites", "scale", "year_index")}
        return cls(values, side["sites"], side["scale"], side["year_index"], meta)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def default_buffer(params: SmithParams) -> float:
    """Four standard deviations along the major axis of Sigma."""
    return 4.0 * float(np.sqrt(np.linalg.eigvalsh(params.matrix).max()))


def regular_grid(n: int, k: float) -> np.ndarray:
    """n*n sites at coordinates {k, 2k, ..., nk}^2, x varying slowest."""
    if n < 2 or not k > 0:
        raise ParameterDomainError("need n >= 2 and k > 0")
    c = k * np.arange(1, n + 1, dtype=float)
    xx, yy = np.meshgrid(c, c, indexing="ij")
    return np.column_stack([xx.ravel(), yy.ravel()])


def day_rng(seed: int, year: int, day: int) -> np.random.Generator:
    """Independent counter-based stream for one simulated day."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, year, day])))


def simulate_field(sites, params: SmithParams, rng: np.random.Generator,
                   buffer_radius: float | None = None, stop_tolerance: float = 1e-6) -> np.ndarray:
    """One realisation of the process at ``sites`` on unit Frechet margins.

    Storms arrive in decreasing order of intensity ``A / Gamma_k`` with centres
    uniform on the site bounding box dilated by ``buffer_radius`` (area ``A``).
    The loop stops once no later storm can raise the smallest site value.
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    if buffer_radius is None:
        buffer_radius = default_buffer(params)
    lo = sites.min(axis=0) - buffer_radius
    hi = sites.max(axis=0) + buffer_radius
    width = hi - lo
    area = float(width[0] * width[1])
    fmax = 1.0 / (2.0 * np.pi * np.sqrt(params.det))
    prec = params.precision
    sx = np.ascontiguousarray(sites[:, 0])
    sy = np.ascontiguousarray(sites[:, 1])
    z = np.zeros(sites.shape[0])
    gamma, used, batch = 0.0, 0, _FIRST_BATCH
    while True:
        expo = rng.standard_exponential(batch)
        cx = lo[0] + width[0] * rng.random(batch)
        cy = lo[1] + width[1] * rng.random(batch)
        gamma, k, done = kernels.storm_batch(
            sx, sy, prec[0, 0], prec[0, 1], prec[1, 1], area * fmax,
            gamma, expo, cx, cy, z, stop_tolerance,
        )
        used += k
        if done:
            return z
        if used >= MAX_STORMS:
            raise SimulationError(f"field not complete after {used} storms")
        batch = min(2 * batch, MAX_STORMS - used)


def simulate_dataset(config: SimConfig) -> Dataset:
    """T = years * days independent fields stacked row-wise on the Frechet scale."""
    t = config.years * config.days_per_year
    values = np.empty((t, config.sites.shape[0]))
    row = 0
    for year in range(config.years):
        for day in range(config.days_per_year):
            values[row] = simulate_field(
                config.sites, config.params, day_rng(config.seed, year, day),
                config.buffer_radius, config.stop_tolerance,
            )
            row += 1
    year_index = np.repeat(np.arange(config.years), config.days_per_year)
    meta = {
        "seed": int(config.seed),
        "truth": dict(zip(("sigma11", "sigma22", "sigma12"), config.params.as_tuple())),
        "config": {
            "years": config.years,
            "days_per_year": config.days_per_year,
            "buffer_radius": config.buffer_radius,
            "stop_tolerance": config.stop_tolerance,
        },
    }
    return Dataset(values, config.sites, "frechet", year_index, meta)


def to_gumbel(ds: Dataset) -> Dataset:
    """Elementwise log of a Frechet-scale dataset."""
    if ds.scale != "frechet":
        raise ParameterDomainError(f"to_gumbel expects Frechet-scale data, got {ds.scale!r}")
    return Dataset(np.log(ds.values), ds.sites, "gumbel", ds.year_index, dict(ds.meta))
