"""Functions sampled on uniform tensor grids."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid: node ``i`` sits at ``origin + i * spacing`` per axis.

    The midpoint quadrature weight of every node is ``prod(spacing)``.
    """

    origin: tuple[float, ...]
    spacing: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        if not len(self.origin) == len(self.spacing) == len(self.shape):
            raise ValueError("origin, spacing and shape must have equal length")
        if any(h <= 0 for h in self.spacing) or any(m <= 0 for m in self.shape):
            raise ValueError("spacing and shape must be positive")

    @classmethod
    def cell_centered(cls, lower, upper, shape) -> "Grid":
        """Grid of cell midpoints partitioning the box [lower, upper]."""
        lower = np.broadcast_to(np.asarray(lower, float), (len(shape),))
        upper = np.broadcast_to(np.asarray(upper, float), (len(shape),))
        h = (upper - lower) / np.asarray(shape)
        return cls(tuple(lower + h / 2), tuple(h), tuple(shape))

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [o + h * np.arange(m) for o, h, m in zip(self.origin, self.spacing, self.shape)]

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (ndim,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "spacing": list(self.spacing),
                "shape": list(self.shape)}

    @classmethod
    def from_dict(cls, d) -> "Grid":
        return cls(tuple(d["origin"]), tuple(d["spacing"]), tuple(d["shape"]))


@dataclass(frozen=True, eq=False)
class SampledField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridMismatch(f"values shape {values.shape} != grid shape {self.grid.shape}")
        object.__setattr__(self, "values", values)

    @classmethod
    def sample(cls, grid: Grid, func) -> "SampledField":
        """Evaluate a vectorised ``func(points[..., n])`` on the grid nodes."""
        return cls(grid, func(grid.nodes()))

    @classmethod
    def zeros(cls, grid: Grid) -> "SampledField":
        return cls(grid, np.zeros(grid.shape))

    def inner(self, other: "SampledField") -> float:
        self._check(other)
        return float(np.sum(self.values * other.values) * self.grid.cell_volume)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(self.values ** 2) * self.grid.cell_volume))

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)

    def _check(self, other):
        if other.grid != self.grid:
            raise GridMismatch("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return SampledField(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return SampledField(self.grid, self.values - other.values)

    def __mul__(self, c: float):
        return SampledField(self.grid, self.values * c)

    __rmul__ = __mul__

    def write_csv(self, path) -> None:
        """Headered CSV: one column per coordinate, then ``value``."""
        pts = self.grid.nodes().reshape(-1, self.grid.ndim)
        cols = [f"x{i}" for i in range(self.grid.ndim)] + ["value"]
        rows = np.column_stack([pts, self.values.reshape(-1)])
        lines = [",".join(cols)] + [",".join(format_float(v) for v in row) for row in rows]
        atomic_write_text(path, "\n".join(lines) + "\n")

    def write_binary(self, path) -> None:
        """Little-endian float64 C-order values plus a ``.json`` sidecar with the grid."""
        path = Path(path)
        atomic_write_bytes(path, self.values.astype("<f8").tobytes(order="C"))
        atomic_write_text(path.with_suffix(path.suffix + ".json"),
                          json.dumps(self.grid.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read_binary(cls, path) -> "SampledField":
        path = Path(path)
        grid = Grid.from_dict(json.loads(path.with_suffix(path.suffix + ".json").read_text()))
        values = np.frombuffer(path.read_bytes(), dtype="<f8").reshape(grid.shape)
        return cls(grid, values.copy())


def format_float(v) -> str:
    return format(float(v), ".17g")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))
