"""The Shepp-Logan phantom as a heaviside GQNN.

Each ellipse ``{x : Q(x) <= 1}`` with ``Q(x) = (R(x-c))^T D R(x-c)`` and
``D = diag(a^-2, b^-2)`` is the zero super-level set of the quadratic
``1 - Q(x)``, so one GQNN neuron with a step activation reproduces it.  The
ellipse table lives in ``data/shepp_logan.csv`` in the usual [-1, 1]^2
coordinates and is mapped affinely onto [0, 1]^2.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .activation import ActivationProfile, heaviside
from .fields import Grid, SampledField, atomic_write_bytes, atomic_write_text
from .networks import GQNN

FIXTURE_COLUMNS = ("center_x", "center_y", "a", "b", "rotation_deg", "intensity")


class FixtureMissing(FileNotFoundError):
    pass


class ResolutionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EllipseSpec:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    rotation_deg: float = 0.0
    intensity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(v) for v in self.center))
        object.__setattr__(self, "semi_axes", tuple(float(v) for v in self.semi_axes))
        if len(self.center) != 2 or len(self.semi_axes) != 2:
            raise ValueError("ellipses live in the plane")
        if min(self.semi_axes) <= 0:
            raise ValueError("semi-axes must be positive")

    def rotation(self) -> np.ndarray:
        """Matrix taking world offsets into the ellipse's axis frame."""
        t = np.deg2rad(self.rotation_deg)
        c, s = np.cos(t), np.sin(t)
        return np.array([[c, s], [-s, c]])

    def shape_matrix(self) -> np.ndarray:
        R = self.rotation()
        D = np.diag(np.asarray(self.semi_axes) ** -2.0)
        return R.T @ D @ R

    def quadratic_form(self, x) -> np.ndarray:
        d = np.asarray(x, dtype=float) - np.asarray(self.center)
        return np.einsum("...i,ij,...j->...", d, self.shape_matrix(), d)

    def mapped(self, scale: float, shift) -> "EllipseSpec":
        """Image under x -> scale * x + shift."""
        c = scale * np.asarray(self.center) + np.asarray(shift, dtype=float)
        return EllipseSpec(tuple(c), (scale * self.semi_axes[0], scale * self.semi_axes[1]),
                           self.rotation_deg, self.intensity)

    def boundary(self, count: int) -> np.ndarray:
        t = np.linspace(0.0, 2 * np.pi, count, endpoint=False)
        local = np.column_stack([self.semi_axes[0] * np.cos(t), self.semi_axes[1] * np.sin(t)])
        return local @ self.rotation() + np.asarray(self.center)


def ellipse_to_neuron(e: EllipseSpec) -> tuple[float, np.ndarray, np.ndarray, float]:
    """``(alpha, w, A, theta)`` with ``w.x + x^T A x + theta = 1 - Q(x)``."""
    M = e.shape_matrix()
    c = np.asarray(e.center)
    return e.intensity, 2.0 * M @ c, -M, 1.0 - c @ M @ c


def gqnn_from_ellipses(ellipses) -> GQNN:
    neurons = [ellipse_to_neuron(e) for e in ellipses]
    return GQNN(alpha=np.array([v[0] for v in neurons]),
                w=np.array([v[1] for v in neurons]).reshape(-1, 2),
                theta=np.array([v[3] for v in neurons]),
                A=np.array([v[2] for v in neurons]).reshape(-1, 2, 2))


def load_ellipses(path=None) -> list[EllipseSpec]:
    """Read the ellipse table; defaults to the packaged Shepp-Logan fixture."""
    try:
        if path is None:
            text = resources.files("radialnets").joinpath("data/shepp_logan.csv").read_text()
        else:
            text = Path(path).read_text()
    except (FileNotFoundError, OSError) as exc:
        raise FixtureMissing(f"ellipse table not found: {path or 'packaged fixture'}") from exc
    reader = csv.DictReader(text.splitlines())
    if tuple(reader.fieldnames or ()) != FIXTURE_COLUMNS:
        raise ValueError(f"ellipse table must have columns {FIXTURE_COLUMNS}")
    return [EllipseSpec((float(r["center_x"]), float(r["center_y"])),
                        (float(r["a"]), float(r["b"])),
                        float(r["rotation_deg"]), float(r["intensity"])) for r in reader]


def unit_square_ellipses(path=None) -> list[EllipseSpec]:
    """Fixture ellipses mapped from [-1, 1]^2 onto [0, 1]^2."""
    return [e.mapped(0.5, (0.5, 0.5)) for e in load_ellipses(path)]


def build_shepp_logan_gqnn(path=None) -> GQNN:
    return gqnn_from_ellipses(unit_square_ellipses(path))


def phantom_grid(resolution: int) -> Grid:
    return Grid.cell_centered(0.0, 1.0, (resolution, resolution))


def rasterize(params, act: ActivationProfile | None = None, resolution: int = 256) -> SampledField:
    """Network sampled at the pixel centres of a square grid on [0, 1]^2.

    Neuron outputs are accumulated one neuron at a time in storage order, so
    the floating-point sum is reproducible and independent of BLAS.
    """
    act = heaviside() if act is None else act
    grid = phantom_grid(resolution)
    fires = act(params.decision(grid.nodes()))
    out = np.zeros(grid.shape)
    for j in range(params.N):
        out += params.alpha[j] * fires[..., j]
    return SampledField(grid, out)


def membership(params: GQNN, x) -> np.ndarray:
    """Boolean neuron predicates ``decision >= 0``, shape ``x.shape[:-1] + (N,)``."""
    return params.decision(np.asarray(x, dtype=float)) >= 0.0


def ellipse_membership(ellipses, x) -> np.ndarray:
    """Predicates ``Q(x) <= 1`` evaluated directly from the ellipse geometry."""
    x = np.asarray(x, dtype=float)
    cols = []
    for e in ellipses:
        t = np.deg2rad(e.rotation_deg)
        dx, dy = x[..., 0] - e.center[0], x[..., 1] - e.center[1]
        u = (dx * np.cos(t) + dy * np.sin(t)) / e.semi_axes[0]
        v = (-dx * np.sin(t) + dy * np.cos(t)) / e.semi_axes[1]
        cols.append(u * u + v * v <= 1.0)
    return np.stack(cols, axis=-1)


def rasterize_ellipses(ellipses, resolution: int = 256) -> SampledField:
    """Direct ellipse-sum rasteriser, written without the network machinery."""
    grid = phantom_grid(resolution)
    inside = ellipse_membership(ellipses, grid.nodes())
    out = np.zeros(grid.shape)
    for j, e in enumerate(ellipses):
        out += np.where(inside[..., j], e.intensity, 0.0)
    return SampledField(grid, out)


def boundary_band(grid: Grid, ellipses, width: float | None = None) -> np.ndarray:
    """Mask of nodes within ``width`` (default one pixel diagonal) of an ellipse boundary."""
    h = max(grid.spacing)
    width = np.hypot(*grid.spacing) if width is None else width
    pts = grid.nodes().reshape(-1, grid.ndim)
    mask = np.zeros(pts.shape[0], dtype=bool)
    for e in ellipses:
        # chord spacing h/50 keeps the sampled curve within h/10^4 of the true boundary
        count = max(64, int(np.ceil(2 * np.pi * max(e.semi_axes) / (h / 50))))
        tree = cKDTree(e.boundary(count))
        dist, _ = tree.query(pts, distance_upper_bound=width + h / 50)
        mask |= dist <= width + h / 50
    return mask.reshape(grid.shape)


def compare_fields(a: SampledField, b: SampledField, ellipses=None) -> dict:
    """Agreement statistics of two rasters away from the ellipse boundaries.

    ``ellipses`` defaults to the packaged phantom on [0, 1]^2; pass an empty
    list to compare every node.
    """
    if a.grid != b.grid:
        raise ResolutionMismatch(f"grids differ: {a.grid.shape} vs {b.grid.shape}")
    ellipses = unit_square_ellipses() if ellipses is None else ellipses
    band = boundary_band(a.grid, ellipses) if ellipses else np.zeros(a.grid.shape, bool)
    keep = ~band
    diff = np.abs(a.values - b.values)[keep]
    count = int(np.count_nonzero(diff))
    return {"mismatch_count": count,
            "mismatch_fraction": count / diff.size if diff.size else 0.0,
            "max_abs_diff": float(diff.max()) if diff.size else 0.0,
            "boundary_excluded_count": int(band.sum())}


def write_pgm(field: SampledField, path) -> dict:
    """16-bit binary PGM, first grid axis horizontal, top row at the largest second coordinate.

    Values are mapped affinely onto 0..65535; the map is returned and written
    to ``<path>.json`` so that ``value = offset + scale * pixel``.
    """
    if field.grid.ndim != 2:
        raise ValueError("PGM output needs a 2-D field")
    v = field.values
    lo, hi = float(v.min()), float(v.max())
    scale = (hi - lo) / 65535 if hi > lo else 1.0
    pix = np.rint((v - lo) / scale).astype(">u2")
    image = pix.T[::-1]
    rows, cols = image.shape
    header = f"P5\n{cols} {rows}\n65535\n".encode("ascii")
    atomic_write_bytes(path, header + image.tobytes())
    meta = {"offset": lo, "scale": scale, "maxval": 65535,
            "orientation": "x0 left-to-right, x1 bottom-to-top"}
    atomic_write_text(Path(str(path) + ".json"), json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def read_pgm(path) -> np.ndarray:
    """Pixel array of a binary PGM, indexed like the field written by :func:`write_pgm`."""
    data = Path(path).read_bytes()
    # exactly one whitespace byte separates maxval from the raster
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValueError("not a binary PGM")
    cols, rows, maxval = (int(g) for g in m.groups())
    dtype = ">u2" if maxval > 255 else "u1"
    pixels = np.frombuffer(data, dtype=dtype, count=rows * cols, offset=m.end())
    return pixels.reshape(rows, cols)[::-1].T.astype(np.int64)
