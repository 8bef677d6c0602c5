"""Discrete radial wavelet expansions, N-term approximation and conversion to RQNNs.

Atoms are indexed by a scale ``k`` and a lattice vector ``j``; the atom
``psi_{k, y}`` is centred at ``y = 2^(-k/n) j``.  ``coefficient_l1`` is the
coefficient sum of the given representation.  It bounds the frame-based L1
norm from above (that norm is an infimum over all representations), so a rate
bound verified with it is a conservative check.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import product

import numpy as np

from .fields import Grid, SampledField
from .networks import RQNN, empty_rqnn, rqnn_from_centers
from .wavelets import RadialKernelSystem, eval_psi


class GridTooCoarse(ValueError):
    pass


class DictionaryEmpty(ValueError):
    pass


@dataclass(frozen=True, order=True)
class WaveletAtom:
    k: int
    j: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "j", tuple(int(v) for v in np.atleast_1d(self.j)))

    def center(self, n: int | None = None) -> np.ndarray:
        return atom_center(self, n)


def atom_center(atom: WaveletAtom, n: int | None = None) -> np.ndarray:
    """Lattice point 2^(-k/n) j of the atom."""
    n = len(atom.j) if n is None else n
    if n != len(atom.j):
        raise ValueError(f"atom lattice vector has dimension {len(atom.j)}, not {n}")
    return 2.0 ** (-atom.k / n) * np.asarray(atom.j, dtype=float)


@dataclass(frozen=True)
class FrameExpansion:
    terms: tuple[tuple[WaveletAtom, float], ...] = ()

    def __post_init__(self):
        terms = tuple((a if isinstance(a, WaveletAtom) else WaveletAtom(*a), float(b))
                      for a, b in self.terms)
        atoms = [a for a, _ in terms]
        if len(set(atoms)) != len(atoms):
            raise ValueError("atoms of an expansion must be distinct")
        if len({len(a.j) for a in atoms}) > 1:
            raise ValueError("atoms of an expansion must share a dimension")
        object.__setattr__(self, "terms", terms)

    def __len__(self):
        return len(self.terms)

    @property
    def atoms(self) -> list[WaveletAtom]:
        return [a for a, _ in self.terms]

    @property
    def betas(self) -> np.ndarray:
        return np.array([b for _, b in self.terms], dtype=float)

    @property
    def k_max(self) -> int | None:
        return max((a.k for a in self.atoms), default=None)

    def scaled(self, c: float) -> "FrameExpansion":
        return FrameExpansion(tuple((a, c * b) for a, b in self.terms))

    def to_json(self) -> list[dict]:
        return [{"k": a.k, "j": list(a.j), "beta": b} for a, b in self.terms]

    @classmethod
    def from_json(cls, data) -> "FrameExpansion":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(tuple((WaveletAtom(d["k"], tuple(d["j"])), float(d["beta"])) for d in data))


def coefficient_l1(exp: FrameExpansion) -> float:
    """Sum of |beta|: an upper bound for the L1 frame norm of the synthesised function."""
    return float(np.sum(np.abs(exp.betas)))


def greedy_n_term(exp: FrameExpansion, N: int) -> FrameExpansion:
    """Keep the N terms with largest |beta|; ties go to the lexicographically smaller (k, j).

    Retained terms keep their original order.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    ranked = sorted(range(len(exp)), key=lambda i: (-abs(exp.terms[i][1]), exp.terms[i][0]))
    keep = sorted(ranked[:N])
    return FrameExpansion(tuple(exp.terms[i] for i in keep))


def _atom_values(sys, atom, pts):
    return eval_psi(sys, atom.k, pts, atom_center(atom, sys.n))


def synthesize(sys: RadialKernelSystem, exp: FrameExpansion, grid: Grid) -> SampledField:
    """Sample sum_beta beta * psi_{k, y(atom)} on the grid nodes."""
    pts = grid.nodes()
    values = np.zeros(grid.shape)
    for atom, beta in exp.terms:
        values += beta * _atom_values(sys, atom, pts)
    return SampledField(grid, values)


def check_resolution(grid: Grid, n: int, k_max: int | None) -> None:
    if k_max is None:
        return
    limit = 2.0 ** (-k_max / n) / 4
    if max(grid.spacing) > limit * (1 + 1e-12):
        raise GridTooCoarse(
            f"grid spacing {max(grid.spacing):g} exceeds {limit:g} needed for scale {k_max}")


def l2_error(sys: RadialKernelSystem, full: FrameExpansion, approx: FrameExpansion,
             grid: Grid) -> float:
    """Quadrature L2 norm of synthesize(full) - synthesize(approx)."""
    ks = [k for k in (full.k_max, approx.k_max) if k is not None]
    check_resolution(grid, sys.n, max(ks) if ks else None)
    return (synthesize(sys, full, grid) - synthesize(sys, approx, grid)).l2_norm()


def rate_table(sys: RadialKernelSystem, exp: FrameExpansion, grid: Grid, Ns) -> list[dict]:
    """Greedy N-term errors against the bound coefficient_l1 * (N+1)^(-1/2).

    Each atom is sampled once; the error for N is the norm of the synthesis of
    the dropped terms, identical to ``l2_error(full, greedy_n_term(full, N))``.
    """
    check_resolution(grid, sys.n, exp.k_max)
    pts = grid.nodes()
    atoms = np.stack([_atom_values(sys, a, pts) for a in exp.atoms]) if len(exp) else \
        np.zeros((0,) + grid.shape)
    index = {a: i for i, a in enumerate(exp.atoms)}
    l1 = coefficient_l1(exp)
    rows = []
    for N in Ns:
        kept = np.zeros(len(exp), dtype=bool)
        kept[[index[a] for a in greedy_n_term(exp, N).atoms]] = True
        dropped = np.tensordot(np.where(kept, 0.0, exp.betas), atoms, axes=1) \
            if len(exp) else np.zeros(grid.shape)
        err = SampledField(grid, dropped).l2_norm()
        rows.append({"N": int(N), "l2_error": err, "bound": l1 * (N + 1) ** -0.5})
    return rows


def to_rqnn(sys: RadialKernelSystem, exp: FrameExpansion) -> RQNN:
    """Exact RQNN form of an expansion: two neurons per atom.

    For atom (k, j, beta) with centre y the neurons are
    ``C_n beta 2^(k/2) s(r^2 - 4^(k/n) |x-y|^2)`` and
    ``-C_n beta 2^(k/2-1) s(r^2 - 4^((k-1)/n) |x-y|^2)``, stored with
    ``w = -2 xi y`` and ``theta = r^2 + xi |y|^2``.
    """
    n = sys.n
    if not len(exp):
        return empty_rqnn(n)
    alpha, xi, centers = [], [], []
    for atom, beta in exp.terms:
        y = atom_center(atom, n)
        k = atom.k
        alpha += [sys.C_n * beta * 2.0 ** (k / 2), -sys.C_n * beta * 2.0 ** (k / 2 - 1)]
        xi += [-(4.0 ** (k / n)), -(4.0 ** ((k - 1) / n))]
        centers += [y, y]
    return rqnn_from_centers(np.array(alpha), np.array(centers), np.array(xi),
                             np.full(len(xi), sys.r ** 2))


def dictionary_atoms(n: int, k_min: int, k_max: int, lower, upper) -> list[WaveletAtom]:
    """All atoms with k_min <= k <= k_max and centre inside the box [lower, upper]^n."""
    lower = np.broadcast_to(np.asarray(lower, float), (n,))
    upper = np.broadcast_to(np.asarray(upper, float), (n,))
    atoms = []
    for k in range(k_min, k_max + 1):
        s = 2.0 ** (k / n)
        ranges = [range(int(np.ceil(lo * s - 1e-12)), int(np.floor(hi * s + 1e-12)) + 1)
                  for lo, hi in zip(lower, upper)]
        atoms += [WaveletAtom(k, j) for j in product(*ranges)]
    return atoms


def analyze_greedy(sys: RadialKernelSystem, f: SampledField, k_min: int, k_max: int,
                   lower, upper, N: int, rel_tol: float = 1e-12) -> FrameExpansion:
    """Matching pursuit over the dictionary of atoms between scales k_min and k_max.

    Each step picks the atom maximising |<residual, psi>| / |psi|, adds
    <residual, psi> / |psi|^2 to its coefficient and updates the residual.
    Stops after N steps or once the best correlation falls below
    ``rel_tol * |f|``.
    """
    atoms = dictionary_atoms(sys.n, k_min, k_max, lower, upper)
    if not atoms:
        raise DictionaryEmpty("no lattice points inside the dictionary box")
    check_resolution(f.grid, sys.n, k_max)
    pts = f.grid.nodes()
    dv = f.grid.cell_volume
    D = np.stack([_atom_values(sys, a, pts).reshape(-1) for a in atoms])
    norms = np.sqrt(np.sum(D * D, axis=1) * dv)
    usable = norms > 0
    residual = f.values.reshape(-1).copy()
    floor = rel_tol * f.l2_norm()
    coefs: dict[int, float] = {}
    for _ in range(N):
        corr = D @ residual * dv
        score = np.where(usable, np.abs(corr) / np.where(usable, norms, 1.0), 0.0)
        best = int(np.argmax(score))
        if score[best] <= floor:
            break
        c = corr[best] / norms[best] ** 2
        residual -= c * D[best]
        coefs[best] = coefs.get(best, 0.0) + c
    return FrameExpansion(tuple((atoms[i], b) for i, b in sorted(coefs.items()) if b != 0.0))


def random_expansion(rng: np.random.Generator, n: int, size: int, k_range=(0, 3),
                     center_box: float = 2.0) -> FrameExpansion:
    """``size`` distinct atoms with scales in k_range, centres in the box, normal betas."""
    pool = dictionary_atoms(n, k_range[0], k_range[1], -center_box, center_box)
    if size > len(pool):
        raise ValueError(f"only {len(pool)} atoms available, asked for {size}")
    pick = rng.choice(len(pool), size=size, replace=False)
    betas = rng.normal(size=size)
    return FrameExpansion(tuple((pool[i], float(b)) for i, b in zip(sorted(pick), betas)))


# grids and atom ranges for the desk-scale rate experiment
RATE_SETUPS = {
    1: {"k_range": (0, 3), "center_box": 2.0, "box": 14.0, "shape": (1024,)},
    2: {"k_range": (0, 4), "center_box": 1.5, "box": 8.0, "shape": (256, 256)},
}


def rate_grid(n: int) -> Grid:
    setup = RATE_SETUPS[n]
    return Grid.cell_centered(-setup["box"], setup["box"], setup["shape"])
