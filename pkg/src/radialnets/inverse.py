"""Linear forward operators and Gauss-Newton inversion through an RQNN.

The unknown is the flat RQNN parameter vector ``p``; data are sampled fields
``y = F(Psi[p])`` where ``Psi[p]`` is the network sampled on the operator's
domain grid.  Each Gauss-Newton step solves the linearised problem with an
SVD-based Moore-Penrose inverse.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from itertools import permutations

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.optimize import linear_sum_assignment

from .activation import ActivationProfile
from .fields import Grid, GridMismatch, SampledField, atomic_write_text, format_float
from .networks import RQNN, check_rqnn_constraint, eval_network, grad_rqnn

OPERATOR_KINDS = ("identity", "cumulative-integration", "gaussian-blur", "user-matrix")


class Diverged(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class RankCollapse(RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class LinearOperator:
    kind: str
    domain: Grid
    range: Grid
    width: float | None = None
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in OPERATOR_KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        if self.kind == "gaussian-blur" and not (self.width and self.width > 0):
            raise ValueError("gaussian-blur needs a positive width")
        if self.kind == "user-matrix":
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (self.range.size, self.domain.size):
                raise ValueError(f"matrix shape {m.shape} does not map "
                                 f"{self.domain.size} nodes to {self.range.size}")
            object.__setattr__(self, "matrix", m)
        elif self.range != self.domain:
            raise ValueError(f"{self.kind} maps a grid to itself")

    @classmethod
    def identity(cls, grid: Grid) -> "LinearOperator":
        return cls("identity", grid, grid)

    @classmethod
    def cumulative_integration(cls, grid: Grid) -> "LinearOperator":
        """Running sum ``h * sum_{m <= i} f[m]`` along the first axis."""
        return cls("cumulative-integration", grid, grid)

    @classmethod
    def gaussian_blur(cls, grid: Grid, width: float) -> "LinearOperator":
        """Convolution with a normalised Gaussian of standard deviation ``width``.

        The kernel is truncated at 4 standard deviations and the field is
        zero-padded outside the grid.
        """
        return cls("gaussian-blur", grid, grid, width=float(width))

    @classmethod
    def user_matrix(cls, matrix, domain: Grid, range_grid: Grid | None = None) -> "LinearOperator":
        return cls("user-matrix", domain, range_grid or domain, matrix=matrix)

    def apply_values(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if self.kind == "identity":
            return values.copy()
        if self.kind == "cumulative-integration":
            return np.cumsum(values, axis=0) * self.domain.spacing[0]
        if self.kind == "gaussian-blur":
            sigma = [self.width / h for h in self.domain.spacing]
            return gaussian_filter(values, sigma, mode="constant", cval=0.0, truncate=4.0)
        return (self.matrix @ values.reshape(-1)).reshape(self.range.shape)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "domain": self.domain.to_dict(), "range": self.range.to_dict()}
        if self.width is not None:
            d["width"] = self.width
        return d


def apply_operator(F: LinearOperator, f: SampledField) -> SampledField:
    if f.grid != F.domain:
        raise GridMismatch("field does not live on the operator's domain grid")
    return SampledField(F.range, F.apply_values(f.values))


def forward_map(F: LinearOperator, params: RQNN, act: ActivationProfile,
                grid: Grid | None = None) -> SampledField:
    """F applied to the network sampled on ``grid`` (default: F's domain)."""
    grid = F.domain if grid is None else grid
    act.require_smooth()
    return apply_operator(F, SampledField(grid, eval_network(params, act, grid.nodes())))


def assemble_jacobian(F: LinearOperator, params: RQNN, act: ActivationProfile,
                      grid: Grid | None = None) -> np.ndarray:
    """Matrix of shape (range nodes, n*) whose column s is F applied to dPsi/dp_s."""
    grid = F.domain if grid is None else grid
    if grid != F.domain:
        raise GridMismatch("sampling grid differs from the operator's domain")
    G = grad_rqnn(params, act, grid.nodes())
    cols = [F.apply_values(G[..., s]).reshape(-1) for s in range(G.shape[-1])]
    return np.stack(cols, axis=1) if cols else np.zeros((F.range.size, 0))


@dataclass(frozen=True)
class PinvResult:
    step: np.ndarray
    rank: int
    sigma_min: float
    sigma_max: float

    @property
    def rank_zero(self) -> bool:
        return self.rank == 0


def pinv_step(J, residual, svd_rel_tol: float = 1e-10) -> PinvResult:
    """Minimum-norm least-squares solution of ``J step = residual``.

    Singular values below ``svd_rel_tol * sigma_max`` are treated as zero.
    """
    J = np.asarray(J, dtype=float)
    if J.size == 0:
        raise ValueError("empty Jacobian")
    residual = np.asarray(residual, dtype=float).reshape(-1)
    U, s, Vt = np.linalg.svd(J, full_matrices=False)
    smax = float(s[0]) if s.size else 0.0
    smin = float(s[-1]) if s.size else 0.0
    keep = s > svd_rel_tol * smax if smax > 0 else np.zeros_like(s, dtype=bool)
    coef = (U[:, keep].T @ residual) / s[keep]
    return PinvResult(Vt[keep].T @ coef, int(keep.sum()), smin, smax)


def independence_diagnostic(J, svd_rel_tol: float = 1e-10) -> dict:
    s = np.linalg.svd(np.asarray(J, dtype=float), compute_uv=False)
    smax = float(s[0]) if s.size else 0.0
    smin = float(s[-1]) if s.size else 0.0
    return {"sigma_min": smin, "sigma_max": smax,
            "condition": smax / smin if smin > 0 else float("inf"),
            "rank_at_tol": int(np.sum(s > svd_rel_tol * smax)) if smax > 0 else 0}


def _neuron_rows(p: RQNN) -> np.ndarray:
    return np.column_stack([p.alpha, p.w.reshape(p.N, -1), p.xi, p.theta])


def matched_param_error(p: RQNN, ref: RQNN, exhaustive_limit: int = 6) -> float:
    """Euclidean parameter distance minimised over relabellings of the neurons."""
    if p.N != ref.N or p.n != ref.n:
        raise ValueError("networks differ in shape")
    a, b = _neuron_rows(p), _neuron_rows(ref)
    cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    if p.N <= exhaustive_limit:
        best = min((sum(cost[i, perm[i]] for i in range(p.N)) for perm in permutations(range(p.N))),
                   default=0.0)
    else:
        rows, cols = linear_sum_assignment(cost)
        best = cost[rows, cols].sum()
    return float(np.sqrt(best))


@dataclass
class IterationRecord:
    iteration: int
    p: np.ndarray
    residual_norm: float
    param_error: float
    sigma_min: float
    sigma_max: float
    step_norm: float
    constraint_ok: bool


CSV_COLUMNS = ("iteration", "residual_norm", "param_error", "sigma_min", "sigma_max",
               "step_norm")


@dataclass
class GaussNewtonTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    def append(self, rec: IterationRecord):
        if rec.iteration != len(self.records):
            raise ValueError("iterations must be consecutively indexed")
        self.records.append(rec)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.records:
            writer.writerow([r.iteration] + [format_float(getattr(r, c)) for c in CSV_COLUMNS[1:]])
        return buf.getvalue()

    def to_json(self) -> str:
        recs = [{"iteration": r.iteration, "p": [float(v) for v in r.p],
                 "residual_norm": r.residual_norm, "param_error": r.param_error,
                 "sigma_min": r.sigma_min, "sigma_max": r.sigma_max,
                 "step_norm": r.step_norm, "constraint_ok": r.constraint_ok}
                for r in self.records]
        return json.dumps({"converged": self.converged, "reason": self.reason,
                           "records": recs}, indent=2, sort_keys=True) + "\n"

    def write(self, csv_path=None, json_path=None):
        if csv_path is not None:
            atomic_write_text(csv_path, self.to_csv())
        if json_path is not None:
            atomic_write_text(json_path, self.to_json())


RANK_COLLAPSE_RATIO = 1e-14


def _growing(res: list[float], span: int = 5, factor: float = 10.0) -> bool:
    if len(res) <= span:
        return False
    tail = res[-span - 1:]
    return all(b > a for a, b in zip(tail, tail[1:])) and tail[-1] > factor * tail[0]


def gauss_newton(F: LinearOperator, act: ActivationProfile, y: SampledField, p0: RQNN,
                 max_iter: int = 20, svd_rel_tol: float = 1e-10, stop_tol: float = 1e-13,
                 p_true: RQNN | None = None) -> GaussNewtonTrace:
    """Iterate ``p <- p - J(p)^+ (N(p) - y)`` from ``p0``.

    Stops once the residual norm drops below ``stop_tol`` or after ``max_iter``
    steps.  The RQNN sign constraint is not enforced; its status is recorded
    for every iterate.  Raises :class:`RankCollapse` when the Jacobian's
    singular value ratio falls below 1e-14 and :class:`Diverged` when the
    residual grows tenfold over five consecutive steps; both carry the trace.
    """
    act.require_smooth()
    if y.grid != F.range:
        raise GridMismatch("data do not live on the operator's range grid")
    p = p0
    flat = p.flatten()
    if not np.all(np.isfinite(flat)):
        raise ValueError("initial parameters must be finite")
    dv = F.range.cell_volume
    trace = GaussNewtonTrace()
    for it in range(max_iter + 1):
        r = forward_map(F, p, act).values - y.values
        res = float(np.sqrt(np.sum(r * r) * dv))
        if not np.isfinite(res):
            trace.reason = "non-finite residual"
            raise Diverged(trace.reason, trace)
        err = matched_param_error(p, p_true) if p_true is not None else float("nan")
        ok = all(c.passes for c in check_rqnn_constraint(p))
        J = assemble_jacobian(F, p, act)
        if res < stop_tol or it == max_iter:
            diag = independence_diagnostic(J, svd_rel_tol)
            trace.append(IterationRecord(it, flat, res, err, diag["sigma_min"],
                                         diag["sigma_max"], 0.0, ok))
            trace.converged = res < stop_tol
            trace.reason = "residual below tolerance" if trace.converged else "max_iter reached"
            return trace
        step = pinv_step(J, r.reshape(-1), svd_rel_tol)
        trace.append(IterationRecord(it, flat, res, err, step.sigma_min, step.sigma_max,
                                     float(np.linalg.norm(step.step)), ok))
        if step.sigma_max == 0 or step.sigma_min / step.sigma_max < RANK_COLLAPSE_RATIO:
            trace.reason = "rank collapse"
            raise RankCollapse(
                f"singular value ratio {step.sigma_min / step.sigma_max if step.sigma_max else 0:.3g}"
                f" at iteration {it}", trace)
        if _growing(trace.column("residual_norm").tolist()):
            trace.reason = "diverged"
            raise Diverged(f"residual grew tenfold over five steps by iteration {it}", trace)
        flat = flat - step.step
        p = p.with_flat(flat)
    return trace  # pragma: no cover


def convergence_order(errors, floor: float = 1e-14) -> tuple[float, float, int]:
    """Fit ``e_{k+1} = C e_k^q`` over the contraction phase of an error sequence.

    The phase starts at the first decreasing pair and lasts while the ratio
    ``e_{k+1} / e_k`` keeps shrinking; once it grows again the errors have hit
    the rounding plateau.  Errors at or below ``floor`` never enter the fit.
    Returns ``(q, C, pairs used)``; q is nan with fewer than two pairs.
    """
    e = np.asarray(errors, dtype=float)
    pairs, last_ratio = [], np.inf
    for a, b in zip(e, e[1:]):
        if not (a > floor and b > floor and b < a):
            if pairs:
                break
            continue
        if b / a >= last_ratio:
            break
        pairs.append((a, b))
        last_ratio = b / a
    if len(pairs) < 2:
        return float("nan"), float("nan"), len(pairs)
    x = np.log([a for a, _ in pairs])
    z = np.log([b for _, b in pairs])
    q, logC = np.polyfit(x, z, 1)
    return float(q), float(np.exp(logC)), len(pairs)
