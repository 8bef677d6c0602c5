"""Radial scaling functions, wavelets and numerical AtI certification.

The scaling function is ``phi(x) = C_n * sigma(r^2 - |x|^2)`` with ``C_n``
chosen so that ``phi`` has unit mass.  Dilates are
``S_k(x, y) = 2^k phi(2^(k/n) (x - y))`` and wavelets are
``psi_k(x, y) = 2^(-k/2) (S_k(x, y) - S_(k-1)(x, y))``.

The ``check_*`` functions sample the approximation-to-the-identity
inequalities (size, smoothness, double Lipschitz) and the geometric floor
estimates behind them, and report violations instead of raising.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

from .activation import ActivationProfile, decay_constant, eval_activation

# allowance for rounding when comparing two separately evaluated sides
ROUNDING = 64 * np.finfo(float).eps


class NonIntegrable(ValueError):
    pass


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere in R^n (n * volume of the unit ball)."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


def _radial_density(act, r, n):
    area = sphere_area(n)
    return lambda t: float(eval_activation(act, r * r - t * t, 0)) * area * t ** (n - 1)


def radial_extent(act: ActivationProfile, r: float, n: int, tol: float,
                  max_radius: float = 1e6) -> float:
    """Radius R beyond which sigma(r^2 - |x|^2) carries mass below ``tol``/100."""
    f = _radial_density(act, r, n)
    R = 2.0 * max(r, 1.0)
    prev = math.inf
    while R < max_radius:
        piece = abs(quad(f, R, 2 * R, limit=200, epsabs=tol * 1e-4, epsrel=1e-10)[0])
        if piece < tol / 100 and piece <= prev:
            return R
        prev = piece
        R *= 2
    raise NonIntegrable(f"tail mass does not vanish up to radius {max_radius:g}")


def compute_normalizer(act: ActivationProfile, r: float, n: int, tol: float = 1e-12) -> float:
    """C_n = 1 / integral of sigma(r^2 - |x|^2) over R^n.

    Uses the radial reduction ``int_0^inf sigma(r^2 - t^2) |S^(n-1)| t^(n-1) dt``
    with adaptive quadrature up to the radius where the tail drops below ``tol``.
    """
    R = radial_extent(act, r, n, tol)
    f = _radial_density(act, r, n)
    points = [r] if r < R else None
    total = quad(f, 0.0, R, points=points, limit=500, epsabs=tol / 10, epsrel=1e-13)[0]
    if not total > 0:
        raise NonIntegrable("kernel integral is not positive")
    return 1.0 / total


@dataclass(frozen=True)
class RadialKernelSystem:
    act: ActivationProfile
    r: float
    n: int
    C_n: float
    R: float  # half-width (at scale k = 0) of the box holding all but tol of the mass
    tol: float = 1e-12

    @classmethod
    def build(cls, act: ActivationProfile, r: float = 1.0, n: int = 1,
              tol: float = 1e-12) -> "RadialKernelSystem":
        C_n = compute_normalizer(act, r, n, tol)
        return cls(act, float(r), int(n), C_n, radial_extent(act, r, n, tol), tol)

    def phi(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return self.C_n * eval_activation(self.act, self.r ** 2 - np.sum(z * z, axis=-1), 0)

    def half_width(self, k: int) -> float:
        return self.R * 2.0 ** (-k / self.n)


def _pts(x, n):
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    return x


def eval_S(sys: RadialKernelSystem, k, x, y):
    """S_k(x, y) = 2^k phi(2^(k/n)(x - y)); broadcasts over points and ``k``."""
    x, y = _pts(x, sys.n), _pts(y, sys.n)
    k = np.asarray(k, dtype=float)
    scale = 2.0 ** (k / sys.n)
    out = 2.0 ** k * sys.phi(scale[..., None] * (x - y))
    return float(out) if np.ndim(out) == 0 else out


def eval_psi(sys: RadialKernelSystem, k, x, y):
    """psi_k(x, y) = 2^(-k/2) (S_k(x, y) - S_(k-1)(x, y))."""
    k = np.asarray(k, dtype=float)
    out = 2.0 ** (-k / 2) * (np.asarray(eval_S(sys, k, x, y)) - np.asarray(eval_S(sys, k - 1, x, y)))
    return float(out) if np.ndim(out) == 0 else out


def midpoint_integral(func, lower, upper, cells: int) -> float:
    """Tensor midpoint rule with ``cells`` cells per axis."""
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    h = (upper - lower) / cells
    axes = [lo + hh * (np.arange(cells) + 0.5) for lo, hh in zip(lower, h)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return float(np.sum(func(pts)) * np.prod(h))


def refined_integral(func, lower, upper, tol: float, start: int = 64,
                     max_points: int = 2 ** 22) -> tuple[float, int]:
    """Midpoint rule refined by halving the step until the change is below tol/10."""
    dim = len(np.atleast_1d(lower))
    cells = start
    prev = midpoint_integral(func, lower, upper, cells)
    while (2 * cells) ** dim <= max_points:
        cells *= 2
        cur = midpoint_integral(func, lower, upper, cells)
        if abs(cur - prev) < tol / 10:
            return cur, cells
        prev = cur
    raise RuntimeError(f"midpoint rule did not settle to {tol:g} within {max_points} nodes")


def kernel_mass(sys: RadialKernelSystem, k: int, y, tol: float = 1e-6, wavelet: bool = False) -> float:
    """Integral over x of S_k(x, y) (or psi_k(x, y)) on the box holding its mass."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    kernel = eval_psi if wavelet else eval_S
    L = sys.half_width(k - 1 if wavelet else k)
    value, _ = refined_integral(lambda pts: kernel(sys, k, pts, y), y - L, y + L, tol)
    return value


def hessian_bound(h_s: Sequence[Callable], x) -> np.ndarray:
    """Spectral-norm bound for the Hessian of h(x) = h_s(|x|^2).

    ``h_s`` is a triple ``(h, h', h'')`` of one-dimensional callables; the
    result is ``max(|4|x|^2 h''(|x|^2) + 2h'(|x|^2)|, |2h'(|x|^2)|)``.
    """
    _, d1, d2 = h_s
    t = np.sum(np.asarray(x, dtype=float) ** 2, axis=-1)
    out = np.maximum(np.abs(4 * t * d2(t) + 2 * d1(t)), np.abs(2 * d1(t)))
    return float(out) if np.ndim(out) == 0 else out


def phi_profile(sys: RadialKernelSystem):
    """(h, h', h'') with phi(x) = h(|x|^2), i.e. h(t) = C_n sigma(r^2 - t)."""
    act, c, r2 = sys.act, sys.C_n, sys.r ** 2
    return (lambda t: c * eval_activation(act, r2 - t, 0),
            lambda t: -c * eval_activation(act, r2 - t, 1),
            lambda t: c * eval_activation(act, r2 - t, 2))


@dataclass(frozen=True)
class AtIQuintuple:
    """Constants of the approximation-to-the-identity inequalities.

    ``C`` bounds the size condition; ``C_item2`` (defaulting to ``C``) bounds
    the smoothness condition; ``tilde_C`` and ``tilde_C_A`` belong to the
    double Lipschitz condition.
    """

    epsilon: float
    zeta: float
    C: float
    C_rho: float
    C_A: float
    tilde_C: float
    tilde_C_A: float
    n: int
    C_item2: float | None = None

    def __post_init__(self):
        bad = []
        if not 0 < self.epsilon <= 1 / self.n:
            bad.append("need 0 < epsilon <= 1/n")
        if not 0 < self.zeta <= 1 / self.n:
            bad.append("need 0 < zeta <= 1/n")
        if not 0 < self.C_A < 1:
            bad.append("need 0 < C_A < 1")
        if not 0 < self.tilde_C_A < 0.5:
            bad.append("need 0 < tilde_C_A < 1/2")
        if min(self.C, self.C_rho, self.tilde_C) <= 0 or (self.C_item2 is not None and self.C_item2 <= 0):
            bad.append("constants must be positive")
        if bad:
            raise ValueError("; ".join(bad))

    @property
    def C2(self) -> float:
        return self.C if self.C_item2 is None else self.C_item2

    def scaled(self, factor: float) -> "AtIQuintuple":
        """Multiply every bounding constant (C, C_item2, tilde_C) by ``factor``."""
        return AtIQuintuple(self.epsilon, self.zeta, self.C * factor, self.C_rho, self.C_A,
                            self.tilde_C * factor, self.tilde_C_A, self.n,
                            None if self.C_item2 is None else self.C_item2 * factor)


def lemma_constants(sys: RadialKernelSystem, C_sigma: float | None = None) -> AtIQuintuple:
    """Sufficient constants for sigma-generated kernels.

    epsilon = zeta = 1/n, C_rho = 1, C_A = 2^-n, tilde_C_A = 3^-n,
    C = C_n C_sigma (size), 2^(n+2) C_n C_sigma (smoothness),
    tilde_C = 2^3 3^(n+3) C_n C_sigma (double Lipschitz).
    """
    n = sys.n
    if C_sigma is None:
        C_sigma = sys.act.C_sigma or decay_constant(sys.act, sys.r, n)
    base = sys.C_n * C_sigma
    return AtIQuintuple(epsilon=1 / n, zeta=1 / n, C=base, C_rho=1.0, C_A=2.0 ** -n,
                        tilde_C=8 * 3.0 ** (n + 3) * base, tilde_C_A=3.0 ** -n, n=n,
                        C_item2=2.0 ** (n + 2) * base)


@dataclass
class InequalityReport:
    item: str
    samples: int
    violations: int
    empirical_C: float
    constants_used: dict
    seed: int | None = None
    rejected: int = 0
    worst: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def _random_directions(rng, count, n):
    u = rng.normal(size=(count, n))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _sample_pairs(rng, n, k_range, count, r, box=2.0):
    """Scales and pairs (x, y): half uniform in a box, half at kernel-relative distances."""
    k = rng.integers(k_range[0], k_range[1] + 1, size=count)
    y = rng.uniform(-box, box, size=(count, n))
    x = rng.uniform(-box, box, size=(count, n))
    half = count // 2
    rho = np.exp(rng.uniform(np.log(1e-4), np.log(30.0 * max(r, 1.0)), size=half))
    x[:half] = y[:half] + (2.0 ** (-k[:half] / n) * rho)[:, None] * _random_directions(rng, half, n)
    return k, x, y


def _stress_pairs(n, k_range, r):
    """Deterministic corner cases: coincident points, the kernel shoulder, far tails."""
    ks, xs, ys = [], [], []
    e = np.zeros(n)
    e[0] = 1.0
    for k in range(k_range[0], k_range[1] + 1):
        for dist in (0.0, 1e-8, 0.5 * r, r, 1.5 * r, 3 * r, 100.0 * r):
            ks.append(k)
            ys.append(np.full(n, 0.3))
            xs.append(ys[-1] + dist * 2.0 ** (-k / n) * e)
    return np.array(ks), np.array(xs), np.array(ys)


def _envelope(quint, k, dist_n):
    """2^(-k eps) / (2^-k + C_rho |x-y|^n)^(1+eps) and the denominator D."""
    D = 2.0 ** (-k) + quint.C_rho * dist_n
    return 2.0 ** (-k * quint.epsilon) / D ** (1 + quint.epsilon), D


def _finish(item, lhs, shape, C, quint, seed, rejected, records):
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(shape > 0, lhs / shape, np.where(lhs > 0, np.inf, 0.0))
    bad = lhs > C * shape * (1 + ROUNDING)
    worst_idx = np.argsort(ratio)[::-1][:5]
    worst = [dict({key: np.asarray(val[i]).tolist() for key, val in records.items()},
                  ratio=float(ratio[i])) for i in worst_idx]
    consts = {key: float(val) if isinstance(val, (int, float, np.floating)) else val
              for key, val in asdict(quint).items()}
    consts["C_applied"] = float(C)
    return InequalityReport(item, int(lhs.size), int(bad.sum()), float(ratio.max(initial=0.0)),
                            consts, seed, int(rejected), worst)


def check_ati_item1(sys: RadialKernelSystem, quint: AtIQuintuple, k_range=(-3, 8),
                    sample_count: int = 10_000, seed: int = 0, kernel=None) -> InequalityReport:
    """Size condition |S_k(x,y)| <= C 2^(-k eps) / (2^-k + C_rho |x-y|^n)^(1+eps).

    ``kernel(k, x, y)`` replaces S_k when given (used for negative controls).
    """
    rng = np.random.default_rng(seed)
    kernel = kernel or (lambda k, x, y: eval_S(sys, k, x, y))
    k, x, y = _sample_pairs(rng, sys.n, k_range, sample_count, sys.r)
    ks, xs, ys = _stress_pairs(sys.n, k_range, sys.r)
    k, x, y = np.concatenate([k, ks]), np.vstack([x, xs]), np.vstack([y, ys])
    dist_n = np.linalg.norm(x - y, axis=1) ** sys.n
    lhs = np.abs(kernel(k, x, y))
    shape, _ = _envelope(quint, k, dist_n)
    return _finish("size", lhs, shape, quint.C, quint, seed, 0, {"k": k, "x": x, "y": y})


def _admissible_offsets(rng, n, k, bound, count_per, lo=1e-6, hi=10.0):
    """Offsets d with |d|^n <= bound, proposed at kernel-relative lengths.

    Returns (offsets, accepted mask) for one proposal per row.
    """
    lengths = 2.0 ** (-k / n) * np.exp(rng.uniform(np.log(lo), np.log(hi), size=k.size))
    d = lengths[:, None] * _random_directions(rng, k.size, n)
    return d, lengths ** n <= bound


def check_ati_item2(sys: RadialKernelSystem, quint: AtIQuintuple, k_range=(-3, 8),
                    sample_count: int = 10_000, seed: int = 0) -> InequalityReport:
    """Smoothness condition in the first argument on admissible triples.

    Triples satisfy C_rho |x-x'|^n <= C_A (2^-k + C_rho |x-y|^n); proposals
    outside that set are rejected and counted in ``rejected``.
    """
    n = sys.n
    rng = np.random.default_rng(seed)
    ks, xs, xps, ys, rejected = [], [], [], [], 0
    need = sample_count
    while need > 0:
        k, x, y = _sample_pairs(rng, n, k_range, 2 * need, sys.r)
        D = 2.0 ** (-k) + quint.C_rho * np.linalg.norm(x - y, axis=1) ** n
        d, ok = _admissible_offsets(rng, n, k, quint.C_A * D / quint.C_rho, 1)
        rejected += int((~ok).sum())
        take = np.flatnonzero(ok)[:need]
        ks.append(k[take]); xs.append(x[take]); ys.append(y[take]); xps.append(x[take] + d[take])
        need -= take.size
    # stress: x' = x, x' on the admissible boundary, x' infinitesimally close
    sk, sx, sy = _stress_pairs(n, k_range, sys.r)
    D = 2.0 ** (-sk) + quint.C_rho * np.linalg.norm(sx - sy, axis=1) ** n
    rmax = (quint.C_A * D / quint.C_rho) ** (1 / n) * (1 - 1e-12)
    dirs = np.zeros_like(sx)
    dirs[:, -1] = 1.0
    for scale in (0.0, 1e-9, 1.0):
        ks.append(sk); xs.append(sx); ys.append(sy); xps.append(sx + (scale * rmax)[:, None] * dirs)
    away = sx - sy
    norm = np.linalg.norm(away, axis=1, keepdims=True)
    away = np.where(norm > 0, away / np.where(norm > 0, norm, 1), dirs)
    for sign in (1.0, -1.0):
        ks.append(sk); xs.append(sx); ys.append(sy); xps.append(sx + sign * rmax[:, None] * away)

    k, x, xp, y = (np.concatenate(ks), np.vstack(xs), np.vstack(xps), np.vstack(ys))
    base, D = _envelope(quint, k, np.linalg.norm(x - y, axis=1) ** n)
    lhs = np.abs(eval_S(sys, k, x, y) - eval_S(sys, k, xp, y))
    shape = (quint.C_rho * np.linalg.norm(x - xp, axis=1) ** n / D) ** quint.zeta * base
    return _finish("smoothness", lhs, shape, quint.C2, quint, seed, rejected,
                   {"k": k, "x": x, "x_prime": xp, "y": y})


def check_double_lipschitz(sys: RadialKernelSystem, quint: AtIQuintuple, k_range=(-3, 8),
                           sample_count: int = 10_000, seed: int = 0) -> InequalityReport:
    """Second-difference condition on admissible quadruples (x, x', y, y')."""
    n = sys.n
    rng = np.random.default_rng(seed)
    parts = {"k": [], "x": [], "x_prime": [], "y": [], "y_prime": []}
    rejected, need = 0, sample_count
    while need > 0:
        k, x, y = _sample_pairs(rng, n, k_range, 2 * need, sys.r)
        D = 2.0 ** (-k) + quint.C_rho * np.linalg.norm(x - y, axis=1) ** n
        bound = quint.tilde_C_A * D / quint.C_rho
        dx, okx = _admissible_offsets(rng, n, k, bound, 1)
        dy, oky = _admissible_offsets(rng, n, k, bound, 1)
        ok = okx & oky
        rejected += int((~ok).sum())
        take = np.flatnonzero(ok)[:need]
        for key, val in (("k", k), ("x", x), ("x_prime", x + dx), ("y", y), ("y_prime", y + dy)):
            parts[key].append(val[take])
        need -= take.size
    sk, sx, sy = _stress_pairs(n, k_range, sys.r)
    D = 2.0 ** (-sk) + quint.C_rho * np.linalg.norm(sx - sy, axis=1) ** n
    rmax = ((quint.tilde_C_A * D / quint.C_rho) ** (1 / n) * (1 - 1e-12))[:, None]
    e_last = np.zeros_like(sx)
    e_last[:, -1] = 1.0
    for fx, fy in ((0.0, 1.0), (1.0, 0.0), (1.0, 1.0), (1.0, -1.0), (1e-3, 1e-3)):
        for key, val in (("k", sk), ("x", sx), ("x_prime", sx + fx * rmax * e_last),
                         ("y", sy), ("y_prime", sy + fy * rmax * e_last)):
            parts[key].append(val)

    k = np.concatenate(parts["k"])
    x, xp, y, yp = (np.vstack(parts[key]) for key in ("x", "x_prime", "y", "y_prime"))
    base, D = _envelope(quint, k, np.linalg.norm(x - y, axis=1) ** n)
    # grouped as a difference of first differences: exact zero when x = x' or y = y'
    lhs = np.abs((eval_S(sys, k, x, y) - eval_S(sys, k, xp, y))
                 - (eval_S(sys, k, x, yp) - eval_S(sys, k, xp, yp)))
    fx = (quint.C_rho * np.linalg.norm(x - xp, axis=1) ** n / D) ** quint.zeta
    fy = (quint.C_rho * np.linalg.norm(y - yp, axis=1) ** n / D) ** quint.zeta
    return _finish("double-lipschitz", lhs, fx * fy * base, quint.tilde_C, quint, seed, rejected,
                   {"k": k, "x": x, "x_prime": xp, "y": y, "y_prime": yp})


def check_mass(sys: RadialKernelSystem, k_values=range(-2, 5), y_count: int = 5,
               tol: float = 1e-6, seed: int = 0) -> InequalityReport:
    """Unit-mass condition: |int S_k(x, y) dx - 1| <= tol at random centres y."""
    rng = np.random.default_rng(seed)
    errs, recs = [], {"k": [], "y": [], "mass": []}
    for k in k_values:
        for y in rng.uniform(-1, 1, size=(y_count, sys.n)):
            m = kernel_mass(sys, k, y, tol)
            errs.append(abs(m - 1.0))
            recs["k"].append(k); recs["y"].append(y); recs["mass"].append(m)
    errs = np.asarray(errs)
    order = np.argsort(errs)[::-1][:5]
    worst = [{"k": int(recs["k"][i]), "y": recs["y"][i].tolist(), "mass": recs["mass"][i]}
             for i in order]
    return InequalityReport("mass", errs.size, int((errs > tol).sum()), float(errs.max()),
                            {"tol": tol}, seed, 0, worst)


def jensen_gap(values, n: int) -> np.ndarray:
    """sum_i a_i^n - m^(1-n) (sum_i a_i)^n for m nonnegative values per row (>= 0)."""
    a = np.atleast_2d(np.asarray(values, dtype=float))
    m = a.shape[1]
    return np.sum(a ** n, axis=1) - m ** (1.0 - n) * np.sum(a, axis=1) ** n


@dataclass
class FloorReport:
    n: int
    k: int
    triples: int
    quadruples: int
    triple_violations: int
    quadruple_violations: int
    min_triple_slack: float
    min_quadruple_slack: float

    @property
    def violations(self) -> int:
        return self.triple_violations + self.quadruple_violations


def verify_geometric_floor(n: int, k: int, samples: int = 10_000, seed: int = 0,
                           t_grid: int = 33) -> FloorReport:
    """Check the segment distance floors behind the smoothness estimates.

    Triples with |x-x'|^n <= 2^-n (2^-k + |x-y|^n) and |x-y|^n >= 2^-k must obey
    |x + t(x'-x) - y|^n >= 2^-n |x-y|^n - 2^-n 2^-k for t in [0, 1].
    Quadruples with max(|x-x'|^n, |y-y'|^n) <= 3^-n (2^-k + |x-y|^n) must obey
    |x + s(x'-x) - y - t(y'-y)|^n >= 3^-n |x-y|^n - 3^-n 2^(1-k).
    """
    rng = np.random.default_rng(seed)
    ts = np.linspace(0.0, 1.0, t_grid)
    hk = 2.0 ** (-k)

    def base_pairs(count):
        y = rng.uniform(-1, 1, size=(count, n))
        lo = hk ** (1 / n)
        dist = lo * np.exp(rng.uniform(0.0, np.log(50.0), size=count))
        return y + dist[:, None] * _random_directions(rng, count, n), y

    def admissible(count, cap):
        x, y = base_pairs(count)
        dn = np.linalg.norm(x - y, axis=1) ** n
        limit = (cap * (hk + dn)) ** (1 / n)
        length = limit * rng.uniform(0.0, 1.0, size=count) ** 0.5
        return x, y, dn, length[:, None] * _random_directions(rng, count, n), limit

    # triples, plus the collinear worst case x' between x and y at full admissible length
    x, y, dn, d, limit = admissible(samples, 2.0 ** -n)
    toward = (y - x) / np.linalg.norm(y - x, axis=1, keepdims=True)
    x = np.vstack([x, x]); y = np.vstack([y, y]); dn = np.concatenate([dn, dn])
    d = np.vstack([d, limit[:, None] * toward * (1 - 1e-12)])
    pts = x[:, None, :] + ts[None, :, None] * d[:, None, :] - y[:, None, :]
    lhs = np.linalg.norm(pts, axis=2) ** n
    rhs = (2.0 ** -n * (dn - hk))[:, None]
    slack3 = lhs - rhs
    tol3 = ROUNDING * np.maximum(np.abs(lhs), np.abs(rhs))
    v3 = int(np.sum(slack3 < -tol3))

    x, y, dn, dx, limit = admissible(samples, 3.0 ** -n)
    dy = (limit * rng.uniform(0.0, 1.0, size=samples) ** 0.5)[:, None] * \
        _random_directions(rng, samples, n)
    toward = (y - x) / np.linalg.norm(y - x, axis=1, keepdims=True)
    x = np.vstack([x, x]); y = np.vstack([y, y]); dn = np.concatenate([dn, dn])
    edge = limit[:, None] * (1 - 1e-12)
    dx = np.vstack([dx, edge * toward]); dy = np.vstack([dy, -edge * toward])
    tq = ts[:: max(1, t_grid // 16)]
    pts = (x[:, None, None, :] + tq[None, :, None, None] * dx[:, None, None, :]
           - y[:, None, None, :] - tq[None, None, :, None] * dy[:, None, None, :])
    lhs = np.linalg.norm(pts, axis=3) ** n
    rhs = (3.0 ** -n * (dn - 2 * hk))[:, None, None]
    slack4 = lhs - rhs
    tol4 = ROUNDING * np.maximum(np.abs(lhs), np.abs(rhs))
    v4 = int(np.sum(slack4 < -tol4))
    return FloorReport(n, k, slack3.shape[0], slack4.shape[0], v3, v4,
                       float(slack3.min()), float(slack4.min()))
