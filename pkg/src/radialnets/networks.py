"""Shallow networks with affine, quadratic, radial, signed-square and cubic
decision functions, plus a two-hidden-layer affine network for n = 1.

Every family stores its parameters as arrays and converts to and from the
flat parameter vector ``p`` used by the solvers.  Flat layouts are
block-major: all amplitudes, then all weight vectors (neuron by neuron), then
any curvature block, then all offsets.

========  ===========================================  ===============
family    decision function                            flat length
========  ===========================================  ===============
ALNN      w.x + theta                                  (n+2) N
GQNN      w.x + x'Ax + theta                           (n^2+n+2) N
MCNN      w.x + xi x'A x + theta   (A fixed)           (n+3) N
RQNN      w.x + xi |x|^2 + theta                       (n+3) N
SBQNN     sum_i w_i sgn(x_i) x_i^2 + theta             (n+2) N
CUNN      sum_i w_i x_i^3 + theta                      (n+2) N
========  ===========================================  ===============
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import NamedTuple

import numpy as np

from .activation import ActivationProfile, eval_activation


class DimensionMismatch(ValueError):
    pass


class ZeroCurvature(ValueError):
    pass


def _vec(a, N):
    a = np.array(a, dtype=float).reshape(-1)
    if a.size != N:
        raise DimensionMismatch(f"expected {N} entries, got {a.size}")
    return a


@dataclass(frozen=True, eq=False)
class ShallowNetwork:
    """Common storage for one-hidden-layer families: alpha (N,), w (N, n), theta (N,)."""

    alpha: np.ndarray
    w: np.ndarray
    theta: np.ndarray

    family = "shallow"
    _extra_blocks = ()  # per-neuron scalar blocks between w and theta
    _fixed = ()  # stored but not part of the flat vector

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        N = alpha.size
        w = np.array(self.w, dtype=float)
        if w.ndim == 1:
            w = w.reshape(N, -1)
        if w.ndim != 2 or w.shape[0] != N:
            raise DimensionMismatch("w must have one row per neuron")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "theta", _vec(self.theta, N))
        for name in self._extra_blocks:
            object.__setattr__(self, name, _vec(getattr(self, name), N))

    @property
    def N(self) -> int:
        return self.alpha.size

    @property
    def n(self) -> int:
        return self.w.shape[1]

    @property
    def n_star(self) -> int:
        return self.flatten().size

    def flatten(self) -> np.ndarray:
        blocks = [self.alpha, self.w.reshape(-1)]
        blocks += [getattr(self, name).reshape(-1) for name in self._matrix_names()]
        blocks += [getattr(self, name) for name in self._extra_blocks]
        blocks.append(self.theta)
        return np.concatenate(blocks)

    @classmethod
    def block_sizes(cls, n: int, N: int) -> list[tuple[str, tuple]]:
        sizes = [("alpha", (N,)), ("w", (N, n))]
        sizes += [(name, (N, n, n)) for name in cls._matrix_names()]
        sizes += [(name, (N,)) for name in cls._extra_blocks]
        sizes.append(("theta", (N,)))
        return sizes

    @classmethod
    def _matrix_names(cls):
        return ()

    @classmethod
    def unflatten(cls, p, n: int, N: int, **fixed):
        p = np.asarray(p, dtype=float).reshape(-1)
        sizes = cls.block_sizes(n, N)
        need = sum(int(np.prod(shape)) for _, shape in sizes)
        if need != p.size:
            raise DimensionMismatch(
                f"{cls.family} with n={n}, N={N} needs {need} parameters, got {p.size}")
        kwargs, pos = {}, 0
        for name, shape in sizes:
            size = int(np.prod(shape))
            kwargs[name] = p[pos:pos + size].reshape(shape)
            pos += size
        return cls(**kwargs, **fixed)

    def with_flat(self, p):
        """Same family and fixed data, new trainable parameters."""
        fixed = {name: getattr(self, name) for name in self._fixed}
        return type(self).unflatten(p, self.n, self.N, **fixed)

    def permute(self, perm):
        perm = np.asarray(perm)
        return replace(self, **{f.name: getattr(self, f.name)[perm] for f in fields(self)})

    def decision(self, x: np.ndarray) -> np.ndarray:
        """Decision-function values, shape ``x.shape[:-1] + (N,)``."""
        raise NotImplementedError

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name))
                   for f in fields(self))


@dataclass(frozen=True, eq=False)
class ALNN(ShallowNetwork):
    family = "ALNN"

    def decision(self, x):
        return x @ self.w.T + self.theta


@dataclass(frozen=True, eq=False)
class GQNN(ShallowNetwork):
    """General quadratic network.  Matrices are symmetrised on construction."""

    A: np.ndarray = None
    family = "GQNN"

    def __post_init__(self):
        super().__post_init__()
        A = np.array(self.A, dtype=float).reshape(self.N, self.n, self.n)
        object.__setattr__(self, "A", 0.5 * (A + A.transpose(0, 2, 1)))

    @classmethod
    def _matrix_names(cls):
        return ("A",)

    def decision(self, x):
        quad = np.einsum("...i,jik,...k->...j", x, self.A, x)
        return x @ self.w.T + quad + self.theta


@dataclass(frozen=True, eq=False)
class MCNN(ShallowNetwork):
    """Quadratic network with fixed matrices and a trainable scale xi per neuron."""

    xi: np.ndarray = None
    fixed_A: np.ndarray = None
    family = "MCNN"
    _extra_blocks = ("xi",)
    _fixed = ("fixed_A",)

    def __post_init__(self):
        super().__post_init__()
        A = np.array(self.fixed_A, dtype=float).reshape(self.N, self.n, self.n)
        object.__setattr__(self, "fixed_A", A)

    def decision(self, x):
        quad = np.einsum("...i,jik,...k->...j", x, self.fixed_A, x)
        return x @ self.w.T + self.xi * quad + self.theta


@dataclass(frozen=True, eq=False)
class RQNN(ShallowNetwork):
    xi: np.ndarray = None
    family = "RQNN"
    _extra_blocks = ("xi",)

    def decision(self, x):
        sq = np.sum(x * x, axis=-1)[..., None]
        return x @ self.w.T + self.xi * sq + self.theta


@dataclass(frozen=True, eq=False)
class SBQNN(ShallowNetwork):
    family = "SBQNN"

    def decision(self, x):
        # np.sign(0) == 0
        return (np.sign(x) * x * x) @ self.w.T + self.theta


@dataclass(frozen=True, eq=False)
class CUNN(ShallowNetwork):
    family = "CUNN"

    def decision(self, x):
        return (x ** 3) @ self.w.T + self.theta


@dataclass(frozen=True, eq=False)
class DNN4:
    """Two hidden affine layers on the real line.

    ``x -> sum_j2 a2[j2] s(w2[j2] * rho(x) + t2[j2])`` with
    ``rho(x) = sum_j1 a1[j1] s(w1[j1] * x + t1[j1])``.
    """

    alpha1: np.ndarray
    w1: np.ndarray
    theta1: np.ndarray
    alpha2: np.ndarray
    w2: np.ndarray
    theta2: np.ndarray

    family = "DNN4"
    n = 1

    def __post_init__(self):
        N1 = np.size(self.alpha1)
        N2 = np.size(self.alpha2)
        for name, N in (("alpha1", N1), ("w1", N1), ("theta1", N1),
                        ("alpha2", N2), ("w2", N2), ("theta2", N2)):
            object.__setattr__(self, name, _vec(getattr(self, name), N))

    @property
    def N1(self):
        return self.alpha1.size

    @property
    def N2(self):
        return self.alpha2.size

    @property
    def n_star(self):
        return 3 * (self.N1 + self.N2)

    def flatten(self):
        return np.concatenate([self.alpha1, self.alpha2, self.w1, self.w2,
                               self.theta1, self.theta2])

    @classmethod
    def unflatten(cls, p, N1: int, N2: int):
        p = np.asarray(p, dtype=float).reshape(-1)
        if p.size != 3 * (N1 + N2):
            raise DimensionMismatch(f"DNN4 needs {3 * (N1 + N2)} parameters, got {p.size}")
        a, w, t = np.split(p, 3)
        return cls(a[:N1], w[:N1], t[:N1], a[N1:], w[N1:], t[N1:])

    def with_flat(self, p):
        return DNN4.unflatten(p, self.N1, self.N2)

    def inner(self, act, x):
        """rho(x), the output of the first hidden layer."""
        return eval_activation(act, x[..., None] * self.w1 + self.theta1, 0) @ self.alpha1

    def __eq__(self, other):
        if not isinstance(other, DNN4):
            return NotImplemented
        return np.array_equal(self.flatten(), other.flatten()) and \
            (self.N1, self.N2) == (other.N1, other.N2)


FAMILIES = {cls.family: cls for cls in (ALNN, GQNN, MCNN, RQNN, SBQNN, CUNN, DNN4)}


def _as_points(x, n):
    x = np.asarray(x, dtype=float)
    if n == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    if x.shape[-1] != n:
        raise DimensionMismatch(f"points have dimension {x.shape[-1]}, network expects {n}")
    return x


def eval_network(params, act: ActivationProfile, x):
    """Evaluate the network at a point (returns float) or a stack of points.

    ``x`` has shape ``(n,)`` or ``(..., n)``; for n = 1 a bare scalar or an
    array without the trailing axis is accepted as well.
    """
    x = _as_points(x, params.n)
    if isinstance(params, DNN4):
        rho = params.inner(act, x[..., 0])
        out = eval_activation(act, rho[..., None] * params.w2 + params.theta2, 0) @ params.alpha2
    elif params.N == 0:
        out = np.zeros(x.shape[:-1])
    else:
        out = eval_activation(act, params.decision(x), 0) @ params.alpha
    return float(out) if np.ndim(out) == 0 else out


def grad_rqnn(params: RQNN, act: ActivationProfile, x) -> np.ndarray:
    """Analytic gradient of an RQNN with respect to its flat parameter vector.

    Per neuron s with nu_s = w_s.x + xi_s |x|^2 + theta_s::

        d/d alpha_s   = sigma(nu_s)
        d/d w_s[t]    = alpha_s sigma'(nu_s) x_t
        d/d xi_s      = alpha_s sigma'(nu_s) |x|^2
        d/d theta_s   = alpha_s sigma'(nu_s)

    Output shape is ``x.shape[:-1] + ((n+3) N,)``, ordered like ``flatten``.
    """
    if not isinstance(params, RQNN):
        raise TypeError("grad_rqnn needs RQNN parameters")
    act.require_smooth()
    x = _as_points(x, params.n)
    nu = params.decision(x)
    s0 = eval_activation(act, nu, 0)
    g = params.alpha * eval_activation(act, nu, 1)
    dw = (g[..., :, None] * x[..., None, :]).reshape(*x.shape[:-1], -1)
    sq = np.sum(x * x, axis=-1)[..., None]
    return np.concatenate([s0, dw, g * sq, g], axis=-1)


def grad_dnn_w11(params: DNN4, act: ActivationProfile, x):
    """Derivative of the DNN4 output with respect to the first inner weight w1[0].

    ``a1[0] x s'(w1[0] x + t1[0]) * sum_j2 a2[j2] w2[j2] s'(w2[j2] rho(x) + t2[j2])``
    """
    act.require_smooth()
    x = np.asarray(x, dtype=float)
    if x.ndim and x.shape[-1] == 1:
        x = x[..., 0]
    rho = params.inner(act, x)
    outer = eval_activation(act, rho[..., None] * params.w2 + params.theta2, 1) \
        @ (params.alpha2 * params.w2)
    inner = eval_activation(act, params.w1[0] * x + params.theta1[0], 1)
    out = params.alpha1[0] * x * outer * inner
    return float(out) if np.ndim(out) == 0 else out


def fd_gradient(params, act: ActivationProfile, x, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of ``eval_network`` in the flat parameters."""
    p = params.flatten()
    grads = []
    for m in range(p.size):
        e = np.zeros_like(p)
        e[m] = step
        hi = eval_network(params.with_flat(p + e), act, x)
        lo = eval_network(params.with_flat(p - e), act, x)
        grads.append((np.asarray(hi) - np.asarray(lo)) / (2 * step))
    return np.stack(grads, axis=-1)


def relative_error(a, b) -> float:
    """max|a - b| / max|b|, the norm-wise relative error used by gradient audits."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.max(np.abs(b)) if b.size else 0.0
    diff = np.max(np.abs(a - b)) if a.size else 0.0
    return float(diff / scale) if scale > 0 else float(diff)


@dataclass(frozen=True)
class RadialCanonicalForm:
    """nu(x) = xi |x - center|^2 + kappa."""

    center: np.ndarray
    kappa: float
    xi: float

    def nu(self, x):
        d = np.asarray(x, float) - self.center
        return self.xi * np.sum(d * d, axis=-1) + self.kappa


def complete_square(w_hat, xi: float, theta: float) -> RadialCanonicalForm:
    """Rewrite xi |x|^2 + w_hat.x + theta as xi |x - y|^2 + kappa."""
    if xi == 0:
        raise ZeroCurvature("completing the square needs xi != 0")
    w_hat = np.asarray(w_hat, dtype=float)
    center = -w_hat / (2.0 * xi)
    kappa = theta - float(w_hat @ w_hat) / (4.0 * xi)
    return RadialCanonicalForm(center, float(kappa), float(xi))


class NeuronConstraint(NamedTuple):
    passes: bool
    affine: bool
    kappa: float


def check_rqnn_constraint(params: RQNN) -> list[NeuronConstraint]:
    """Per-neuron check of xi >= 0 and kappa <= 0 (closed-level-set condition).

    Neurons with xi == 0 are affine; they pass vacuously and are flagged.
    """
    out = []
    for w, xi, theta in zip(params.w, params.xi, params.theta):
        if xi == 0:
            out.append(NeuronConstraint(True, True, float("nan")))
            continue
        kappa = complete_square(w, xi, theta).kappa
        out.append(NeuronConstraint(bool(xi >= 0 and kappa <= 0), False, kappa))
    return out


def rqnn_from_centers(alpha, centers, xi, offset) -> RQNN:
    """RQNN whose neuron j computes alpha_j s(offset_j + xi_j |x - centers_j|^2)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    xi = np.asarray(xi, dtype=float).reshape(-1)
    w = -2.0 * xi[:, None] * centers
    theta = np.asarray(offset, dtype=float) + xi * np.sum(centers * centers, axis=1)
    return RQNN(alpha=alpha, w=w, theta=theta, xi=xi)


def empty_rqnn(n: int) -> RQNN:
    return RQNN(alpha=np.zeros(0), w=np.zeros((0, n)), theta=np.zeros(0), xi=np.zeros(0))


def random_rqnn(rng: np.random.Generator, n: int, N: int, spread: float = 1.0) -> RQNN:
    """Random RQNN with localized neurons (negative curvature, positive offset)."""
    centers = rng.uniform(-spread, spread, size=(N, n))
    xi = -rng.uniform(0.5, 2.0, size=N)
    offset = rng.uniform(0.5, 1.5, size=N)
    alpha = rng.choice([-1.0, 1.0], size=N) * rng.uniform(0.5, 2.0, size=N)
    return rqnn_from_centers(alpha, centers, xi, offset)


def random_dnn4(rng: np.random.Generator, N1: int, N2: int) -> DNN4:
    return DNN4(rng.normal(size=N1), rng.normal(size=N1), rng.normal(size=N1),
                rng.normal(size=N2), rng.normal(size=N2), rng.normal(size=N2))


def params_to_json(params) -> dict:
    """``{family, n, N, <array fields>}`` with nested lists for the arrays."""
    d = {"family": params.family, "n": params.n}
    if isinstance(params, DNN4):
        d["N"] = [params.N1, params.N2]
    else:
        d["N"] = params.N
    for f in fields(params):
        d[f.name] = np.asarray(getattr(params, f.name), dtype=float).tolist()
    return d


def params_from_json(d: dict):
    family = d.get("family")
    if family not in FAMILIES:
        raise ValueError(f"unknown network family {family!r}")
    cls = FAMILIES[family]
    arrays = {f.name: np.asarray(d[f.name], dtype=float) for f in fields(cls)}
    if family != "DNN4":
        N, n = int(d["N"]), int(d["n"])
        arrays["w"] = arrays["w"].reshape(N, n)
        for name in ("A", "fixed_A"):
            if name in arrays:
                arrays[name] = arrays[name].reshape(N, n, n)
    return cls(**arrays)
