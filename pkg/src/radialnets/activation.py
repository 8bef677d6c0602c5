"""Scalar activation functions and their derivatives.

An :class:`ActivationProfile` bundles an activation with evaluators for its
first and second derivative.  Non-smooth activations (the Heaviside step)
carry ``smoothness_order = 0`` and refuse derivative queries, so any code path
that needs a C^2 activation fails loudly instead of silently using zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar
from scipy.special import erf, expit


class DerivativeUnavailable(ValueError):
    """Raised when a derivative is requested from a non-smooth activation."""


KINDS = ("sigmoid", "gaussian-tail", "heaviside", "user-table")


@dataclass(frozen=True)
class ActivationProfile:
    kind: str
    derivatives: tuple[Callable[[np.ndarray], np.ndarray], ...]
    smoothness_order: int
    C_sigma: float | None = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.smoothness_order not in (0, 2):
            raise ValueError("smoothness_order must be 0 or 2")
        if len(self.derivatives) != self.smoothness_order + 1:
            raise ValueError("need one evaluator per derivative order")

    def __call__(self, s, order: int = 0):
        return eval_activation(self, s, order)

    def with_decay_constant(self, C_sigma: float) -> "ActivationProfile":
        return ActivationProfile(self.kind, self.derivatives, self.smoothness_order,
                                 float(C_sigma), self.name)

    def require_smooth(self):
        if self.smoothness_order < 2:
            raise DerivativeUnavailable(
                f"activation {self.name or self.kind!r} has no derivatives")


def eval_activation(act: ActivationProfile, s, order: int = 0):
    """Return the ``order``-th derivative of ``act`` at ``s`` (scalar or array)."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if order > act.smoothness_order:
        raise DerivativeUnavailable(
            f"{act.name or act.kind} supports derivatives up to order "
            f"{act.smoothness_order}, requested {order}")
    out = act.derivatives[order](np.asarray(s, dtype=float))
    return out if np.ndim(out) else float(out)


def _sigmoid0(s):
    return expit(s)


def _sigmoid1(s):
    return expit(s) * expit(-s)


def _sigmoid2(s):
    p = expit(s)
    return p * expit(-s) * (1.0 - 2.0 * p)


def sigmoid() -> ActivationProfile:
    """Logistic function 1/(1+e^{-s})."""
    return ActivationProfile("sigmoid", (_sigmoid0, _sigmoid1, _sigmoid2), 2,
                             name="sigmoid")


_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


def gaussian_tail() -> ActivationProfile:
    """Monotone activation (1 + erf(s))/2 with a Gaussian left tail.

    The derivative is e^{-s^2}/sqrt(pi), so all derivatives decay faster than
    any polynomial.
    """
    return ActivationProfile(
        "gaussian-tail",
        (lambda s: 0.5 * (1.0 + erf(s)),
         lambda s: _INV_SQRT_PI * np.exp(-s * s),
         lambda s: -2.0 * s * _INV_SQRT_PI * np.exp(-s * s)),
        2, name="gaussian-tail")


def _step(s):
    # closed convention: H(0) = 1
    return np.where(s >= 0.0, 1.0, 0.0)


def heaviside() -> ActivationProfile:
    return ActivationProfile("heaviside", (_step,), 0, name="heaviside")


def tabulated(s_knots: Sequence[float], values: Sequence[float],
              name: str = "user-table") -> ActivationProfile:
    """Activation interpolated from a table with a C^2 cubic spline.

    Outside the knot range the spline is extrapolated with its end polynomials,
    which for a constant table is again constant.
    """
    spline = CubicSpline(np.asarray(s_knots, float), np.asarray(values, float))
    d1, d2 = spline.derivative(1), spline.derivative(2)
    return ActivationProfile("user-table", (spline, d1, d2), 2, name=name)


def finite_difference_check(act: ActivationProfile, s, step: float = 1e-5):
    """Compare derivative evaluators against central differences.

    The order-``i`` evaluator is checked against the central difference of the
    order-``i-1`` evaluator.  Returns ``{order: relative error}`` where the
    error is ``max|analytic - fd| / max|analytic|`` over the points ``s``.
    """
    act.require_smooth()
    s = np.asarray(s, dtype=float)
    errs = {}
    for order in (1, 2):
        exact = eval_activation(act, s, order)
        lower = act.derivatives[order - 1]
        fd = (lower(s + step) - lower(s - step)) / (2 * step)
        scale = np.max(np.abs(exact))
        errs[order] = float(np.max(np.abs(exact - fd)) / scale) if scale > 0 else 0.0
    return errs


@dataclass
class DecayReport:
    holds: bool
    empirical_C: float
    argmax_t: float
    r: float
    n: int
    i: int
    samples: int
    tail_increase: float = field(default=0.0)


STABILIZATION_TOL = 1e-12


def decay_horizon(n: int, i: int, level: float = 1e-9) -> float:
    """Smallest T with (1+T^n)^(-1-(2i+1)/n) < level."""
    expo = 1.0 + (2 * i + 1) / n
    return float((level ** (-1.0 / expo) - 1.0) ** (1.0 / n)) * (1 + 1e-9)


def decay_samples(n: int, i: int, dense_until: float = 16.0,
                  dense_count: int = 160_001, tail_count: int = 4_000) -> np.ndarray:
    """Sample points on [0, T]: dense near the kernel core, geometric in the tail."""
    T = max(decay_horizon(n, i), 2 * dense_until)
    return np.concatenate([np.linspace(0.0, dense_until, dense_count),
                           np.geomspace(dense_until, T, tail_count)[1:]])


def _weighted(act, r, n, i, t):
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        return (np.abs(eval_activation(act, r * r - t * t, i))
                * (1.0 + np.abs(t) ** n) ** (1.0 + (2 * i + 1) / n))


def verify_decay(act: ActivationProfile, r: float, n: int, i: int,
                 t_samples=None, refine: bool = True, refine_top: int = 8) -> DecayReport:
    """Empirical constant in |sigma^(i)(r^2-t^2)| <= C (1+|t|^n)^(-1-(2i+1)/n).

    ``empirical_C`` is the maximum of the weighted derivative over the samples.
    With ``refine`` the largest discrete local maxima are polished by bounded
    scalar maximisation and the polished points join the sample set, so the
    result approximates the true supremum rather than a grid value.

    ``holds`` requires a finite maximum that no longer grows over the last 10%
    of the sampled range.
    """
    if t_samples is None:
        t_samples = decay_samples(n, i)
    t = np.sort(np.abs(np.asarray(t_samples, dtype=float)))
    T = t[-1]
    expo = 1.0 + (2 * i + 1) / n
    if (1.0 + T ** n) ** (-expo) >= 1e-9:
        raise ValueError(f"samples end at T={T:g}; need T >= {decay_horizon(n, i):g}")
    vals = _weighted(act, r, n, i, t)
    if not np.all(np.isfinite(vals)):
        return DecayReport(False, float("inf"), float("nan"), r, n, i, t.size,
                           float("inf"))

    extra_t, extra_v = [], []
    if refine and t.size >= 3:
        inner = np.flatnonzero((vals[1:-1] >= vals[:-2]) & (vals[1:-1] >= vals[2:])) + 1
        inner = inner[np.argsort(vals[inner])[::-1][:refine_top]]
        for j in inner:
            lo, hi = t[j - 1], t[j + 1]
            if hi <= lo:
                continue
            res = minimize_scalar(lambda u: -_weighted(act, r, n, i, u),
                                  bounds=(lo, hi), method="bounded",
                                  options={"xatol": 1e-13 * max(1.0, hi)})
            extra_t.append(float(res.x))
            extra_v.append(float(-res.fun))
    all_t = np.concatenate([t, extra_t])
    all_v = np.concatenate([vals, extra_v])

    k = int(np.argmax(all_v))
    C = float(all_v[k])
    cutoff = t[0] + 0.9 * (T - t[0])
    head = all_v[all_t <= cutoff]
    head_max = float(head.max()) if head.size else 0.0
    increase = C - head_max
    return DecayReport(bool(np.isfinite(C) and increase <= STABILIZATION_TOL), C,
                       float(all_t[k]), r, n, i, int(all_t.size), increase)


def decay_constant(act: ActivationProfile, r: float, n: int) -> float:
    """C_sigma valid simultaneously for every available derivative order."""
    reports = [verify_decay(act, r, n, i) for i in range(act.smoothness_order + 1)]
    bad = [rep.i for rep in reports if not rep.holds]
    if bad:
        raise ValueError(f"decay condition fails for derivative orders {bad}")
    return max(rep.empirical_C for rep in reports)
