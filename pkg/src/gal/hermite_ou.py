"""Multivariate Hermite polynomials, the norm-moment inequality check for
Hermite series with vector coefficients, and kernel estimation of the
mean-reverting interpolation's velocity field.

Hermite evaluation uses the probabilists' three-term recurrence
h_{k+1}(u) = u h_k(u) - k h_{k-1}(u) per coordinate; the multivariate
polynomial with identity covariance is the tensor product across
coordinates. General covariances are handled by whitening the input,
never by differentiating the density.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, InputError
from .sampling import PointCloud, SeedSpec, ou_interpolate

_MAX_QUAD_ORDER = 12


@dataclass(frozen=True)
class MultiIndex:
    """Multi-index alpha with |alpha| and alpha! precomputed."""

    alpha: tuple[int, ...]
    order: int = field(init=False)
    factorial: int = field(init=False)

    def __post_init__(self) -> None:
        a = tuple(int(v) for v in self.alpha)
        if len(a) < 1:
            raise InputError("multi-index needs dimension p >= 1")
        if any(v < 0 for v in a):
            raise InputError("multi-index entries must be >= 0")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "order", sum(a))
        object.__setattr__(self, "factorial", math.prod(math.factorial(v) for v in a))

    @property
    def p(self) -> int:
        return len(self.alpha)


@dataclass(frozen=True)
class VelocityEstimate:
    """Estimated velocity field at the sample points of the interpolant."""

    t: float
    values: np.ndarray  # m x p
    bandwidth: float  # length-scale in standardized coordinates


def _hermite_1d(k: int, u: np.ndarray) -> np.ndarray:
    """Probabilists' Hermite polynomial h_k evaluated elementwise."""
    h_prev = np.ones_like(u)
    if k == 0:
        return h_prev
    h = u.copy()
    for j in range(1, k):
        h, h_prev = u * h - j * h_prev, h
    return h


def hermite_eval(alpha: MultiIndex, x: np.ndarray) -> float:
    """Identity-covariance multivariate Hermite polynomial at one point,
    prod_j h_{alpha_j}(x_j)."""
    pt = np.asarray(x, dtype=float).reshape(-1)
    if pt.shape[0] != alpha.p:
        raise DimensionError("point dimension does not match multi-index")
    out = 1.0
    for k, u in zip(alpha.alpha, pt):
        out *= float(_hermite_1d(k, np.asarray([u]))[0])
    return out


def hermite_eval_many(alpha: MultiIndex, x: np.ndarray) -> np.ndarray:
    """Vectorized H_alpha over the rows of an m x p array."""
    pts = np.asarray(x, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != alpha.p:
        raise DimensionError("points must be m x p with p matching the multi-index")
    out = np.ones(pts.shape[0])
    for j, k in enumerate(alpha.alpha):
        if k > 0:
            out *= _hermite_1d(k, pts[:, j])
    return out


def hermite_orthogonality_check(
    alpha: MultiIndex, beta: MultiIndex, quad_nodes: int
) -> float:
    """Gauss-Hermite tensor-quadrature value of E[H_alpha(g) H_beta(g)] for
    g ~ N(0, I_p); equals alpha! when alpha = beta and 0 otherwise, up to
    quadrature round-off."""
    if alpha.p != beta.p:
        raise DimensionError("multi-indices must share the dimension p")
    max_order = max(max(alpha.alpha), max(beta.alpha))
    if max_order > _MAX_QUAD_ORDER:
        raise DomainError(f"component orders above {_MAX_QUAD_ORDER} are not supported")
    if quad_nodes < 2 * max_order + 1:
        raise DomainError("quad_nodes must be >= 2*max(component order) + 1")
    nodes, weights = np.polynomial.hermite_e.hermegauss(quad_nodes)
    weights = weights / math.sqrt(2.0 * math.pi)  # normalize to the N(0,1) density
    total = 1.0
    for k1, k2 in zip(alpha.alpha, beta.alpha):
        vals = _hermite_1d(k1, nodes) * _hermite_1d(k2, nodes)
        total *= float(np.dot(weights, vals))
    return total


@dataclass(frozen=True)
class BoniCheck:
    """Both sides of the Hermite-series norm-moment inequality plus the
    Monte-Carlo relative standard error of the left side."""

    lhs: float
    rhs: float
    lhs_rel_stderr: float


def boni_inequality_check(
    coeffs: dict[MultiIndex, np.ndarray],
    q: float,
    m: int,
    seed: SeedSpec,
) -> BoniCheck:
    """Check [E||sum_a x_a H_a(g)||^q]^{2/q} <= sum_a max(1,q-1)^{|a|} a! ||x_a||^2.

    The left side is estimated from m Gaussian draws; the right side is
    exact. Assert lhs <= rhs * (1 + 5 * lhs_rel_stderr) in callers.
    """
    if not coeffs:
        raise InputError("coefficient map must be non-empty")
    if q < 2:
        raise DomainError("the inequality requires q >= 2")
    dims = {a.p for a in coeffs}
    if len(dims) != 1:
        raise DimensionError("all multi-indices must share the dimension p")
    p = dims.pop()
    if p > 4:
        raise DomainError("dimensions above 4 are not supported here")
    if any(a.order > 8 for a in coeffs):
        raise DomainError("orders above 8 are not supported here")
    vecs = {}
    for a, x in coeffs.items():
        v = np.asarray(x, dtype=float).reshape(-1)
        if v.shape[0] != p:
            raise DimensionError("coefficient vectors must live in R^p")
        vecs[a] = v

    rhs = sum(
        max(1.0, q - 1.0) ** a.order * a.factorial * float(v @ v)
        for a, v in vecs.items()
    )

    g = seed.generator().standard_normal((m, p))
    series = np.zeros((m, p))
    for a, v in vecs.items():
        series += np.outer(hermite_eval_many(a, g), v)
    norms_q = np.linalg.norm(series, axis=1) ** q
    mean_q = float(norms_q.mean())
    lhs = mean_q ** (2.0 / q)
    # relative stderr of mean_q, propagated through the 2/q power
    rel = float(norms_q.std(ddof=1)) / math.sqrt(m) / mean_q if mean_q > 0 else 0.0
    return BoniCheck(lhs=lhs, rhs=rhs, lhs_rel_stderr=(2.0 / q) * rel)


def silverman_bandwidth(m: int, p: int) -> float:
    """Silverman's factor for a Gaussian product kernel in standardized
    coordinates."""
    return (4.0 / (p + 2.0)) ** (1.0 / (p + 4.0)) * m ** (-1.0 / (p + 4.0))


def estimate_velocity_field(
    xi: PointCloud,
    gamma: PointCloud,
    t: float,
    bandwidth: float | None = None,
) -> VelocityEstimate:
    """Kernel-regression estimate of the interpolant's conditional drift.

    Forms X_t from (xi, gamma), then regresses the per-sample target
    Y = -e^{-t} (X_0 - e^{-t}/sqrt(1-e^{-2t}) X_inf) on X_t with a
    Nadaraya-Watson Gaussian kernel, evaluated at every sample point.
    The formula is singular at t = 0, so t must be strictly positive.
    When the two clouds follow the same Gaussian law the true field is
    identically zero (the flow is stationary on that law).
    """
    if not (t > 0) or math.isinf(t):
        raise DomainError("velocity estimation needs finite t > 0")
    if xi.points.shape != gamma.points.shape:
        raise DimensionError("xi and gamma must have identical shape")
    if bandwidth is not None and not (bandwidth > 0):
        raise DomainError("bandwidth must be positive")
    m, p = xi.m, xi.p
    x_t = ou_interpolate(xi, gamma, t).points
    a = math.exp(-t)
    c = a / math.sqrt(1.0 - a * a)
    target = -a * (xi.points - c * gamma.points)

    h = bandwidth if bandwidth is not None else silverman_bandwidth(m, p)
    scales = x_t.std(axis=0, ddof=1)
    scales[scales == 0] = 1.0
    z = x_t / scales  # kernel acts per coordinate at scale h * sigma_j

    values = np.empty_like(x_t)
    block = max(1, int(2**22 // max(m, 1)))
    for lo in range(0, m, block):
        hi = min(lo + block, m)
        # squared standardized distances, (hi-lo) x m
        d2 = ((z[lo:hi, None, :] - z[None, :, :]) ** 2).sum(axis=2)
        w = np.exp(-0.5 * d2 / h**2)
        denom = w.sum(axis=1, keepdims=True)
        values[lo:hi] = (w @ target) / denom
    return VelocityEstimate(t=t, values=values, bandwidth=h)
