"""Closed-form rate bounds and concentration constants.

Every unnamed absolute constant is an explicit parameter defaulting to 1,
and all logarithms are natural. The functions are pure scalar formulas;
`empirical_mu` is the one Monte-Carlo estimator (symmetrized summand
moments) needed to feed the moment-based distance bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError, InputError
from .sampling import CovarianceSpec, SeedSpec, SummandModel, sample_sum_replicates


@dataclass(frozen=True)
class SubGaussianProfile:
    """Sub-Gaussian constants (nu0, g) with the crossover point xc = g^2/4."""

    nu0: float
    g: float
    xc: float = field(init=False)

    def __post_init__(self) -> None:
        if not (self.nu0 > 0) or not (self.g > 0):
            raise ConfigError("nu0 and g must be positive")
        object.__setattr__(self, "xc", self.g**2 / 4.0)

    def admissible(self, p: int) -> bool:
        """Whether 0.3*g >= sqrt(p), the regime the tail bound assumes."""
        return 0.3 * self.g >= math.sqrt(p)


@dataclass(frozen=True)
class BoundInputs:
    """Arguments shared by the closed-form distance bounds."""

    n: int
    p: int
    L: float = 2.0
    nu0: float = 1.0
    sigma_norm: float = 1.0  # operator norm of the sum covariance
    abs_const_C: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 1 or self.p < 1:
            raise ConfigError("n and p must be >= 1")
        if self.abs_const_C < 0:
            raise ConfigError("abs_const_C must be >= 0")
        if self.sigma_norm < 0:
            raise ConfigError("sigma_norm must be >= 0")


@dataclass(frozen=True)
class MomentVector:
    """Moments mu_k of the normalized symmetrized summands, keyed by order."""

    mu: dict[float, float]

    def __post_init__(self) -> None:
        for k, v in self.mu.items():
            if v < 0:
                raise InputError(f"moment mu_{k} must be >= 0, got {v}")

    def get(self, k: float) -> float:
        key = float(k)
        if key not in self.mu:
            raise InputError(f"moment of order {k} missing from MomentVector")
        return self.mu[key]


def _require_log_np(n: int, p: int) -> float:
    if n * p < 3:
        raise DomainError("n*p must be >= 3 so that log(np) > 1")
    return math.log(n * p)


def main_bound_cnp(inputs: BoundInputs) -> float:
    """Finite-sample coupling rate C(n, p) of the headline tail bound:
    C nu0^2 p log(np)^{3/2} / sqrt(n) + 5 nu0^3 p^{3/2} log(np) log(2n) / sqrt(n).
    """
    n, p = inputs.n, inputs.p
    lnp = _require_log_np(n, p)
    rn = math.sqrt(n)
    first = inputs.abs_const_C * inputs.nu0**2 * p * lnp**1.5 / rn
    second = 5.0 * inputs.nu0**3 * p**1.5 * lnp * math.log(2 * n) / rn
    return first + second


def main_tail_threshold(inputs: BoundInputs, t: float) -> float:
    """Deviation threshold C(n,p) ||Sigma||^{1/2} e^{t/log(np)}; the coupled
    difference exceeds it with probability at most e^{-t}."""
    if t < 0:
        raise DomainError("t must be >= 0")
    lnp = _require_log_np(inputs.n, inputs.p)
    return main_bound_cnp(inputs) * math.sqrt(inputs.sigma_norm) * math.exp(t / lnp)


def wlt_bound(inputs: BoundInputs, mu: MomentVector) -> float:
    """Moment-form transport distance bound,

    ||Sigma||^{1/2} [ C L^{3/2}/log L (mu_4^{1/2} + mu_{2L}^{1/L})
                      + sqrt(2) e^{1/2} L^{1/2} mu_2 / sqrt(n)
                      + e^{1/2} L mu_3 log(2n) / 2 ].
    """
    L, n = inputs.L, inputs.n
    if math.log(L) <= 0:
        raise DomainError("cost exponent L must satisfy log L > 0 (L > 1)")
    mu2, mu3, mu4 = mu.get(2), mu.get(3), mu.get(4)
    mu2L = mu.get(2 * L)
    se = math.sqrt(math.e)
    term1 = inputs.abs_const_C * L**1.5 / math.log(L) * (math.sqrt(mu4) + mu2L ** (1.0 / L))
    term2 = math.sqrt(2.0) * se * math.sqrt(L) * mu2 / math.sqrt(n)
    term3 = se * L * mu3 * math.log(2 * n) / 2.0
    return math.sqrt(inputs.sigma_norm) * (term1 + term2 + term3)


def wlt_subgaussian_bound(inputs: BoundInputs) -> float:
    """Sub-Gaussian transport distance bound,

    C L^{3/2} nu0^2 ||Sigma||^{1/2}/log L (p/sqrt(n) + L/n^{1-1/L})
      + 5 L nu0^3 p^{3/2} ||Sigma||^{1/2} log(2n) / sqrt(n).
    """
    L, n, p = inputs.L, inputs.n, inputs.p
    if L < 2:
        raise DomainError("the sub-Gaussian bound requires L >= 2")
    rs = math.sqrt(inputs.sigma_norm)
    term1 = (
        inputs.abs_const_C
        * L**1.5
        * inputs.nu0**2
        * rs
        / math.log(L)
        * (p / math.sqrt(n) + L / n ** (1.0 - 1.0 / L))
    )
    term2 = 5.0 * L * inputs.nu0**3 * p**1.5 * rs * math.log(2 * n) / math.sqrt(n)
    return term1 + term2


def subgaussian_quantile(profile: SubGaussianProfile, p: int, x: float) -> float:
    """Quantile z(p, x): sqrt(p + 2 sqrt(px) + 2x) below the crossover
    xc = g^2/4, then linear growth g + 2(x - xc)/g."""
    if x < 0:
        raise DomainError("x must be >= 0")
    if p < 1:
        raise DomainError("p must be >= 1")
    if x <= profile.xc:
        return math.sqrt(p + 2.0 * math.sqrt(p * x) + 2.0 * x)
    return profile.g + 2.0 * (x - profile.xc) / profile.g


def subgaussian_tail(profile: SubGaussianProfile, p: int, x: float) -> float:
    """Upper bound for P(||xi|| >= z(p, x)):
    min(1, 2 e^{-x} + 8.4 e^{-xc} 1(x < xc)); indicator strict at x = xc."""
    if x < 0:
        raise DomainError("x must be >= 0")
    bound = 2.0 * math.exp(-x)
    if x < profile.xc:
        bound += 8.4 * math.exp(-profile.xc)
    return min(1.0, bound)


def subgaussian_moment_bound(p: int, k: float) -> float:
    """Norm-moment bound E||xi||^k <= 4 (sqrt(p) + sqrt(2k))^k for a
    normalized sub-Gaussian vector."""
    if k < 2:
        raise DomainError("moment order k must be >= 2")
    if p < 1:
        raise DomainError("p must be >= 1")
    return 4.0 * (math.sqrt(p) + math.sqrt(2.0 * k)) ** k


def summand_moment_bound(p: int, k: float, nu0: float, n: int) -> float:
    """Scaled moment bound for one normalized summand:
    E||Sigma^{-1/2} xi_i||^k <= (4 nu0^k / n^{k/2}) (sqrt(p) + sqrt(2k))^k."""
    if n < 1:
        raise DomainError("n must be >= 1")
    return nu0**k / n ** (k / 2.0) * subgaussian_moment_bound(p, k)


def onedim_wl_const(L: float, d: float, eps: float, abs_const_C: float = 1.0) -> float:
    """One-dimensional transport bound (C L d)^{3(d+1)/2} * eps under the
    weighted-CDF closeness condition."""
    if L < 1 or d < 1:
        raise DomainError("L and d must be >= 1")
    if eps < 0:
        raise DomainError("eps must be >= 0")
    return (abs_const_C * L * d) ** (1.5 * (d + 1.0)) * eps


def onedim_coupling_threshold(
    n: int, d: float, eps: float, abs_const_C: float = 1.0
) -> float:
    """Deviation threshold e * C(log n, d) * eps whose exceedance probability
    is at most 1/n under the optimal one-dimensional coupling."""
    if n < 2:
        raise DomainError("n must be >= 2 so that log n >= log 2")
    return math.e * onedim_wl_const(math.log(n), d, eps, abs_const_C)


def anti_concentration_const(p: int, sigma_lower: float) -> float:
    """Density bound for the Gaussian coordinate maximum:
    C_A = (sqrt(2 log p) + 2) / sigma_lower."""
    if p < 1:
        raise DomainError("p must be >= 1")
    if not (sigma_lower > 0):
        raise DomainError("sigma_lower must be positive")
    return (math.sqrt(2.0 * math.log(p)) + 2.0) / sigma_lower


def gaussian_comparison_bound(
    delta_sigma: float,
    lambda_min: float,
    p: int,
    sigma_upper: float,
    sigma_lower: float,
    abs_const_C: float = 1.0,
) -> float:
    """Max-distribution comparison of two Gaussian vectors with covariance
    gap delta = ||Sigma - Sigma'||_inf / lambda_min:
    C delta log(p) max(0, log(sigma_upper / (delta sigma_lower)))."""
    if not (lambda_min > 0):
        raise DomainError("lambda_min must be positive")
    if delta_sigma < 0:
        raise DomainError("delta_sigma must be >= 0")
    if p < 1:
        raise DomainError("p must be >= 1")
    if delta_sigma == 0:
        return 0.0
    delta = delta_sigma / lambda_min
    log_term = max(0.0, math.log(sigma_upper / (delta * sigma_lower)))
    return abs_const_C * delta * math.log(p) * log_term


def final_dist_bound(
    n: int,
    p: int,
    nu0: float,
    sigma_upper: float,
    sigma_lower: float,
    lambda_min: float,
    abs_const_C: float = 1.0,
) -> tuple[float, float]:
    """Kolmogorov-distance bound for the coordinate maximum, and the shift
    Delta used in its proof. Returns (bound, shift) with

    bound = C [ nu0^3 (s_up/s_lo) log^2(np)/sqrt(n)
                + nu0^3 (s_up^2/lambda_min) log(np)^{5/2} log(n)/sqrt(n) ],
    shift = C e s_up log^{3/2}(np) nu0^3 / sqrt(n).
    """
    if not (sigma_upper > 0 and sigma_lower > 0 and lambda_min > 0):
        raise DomainError("scale parameters must be positive")
    lnp = _require_log_np(n, p)
    rn = math.sqrt(n)
    bound = abs_const_C * (
        nu0**3 * (sigma_upper / sigma_lower) * lnp**2 / rn
        + nu0**3 * (sigma_upper**2 / lambda_min) * lnp**2.5 * math.log(n) / rn
    )
    shift = abs_const_C * math.e * sigma_upper * lnp**1.5 * nu0**3 / rn
    return bound, shift


def empirical_mu(
    model: SummandModel,
    cov: CovarianceSpec,
    k: float,
    m: int,
    seed: SeedSpec,
) -> float:
    """Monte-Carlo estimate of mu_k = sum_i E||Sigma^{-1/2}(xi_i - xi'_i)||^k.

    The summand families here are exchangeable, so this is
    n * E||Sigma^{-1/2}(xi_1 - xi'_1)||^k estimated from m draws of the
    symmetrized first summand.
    """
    if k < 1:
        raise DomainError("moment order k must be >= 1")
    whiten = cov.inv_sqrt_factor()  # raises DomainError when singular
    one = SummandModel(model.kind, 1, model.p, model.effective_scale, model.cov)
    xi = sample_sum_replicates(one, m, seed.child(0)).points
    xi_prime = sample_sum_replicates(one, m, seed.child(1)).points
    z = (xi - xi_prime) @ whiten.T
    norms = np.linalg.norm(z, axis=1)
    return model.n * float(np.mean(norms**k))


def empirical_moment_vector(
    model: SummandModel,
    cov: CovarianceSpec,
    L: float,
    m: int,
    seed: SeedSpec,
) -> MomentVector:
    """Estimate the orders (2, 3, 4, 2L) consumed by the moment-form bound."""
    orders = sorted({2.0, 3.0, 4.0, 2.0 * float(L)})
    return MomentVector(
        {k: empirical_mu(model, cov, k, m, seed.child(int(10 * k))) for k in orders}
    )
