"""Deterministic, seedable sampling of sums of independent vectors,
correlated Gaussian vectors, and the mean-reverting interpolation
between them.

All randomness flows through :class:`SeedSpec`, a pure function of
``(master_seed, stream_id)`` mapped onto a counter-based Philox
generator. Distinct stream ids give statistically independent streams,
so grid cells and trials can be seeded independently and reproducibly.

Distribution shortcuts are exact: a sum of n centered Bernoulli draws
is sampled as a single binomial, a sum of n Gaussians as a single
Gaussian with the summed covariance. Replicate j of any cloud depends
only on (seed, j), so enlarging m extends a cloud without changing
existing rows.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, DomainError

_EIG_CLIP_REL = 1e-10  # eigenvalues in [-tol*||S||, 0] are treated as 0

SUMMAND_KINDS = ("centered_bernoulli", "rademacher", "uniform", "gaussian")

# variance and sub-Gaussian variance proxy of the unit-scale summand
# coordinate: Be(.5)-.5 has variance 1/4, Rademacher 1, U(-1/2,1/2) 1/12.
_COORD_VARIANCE = {"centered_bernoulli": 0.25, "rademacher": 1.0, "uniform": 1.0 / 12.0}
# ratio (sub-Gaussian proxy std) / (actual std) per coordinate: bounded
# variables in [-a, a] are a^2-sub-Gaussian (Hoeffding), Gaussians exact.
_SUBG_RATIO = {
    "centered_bernoulli": 1.0,  # log cosh(u) <= u^2/2
    "rademacher": 1.0,
    "uniform": math.sqrt(3.0),  # U(-a,a): proxy a vs std a/sqrt(3)
    "gaussian": 1.0,
}


@dataclass(frozen=True)
class SeedSpec:
    """Pure (master_seed, stream_id) -> generator-state mapping."""

    master_seed: int = 0
    stream_id: int = 0

    def __post_init__(self) -> None:
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, int) or not (0 <= v < 2**64):
                raise ConfigError(f"{name} must be an integer in [0, 2^64)")

    def child(self, *indices: int) -> "SeedSpec":
        """Derive an independent substream keyed by an index tuple.

        The derived stream id is a stable 64-bit digest of the parent
        stream id and the indices, so (master_seed, cell, trial, role)
        always names the same stream.
        """
        payload = struct.pack("<Q", self.stream_id) + struct.pack(
            f"<{len(indices)}q", *indices
        )
        digest = hashlib.sha256(payload).digest()
        return SeedSpec(self.master_seed, int.from_bytes(digest[:8], "little"))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class CovarianceSpec:
    """A p-dimensional covariance in identity, diagonal or full form.

    Full matrices must be symmetric positive semi-definite; eigenvalues
    in [-1e-10*||S||, 0] are clipped to zero to tolerate numerically
    semi-definite inputs.
    """

    p: int
    form: str = "identity"  # identity | diagonal | full
    diag: np.ndarray | None = None
    matrix: np.ndarray | None = None
    scale: float = 1.0  # uniform multiplier, handy for identity*c

    def __post_init__(self) -> None:
        if self.p < 1:
            raise ConfigError("dimension p must be >= 1")
        if self.form not in ("identity", "diagonal", "full"):
            raise ConfigError(f"unknown covariance form {self.form!r}")
        if self.scale < 0:
            raise ConfigError("covariance scale must be >= 0")
        if self.form == "diagonal":
            d = np.asarray(self.diag, dtype=float)
            if d.shape != (self.p,):
                raise DimensionError("diagonal must have shape (p,)")
            if np.any(d < 0):
                raise ConfigError("diagonal entries must be >= 0")
            object.__setattr__(self, "diag", d)
        if self.form == "full":
            m = np.asarray(self.matrix, dtype=float)
            if m.shape != (self.p, self.p):
                raise DimensionError("matrix must have shape (p, p)")
            if not np.allclose(m, m.T, atol=1e-12 * max(1.0, float(np.abs(m).max()))):
                raise ConfigError("covariance matrix must be symmetric")
            object.__setattr__(self, "matrix", (m + m.T) / 2.0)

    @classmethod
    def identity(cls, p: int, scale: float = 1.0) -> "CovarianceSpec":
        return cls(p=p, form="identity", scale=scale)

    @classmethod
    def diagonal(cls, diag: np.ndarray) -> "CovarianceSpec":
        d = np.asarray(diag, dtype=float)
        return cls(p=d.shape[0], form="diagonal", diag=d)

    @classmethod
    def full(cls, matrix: np.ndarray) -> "CovarianceSpec":
        m = np.asarray(matrix, dtype=float)
        return cls(p=m.shape[0], form="full", matrix=m)

    def dense(self) -> np.ndarray:
        if self.form == "identity":
            return np.eye(self.p) * self.scale
        if self.form == "diagonal":
            return np.diag(self.diag) * self.scale
        return self.matrix * self.scale

    def _eigh(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.dense()
        vals, vecs = np.linalg.eigh(s)
        norm = float(np.abs(vals).max()) if vals.size else 0.0
        if np.any(vals < -_EIG_CLIP_REL * max(norm, 1e-300)):
            raise ConfigError(
                "covariance is not positive semi-definite "
                f"(min eigenvalue {vals.min():.3e})"
            )
        return np.clip(vals, 0.0, None), vecs

    def sqrt_factor(self) -> np.ndarray:
        """Symmetric square root A with A @ A.T = dense()."""
        vals, vecs = self._eigh()
        return (vecs * np.sqrt(vals)) @ vecs.T

    def inv_sqrt_factor(self) -> np.ndarray:
        """Symmetric inverse square root; requires lambda_min > 0."""
        vals, vecs = self._eigh()
        if vals.min() <= 0:
            raise DomainError("covariance is singular; inverse square root undefined")
        return (vecs / np.sqrt(vals)) @ vecs.T

    @property
    def op_norm(self) -> float:
        vals, _ = self._eigh()
        return float(vals.max())

    @property
    def lambda_min(self) -> float:
        vals, _ = self._eigh()
        return float(vals.min())

    @property
    def diag_values(self) -> np.ndarray:
        return np.diag(self.dense())

    @property
    def sigma_sq_min(self) -> float:
        """Smallest diagonal entry (variance lower bound sigma_lower^2)."""
        return float(self.diag_values.min())

    @property
    def sigma_sq_max(self) -> float:
        return float(self.diag_values.max())


@dataclass(frozen=True)
class SummandModel:
    """An i.i.d. family of n zero-mean summand vectors in R^p.

    ``scale`` multiplies every summand; the default 1/sqrt(n) keeps the
    sum's variance independent of n. For the gaussian kind ``cov`` is
    the base covariance of an unscaled summand (identity when omitted).
    """

    kind: str
    n: int
    p: int
    scale: float | None = None
    cov: CovarianceSpec | None = None

    def __post_init__(self) -> None:
        if self.kind not in SUMMAND_KINDS:
            raise ConfigError(f"unknown summand kind {self.kind!r}")
        if self.n < 1 or self.p < 1:
            raise ConfigError("summand model requires n >= 1 and p >= 1")
        if self.scale is not None and not (self.scale > 0):
            raise ConfigError("scale must be positive")
        if self.cov is not None and self.cov.p != self.p:
            raise DimensionError("cov dimension does not match model dimension")
        if self.kind != "gaussian" and self.cov is not None:
            raise ConfigError("cov is only meaningful for the gaussian kind")

    @property
    def effective_scale(self) -> float:
        return self.scale if self.scale is not None else 1.0 / math.sqrt(self.n)

    def sum_covariance(self) -> CovarianceSpec:
        """Exact covariance of the sum of the n scaled summands."""
        c = self.n * self.effective_scale**2
        if self.kind == "gaussian":
            base = self.cov if self.cov is not None else CovarianceSpec.identity(self.p)
            return CovarianceSpec(
                p=self.p,
                form=base.form,
                diag=base.diag,
                matrix=base.matrix,
                scale=base.scale * c,
            )
        return CovarianceSpec.identity(self.p, scale=c * _COORD_VARIANCE[self.kind])

    @property
    def nu0(self) -> float:
        """Variance proxy making sqrt(n)/nu0 * Sigma^{-1/2} xi_i sub-Gaussian.

        For coordinate-wise independent summands this is the per-coordinate
        ratio of the Hoeffding proxy to the actual standard deviation.
        """
        return _SUBG_RATIO[self.kind]


@dataclass(frozen=True)
class PointCloud:
    """m sample vectors in R^p with uniform weights."""

    points: np.ndarray
    m: int = field(init=False)
    p: int = field(init=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise DimensionError("points must be an m x p matrix")
        if pts.shape[0] < 1:
            raise ConfigError("point cloud needs m >= 1 rows")
        if not np.all(np.isfinite(pts)):
            raise ConfigError("point cloud contains NaN/Inf entries")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "m", pts.shape[0])
        object.__setattr__(self, "p", pts.shape[1])


def sample_sum_replicates(model: SummandModel, m: int, seed: SeedSpec) -> PointCloud:
    """Draw m independent replicates of the sum of the model's n summands."""
    if m < 1:
        raise ConfigError("replicate count m must be >= 1")
    rng = seed.generator()
    s = model.effective_scale
    n, p = model.n, model.p
    if model.kind == "centered_bernoulli":
        # sum of n iid (Be(1/2) - 1/2) draws == Binomial(n, 1/2) - n/2
        pts = (rng.binomial(n, 0.5, size=(m, p)).astype(float) - n / 2.0) * s
    elif model.kind == "rademacher":
        pts = (2.0 * rng.binomial(n, 0.5, size=(m, p)).astype(float) - n) * s
    elif model.kind == "gaussian":
        base = model.cov if model.cov is not None else CovarianceSpec.identity(p)
        factor = base.sqrt_factor() * (s * math.sqrt(n))
        pts = rng.standard_normal((m, p)) @ factor.T
    else:  # uniform on (-1/2, 1/2); no closed-form sum, accumulate in row blocks
        pts = np.empty((m, p))
        block = max(1, int(2**22 // max(n * p, 1)))
        for lo in range(0, m, block):
            hi = min(lo + block, m)
            draws = rng.random((hi - lo, n, p)) - 0.5
            pts[lo:hi] = draws.sum(axis=1) * s
    return PointCloud(pts)


def sample_sum_replicates_coupled(
    model: SummandModel, m: int, seed: SeedSpec
) -> tuple[PointCloud, PointCloud]:
    """Draw coupled (sum-replicate, Gaussian) cloud pairs by common random
    numbers: per coordinate, one uniform drives both the inverse-CDF draw
    of the summand sum and the Gaussian quantile.

    Marginally the first cloud equals ``sample_sum_replicates`` in law and
    the second is exactly N(0, sum_covariance()); jointly each coordinate
    pair realizes the comonotone (1-D optimal) coupling, which removes the
    two-independent-clouds sampling cost from transport estimates.

    Only kinds whose coordinate sums have a tractable CDF are supported
    (centered_bernoulli, rademacher).
    """
    from scipy.special import ndtri
    from scipy.stats import binom

    if model.kind not in ("centered_bernoulli", "rademacher"):
        raise ConfigError(
            "coupled sampling supports centered_bernoulli and rademacher kinds"
        )
    if m < 1:
        raise ConfigError("replicate count m must be >= 1")
    rng = seed.generator()
    n, p, s = model.n, model.p, model.effective_scale
    u = rng.random((m, p))
    cdf = binom.cdf(np.arange(n + 1), n, 0.5)
    counts = np.searchsorted(cdf, u, side="left").astype(float)
    if model.kind == "centered_bernoulli":
        xi = (counts - n / 2.0) * s
    else:
        xi = (2.0 * counts - n) * s
    sd = math.sqrt(model.sum_covariance().sigma_sq_max)
    gamma = sd * ndtri(u)
    return PointCloud(xi), PointCloud(gamma)


def sample_gaussian(cov: CovarianceSpec, m: int, seed: SeedSpec) -> PointCloud:
    """Draw m i.i.d. N(0, cov) rows via the symmetric square root."""
    if m < 1:
        raise ConfigError("replicate count m must be >= 1")
    factor = cov.sqrt_factor()
    rng = seed.generator()
    return PointCloud(rng.standard_normal((m, cov.p)) @ factor.T)


def ou_interpolate(xi: PointCloud, gamma: PointCloud, t: float) -> PointCloud:
    """Rowwise e^{-t} xi + sqrt(1 - e^{-2t}) gamma.

    t = 0 returns xi bit-exactly and t = inf returns gamma bit-exactly;
    for matched population covariance the output covariance is preserved
    for every t.
    """
    if xi.points.shape != gamma.points.shape:
        raise DimensionError(
            f"shape mismatch: {xi.points.shape} vs {gamma.points.shape}"
        )
    if not (t >= 0):
        raise DomainError("interpolation time t must be >= 0")
    if t == 0:
        return PointCloud(xi.points.copy())
    if math.isinf(t):
        return PointCloud(gamma.points.copy())
    a = math.exp(-t)
    b = math.sqrt(max(0.0, 1.0 - a * a))
    return PointCloud(a * xi.points + b * gamma.points)
