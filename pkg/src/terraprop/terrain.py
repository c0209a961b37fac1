"""Random terrain profile synthesis and statistics.

Two generators are provided: a stationary Gaussian process with
squared-exponential correlation (sampled exactly through a Cholesky factor
of the covariance), and a 1D midpoint-displacement fractal whose per-level
displacement variance decays by 2^(-2H) at each subdivision.  Both are pure
functions of (params, n, spacing, seed).  `estimate_stats` recovers rms
height, correlation length and a variogram Hurst exponent from a set of
profiles, which is how the generators are validated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

GENERATOR_TAGS = ("gaussian", "fractal", "external")


class GenerationError(RuntimeError):
    """Raised when a sampling step fails numerically."""


class EstimationError(RuntimeError):
    """Raised when profile statistics cannot be estimated."""


@dataclass(frozen=True)
class TerrainProfile:
    """One terrain realization: uniformly spaced height samples in metres."""

    heights_m: np.ndarray
    spacing_m: float
    seed: int = 0
    generator_tag: str = "external"

    def __post_init__(self):
        h = np.asarray(self.heights_m, dtype=np.float64)
        object.__setattr__(self, "heights_m", h)
        if h.ndim != 1 or h.size < 2:
            raise ValueError("a profile needs at least 2 height samples")
        if not np.all(np.isfinite(h)):
            raise ValueError("profile heights must be finite")
        if self.spacing_m <= 0:
            raise ValueError("spacing_m must be positive")
        if self.generator_tag not in GENERATOR_TAGS:
            raise ValueError(f"unknown generator_tag {self.generator_tag!r}")

    @property
    def n_points(self) -> int:
        return self.heights_m.size

    @property
    def ranges_m(self) -> np.ndarray:
        return np.arange(self.n_points) * self.spacing_m

    def shifted(self, offset_m: float) -> "TerrainProfile":
        """Same profile rigidly translated in height."""
        return TerrainProfile(self.heights_m + offset_m, self.spacing_m,
                              self.seed, self.generator_tag)


@dataclass(frozen=True)
class GaussianParams:
    rms_height_m: float = 20.0
    corr_length_m: float = 800.0

    def __post_init__(self):
        if self.rms_height_m <= 0 or self.corr_length_m <= 0:
            raise ValueError("rms height and correlation length must be positive")


@dataclass(frozen=True)
class FractalParams:
    variance: float = 30.0
    hurst: float = 1.2

    def __post_init__(self):
        if self.variance <= 0:
            raise ValueError("variance must be positive")
        if not 0.0 < self.hurst < 2.0:
            raise ValueError("hurst must lie in (0, 2)")


def gen_gaussian(params: GaussianParams, n: int, spacing_m: float,
                 seed: int) -> TerrainProfile:
    """Zero-mean stationary Gaussian profile with correlation
    C(tau) = sigma^2 * exp(-(tau/L)^2), so the autocorrelation falls to 1/e
    exactly at lag L.  Exact sampling via Cholesky factorization with a
    small diagonal jitter."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if spacing_m <= 0:
        raise ValueError("spacing_m must be positive")
    sigma = params.rms_height_m
    tau = np.arange(n, dtype=np.float64) * spacing_m
    cov = sigma ** 2 * np.exp(-((tau[:, None] - tau[None, :]) / params.corr_length_m) ** 2)
    cov[np.diag_indices_from(cov)] += 1e-10 * sigma ** 2
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise GenerationError(f"covariance not positive definite after jitter: {exc}") from exc
    rng = np.random.default_rng(seed)
    heights = chol @ rng.standard_normal(n)
    return TerrainProfile(heights, spacing_m, seed, "gaussian")


def gen_fractal(params: FractalParams, n: int, spacing_m: float,
                seed: int) -> TerrainProfile:
    """1D midpoint-displacement fractal profile.

    Built on 2^k + 1 >= n points and truncated to n.  Endpoints are seeded
    with the top-level displacement variance, then every subdivision level
    displaces segment midpoints with variance scaled by 2^(-2H), which makes
    height increments self-affine with exponent H.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if spacing_m <= 0:
        raise ValueError("spacing_m must be positive")
    levels = max(1, int(np.ceil(np.log2(n - 1))))
    size = 2 ** levels + 1
    rng = np.random.default_rng(seed)
    h = np.zeros(size)
    var = params.variance
    h[0], h[-1] = rng.normal(0.0, np.sqrt(var), 2)
    step = size - 1
    while step > 1:
        half = step // 2
        mids = np.arange(half, size, step)
        h[mids] = 0.5 * (h[mids - half] + h[mids + half]) \
            + rng.normal(0.0, np.sqrt(var), mids.size)
        var *= 2.0 ** (-2.0 * params.hurst)
        step = half
    return TerrainProfile(h[:n], spacing_m, seed, "fractal")


class TerrainStats(NamedTuple):
    rms_m: float
    corr_length_m: float
    hurst: float


def estimate_stats(profiles: Iterable[TerrainProfile],
                   variogram_lags: int = 16) -> TerrainStats:
    """Pooled statistics over a set of equally sampled profiles.

    rms is taken about the pooled mean; the correlation length is the lag
    (linearly interpolated) where the pooled autocorrelation first drops
    below 1/e; the Hurst exponent is half the log-log slope of the
    second-difference variogram over lags 1..variogram_lags.  Second
    differences are used because they stay self-affine over the whole
    0 < H < 2 range, where first differences saturate at slope 2 and
    cannot express H above 1.  Returns NaN for the correlation length if
    the autocorrelation never crosses 1/e inside the probed lag window.
    """
    profiles = list(profiles)
    if len(profiles) < 10:
        raise ValueError("need at least 10 profiles to estimate statistics")
    spacing = profiles[0].spacing_m
    n = profiles[0].n_points
    for p in profiles:
        if p.spacing_m != spacing or p.n_points != n:
            raise ValueError("profiles must share spacing and length")
    data = np.stack([p.heights_m for p in profiles])
    mu = data.mean()
    centered = data - mu
    var = np.mean(centered ** 2)
    if var < 1e-24:
        raise EstimationError("profiles are degenerate (zero variance)")
    rms = float(np.sqrt(var))

    max_lag = min(n - 1, n // 2)
    target = np.exp(-1.0)
    acf = np.empty(max_lag + 1)
    acf[0] = 1.0
    corr_length = float("nan")
    for lag in range(1, max_lag + 1):
        acf[lag] = np.mean(centered[:, :-lag] * centered[:, lag:]) / var
        if acf[lag] < target:
            lo, hi = acf[lag - 1], acf[lag]
            frac = (lo - target) / (lo - hi)
            corr_length = spacing * (lag - 1 + frac)
            break

    lags = np.arange(1, variogram_lags + 1)
    vario = np.array([
        np.mean((data[:, 2 * lag:] - 2 * data[:, lag:-lag] + data[:, :-2 * lag]) ** 2)
        for lag in lags])
    if np.any(vario <= 0):
        raise EstimationError("degenerate variogram")
    slope = np.polyfit(np.log(lags * spacing), np.log(vario), 1)[0]
    return TerrainStats(rms, float(corr_length), float(slope / 2.0))
