"""Fading-gain distributions for the main and eavesdropper channels.

Every distribution describes a squared channel gain on ``[0, inf)``.  The
methods are vectorised over numpy arrays and never mutate state, so the
objects can be shared freely between workers.

Random draws come from counter-based Philox streams addressed by
``(seed, terminal, chunk)`` (see :func:`stream`), which keeps Monte Carlo
runs reproducible regardless of how block ranges are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import DomainError, UnsupportedFamilyError

__all__ = [
    "FadingDistribution",
    "ExponentialMean",
    "Gamma",
    "MaxOrderStatistic",
    "max_order_statistic",
    "colluding_eavesdropper",
    "stream",
    "sample",
    "cdf",
    "quantile",
]


def _nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("gain argument must be non-negative")
    return x


def _prob(p):
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p >= 1)):
        raise DomainError("probability must lie in [0, 1)")
    return p


def _survival(q):
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q > 1)):
        raise DomainError("survival probability must lie in (0, 1]")
    return q


class FadingDistribution:
    """Common interface of a squared-gain law.

    Subclasses implement ``_cdf``, ``_sf``, ``_pdf``, ``_logcdf``,
    ``_logsf``, ``_quantile`` and ``_isf`` on validated arrays.
    """

    def cdf(self, x):
        return self._cdf(_nonneg(x))

    def sf(self, x):
        return self._sf(_nonneg(x))

    def pdf(self, x):
        return self._pdf(_nonneg(x))

    def logcdf(self, x):
        with np.errstate(divide="ignore"):
            return self._logcdf(_nonneg(x))

    def logsf(self, x):
        with np.errstate(divide="ignore"):
            return self._logsf(_nonneg(x))

    def quantile(self, p):
        """Smallest ``x`` with ``cdf(x) >= p`` for ``0 <= p < 1``."""
        return self._quantile(_prob(p))

    def isf(self, q):
        """Inverse survival function, ``sf(isf(q)) == q``; precise in the upper tail."""
        return self._isf(_survival(q))

    def mass(self, lo, hi):
        """``Pr[lo <= gamma < hi]``, taking differences on the accurate side."""
        lo = _nonneg(lo)
        hi = np.asarray(hi, dtype=float)
        upper = self._sf(lo) - self._sf(hi)
        lower = self._cdf(np.minimum(hi, np.finfo(float).max)) - self._cdf(lo)
        lower = np.where(np.isinf(hi), self._sf(lo), lower)
        return np.where(self._cdf(lo) > 0.5, upper, lower)

    def logit(self, x):
        """Log-odds ``log(F / (1 - F))`` at ``x``; -inf at 0."""
        return self.logcdf(x) - self.logsf(x)

    def from_logit(self, r):
        """Inverse of :meth:`logit`, accurate in both tails."""
        r = np.asarray(r, dtype=float)
        out = np.empty_like(r)
        low = r <= 0
        with np.errstate(divide="ignore"):
            out[low] = self._quantile(special.expit(r[low]))
            out[~low] = self._isf(special.expit(-r[~low]))
        return out

    def sample(self, rng, size=None):
        """Inverse-transform draws using the supplied ``numpy`` generator."""
        u = rng.random(size)
        return self._isf(1.0 - u)

    @property
    def mean(self):
        return integrate.quad(lambda x: float(self._sf(np.asarray(x))), 0, np.inf,
                              epsabs=1e-13, epsrel=1e-12, limit=200)[0]


@dataclass(frozen=True)
class ExponentialMean(FadingDistribution):
    """Exponential law with the given mean (Rayleigh fading power gain)."""

    mean_value: float = 1.0

    def __post_init__(self):
        if not self.mean_value > 0:
            raise DomainError("exponential mean must be positive")

    @property
    def mean(self):
        return self.mean_value

    def _z(self, x):
        with np.errstate(over="ignore"):
            return x / self.mean_value

    def _cdf(self, x):
        return -np.expm1(-self._z(x))

    def _sf(self, x):
        return np.exp(-self._z(x))

    def _pdf(self, x):
        return np.exp(-self._z(x)) / self.mean_value

    def _logcdf(self, x):
        z = self._z(x)
        with np.errstate(divide="ignore"):
            # log1p form keeps precision where the CDF is close to one
            return np.where(z > np.log(2.0), np.log1p(-np.exp(-z)), np.log(-np.expm1(-z)))

    def _logsf(self, x):
        return -self._z(x)

    def _quantile(self, p):
        return -self.mean_value * np.log1p(-p)

    def _isf(self, q):
        return -self.mean_value * np.log(q)


@dataclass(frozen=True)
class Gamma(FadingDistribution):
    """Gamma law with integer shape (Erlang), e.g. a sum of exponential gains."""

    shape: int = 1
    scale: float = 1.0

    def __post_init__(self):
        if int(self.shape) != self.shape or self.shape < 1:
            raise DomainError("gamma shape must be a positive integer")
        if not self.scale > 0:
            raise DomainError("gamma scale must be positive")

    @property
    def mean(self):
        return self.shape * self.scale

    def _z(self, x):
        with np.errstate(over="ignore"):
            return x / self.scale

    def _cdf(self, x):
        return special.gammainc(self.shape, self._z(x))

    def _sf(self, x):
        return special.gammaincc(self.shape, self._z(x))

    def _pdf(self, x):
        k, s = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = (k - 1) * np.log(x / s) - x / s - special.gammaln(k) - np.log(s)
        out = np.exp(logp)
        if k == 1:
            out = np.where(x == 0, 1.0 / s, out)
        else:
            out = np.where(x == 0, 0.0, out)
        return out

    def _logcdf(self, x):
        p = special.gammainc(self.shape, self._z(x))
        q = special.gammaincc(self.shape, self._z(x))
        return np.where(p > 0.5, np.log1p(-q), np.log(p))

    def _logsf(self, x):
        return np.log(special.gammaincc(self.shape, self._z(x)))

    def _quantile(self, p):
        return self.scale * special.gammaincinv(self.shape, p)

    def _isf(self, q):
        return self.scale * special.gammainccinv(self.shape, q)


@dataclass(frozen=True)
class MaxOrderStatistic(FadingDistribution):
    """Law of the largest of ``K`` i.i.d. gains drawn from ``base``."""

    base: FadingDistribution
    K: int = 1

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise DomainError("number of receivers K must be a positive integer")

    def _cdf(self, x):
        return self.base._cdf(x) ** self.K

    def _sf(self, x):
        with np.errstate(divide="ignore"):
            return -np.expm1(self.K * self.base._logcdf(x))

    def _pdf(self, x):
        return self.K * self.base._cdf(x) ** (self.K - 1) * self.base._pdf(x)

    def _logcdf(self, x):
        return self.K * self.base._logcdf(x)

    def _logsf(self, x):
        return np.log(self._sf(x))

    def _quantile(self, p):
        with np.errstate(divide="ignore"):
            return self.base._isf(-np.expm1(np.log(p) / self.K))

    def _isf(self, q):
        return self.base._isf(-np.expm1(np.log1p(-q) / self.K))


def max_order_statistic(dist: FadingDistribution, K: int) -> MaxOrderStatistic:
    """Distribution view of ``max(gamma_1, ..., gamma_K)`` for i.i.d. receivers."""
    if int(K) != K or K < 1:
        raise DomainError("K must be a positive integer")
    return MaxOrderStatistic(dist, int(K))


def colluding_eavesdropper(dist: FadingDistribution, M: int) -> Gamma:
    """Gain law seen by ``M`` colluding eavesdroppers with i.i.d. exponential gains.

    Collusion replaces the single eavesdropper gain by the squared norm of
    the colluders' channel vector, a sum of ``M`` exponentials.
    """
    if int(M) != M or M < 1:
        raise DomainError("number of colluding eavesdroppers must be a positive integer")
    if isinstance(dist, Gamma) and dist.shape == 1:
        return Gamma(int(M), dist.scale)
    if not isinstance(dist, ExponentialMean):
        raise UnsupportedFamilyError(
            f"collusion is only supported for exponential gains, got {type(dist).__name__}")
    return Gamma(int(M), dist.mean_value)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Counter-based Philox generator addressed by ``seed`` and an integer key path.

    The same ``(seed, key)`` always yields a bit-identical sequence, and
    distinct keys give statistically independent streams.
    """
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


# Functional aliases mirroring the operation names.

def cdf(dist: FadingDistribution, x):
    return dist.cdf(x)


def quantile(dist: FadingDistribution, p):
    return dist.quantile(p)


def sample(dist: FadingDistribution, rng: np.random.Generator, size=None):
    return dist.sample(rng, size)
