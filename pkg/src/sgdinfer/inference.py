"""Confidence intervals for ``a^T theta`` from an averaged SGD run."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import DegenerateCovarianceError, NoAcceptedReplicasError

METHODS = ("Bootstrap", "Cov", "Oracle")

_CLAMP_TOL = 1e-12


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    method: str
    level: float
    accepted_count: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown interval method {self.method!r}")
        if not self.lower <= self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def center(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def normal_quantile(p: float) -> float:
    """Upper quantile ``z`` of the standard normal: ``Phi(z) = 1 - p``."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return float(-ndtri(p))


def _check_level(q):
    if not 0.0 < q < 1.0:
        raise ValueError(f"miss level q must lie in (0, 1), got {q}")


def _normal_interval(a, theta_bar, sigma, N, q, method, accepted):
    _check_level(q)
    a = np.asarray(a, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    center = float(a @ np.asarray(theta_bar, dtype=float))
    var = float(a @ sigma @ a)
    if var < 0.0:
        scale = max(1.0, float(a @ a) * float(np.abs(sigma).max(initial=0.0)))
        if var < -_CLAMP_TOL * scale:
            raise DegenerateCovarianceError(f"a^T Sigma a = {var:.3e} is negative")
        var = 0.0
    half = normal_quantile(q / 2) * math.sqrt(var / N)
    return ConfidenceInterval(center - half, center + half, method, 1.0 - q, accepted)


def cov_ci(a, theta_bar, sigma, N, q=0.05, accepted_count=0) -> ConfidenceInterval:
    """Normal interval ``a^T theta_bar +- z_{q/2} sqrt(a^T Sigma a / N)``."""
    return _normal_interval(a, theta_bar, sigma, N, q, "Cov", accepted_count)


def oracle_ci(a, theta_bar, oracle_sigma, N, q=0.05) -> ConfidenceInterval:
    """Same as :func:`cov_ci` with the true sandwich covariance plugged in."""
    return _normal_interval(a, theta_bar, oracle_sigma, N, q, "Oracle", 0)


def empirical_quantile_inverse(values, q: float) -> float:
    """``inf{x : F_K(x) >= q}`` for the empirical CDF of ``values``.

    Equals the ``ceil(q K)``-th order statistic; the index is located with the
    same ``j / K >= q`` comparison the definition uses, so rounding in ``q K``
    cannot shift it.
    """
    v = np.sort(np.asarray(values, dtype=float).ravel())
    K = v.size
    if K == 0:
        raise NoAcceptedReplicasError("cannot take a quantile of an empty set")
    _check_level(q)
    k = min(max(math.ceil(q * K), 1), K)
    while k > 1 and (k - 1) / K >= q:
        k -= 1
    while k < K and k / K < q:
        k += 1
    return float(v[k - 1])


def bootstrap_ci(a, theta_bar, projections, N, q=0.05) -> ConfidenceInterval:
    """Percentile interval from scaled replica projections.

    ``projections`` are ``sqrt(N) a^T (theta_bar^(b) - theta_bar)`` over the
    accepted replicas; the interval is
    ``[c + Q(q/2)/sqrt(N), c + Q(1 - q/2)/sqrt(N)]`` with ``c = a^T theta_bar``.
    """
    proj = np.asarray(projections, dtype=float)
    if proj.size == 0:
        raise NoAcceptedReplicasError("no accepted replicas for the bootstrap interval")
    _check_level(q)
    center = float(np.asarray(a, dtype=float) @ np.asarray(theta_bar, dtype=float))
    root_n = math.sqrt(N)
    lo = center + empirical_quantile_inverse(proj, q / 2) / root_n
    hi = center + empirical_quantile_inverse(proj, 1 - q / 2) / root_n
    return ConfidenceInterval(lo, hi, "Bootstrap", 1.0 - q, int(proj.size))
