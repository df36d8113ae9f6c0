"""CUSUM contrasts, local CUSUM, residual sums of squares and threshold rules.

All statistics assume unit noise variance; standardize responses first
(see :mod:`crisp.preprocess`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

SIDES = ("two", "pos", "neg")


def orient(stat: float, sided: str = "two") -> float:
    """Map a signed contrast to the score maximised by the estimator.

    ``two`` takes the absolute value; ``pos`` keeps the sign (region mean
    above background) and ``neg`` flips it.
    """
    if sided == "two":
        return abs(stat)
    if sided == "pos":
        return stat
    if sided == "neg":
        return -stat
    raise ValueError(f"sided must be one of {SIDES}, got {sided!r}")


def _values(ds_or_values) -> np.ndarray:
    return np.asarray(getattr(ds_or_values, "values", ds_or_values), dtype=float)


def _group_stats(z: np.ndarray) -> tuple[int, float, float]:
    """Count, mean and centred sum of squares of ``z`` (two-pass, fsum)."""
    k = z.shape[0]
    if k == 0:
        return 0, 0.0, 0.0
    mean = math.fsum(z) / k
    return k, mean, math.fsum((z - mean) ** 2)


def cusum(mask, ds, sided: str | None = None) -> float:
    """CUSUM contrast of region ``mask`` against its complement.

    Returns the signed value ``sqrt(|A||A^c|/n) (mean_A - mean_{A^c})`` when
    ``sided`` is None, otherwise the value oriented by :func:`orient`.
    Zero if either group is empty.
    """
    z = _values(ds)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != z.shape:
        raise ValueError("bitset and values differ in length")
    k_in, mean_in, _ = _group_stats(z[mask])
    k_out, mean_out, _ = _group_stats(z[~mask])
    if k_in == 0 or k_out == 0:
        t = 0.0
    else:
        t = math.sqrt(k_in * k_out / z.shape[0]) * (mean_in - mean_out)
    return t if sided is None else orient(t, sided)


def local_cusum(inner, outer, ds, sided: str = "two") -> float:
    """Local CUSUM of ``inner`` against ``outer \\ inner`` within ``outer``.

    The scaling uses ``|outer \\ inner|`` so that ``outer`` = everything
    gives back the global CUSUM.  Zero when either group is empty.
    """
    z = _values(ds)
    a = np.asarray(inner, dtype=bool)
    b = np.asarray(outer, dtype=bool)
    if np.any(a & ~b):
        raise ValueError("inner bitset is not contained in outer bitset")
    k_a, mean_a, _ = _group_stats(z[a])
    k_r, mean_r, _ = _group_stats(z[b & ~a])
    if k_a == 0 or k_r == 0:
        return 0.0
    t = math.sqrt(k_a * k_r / (k_a + k_r)) * (mean_a - mean_r)
    return orient(t, sided)


def rss(inner, outer, ds) -> float:
    """Two-group residual sum of squares of ``inner`` and ``outer \\ inner``."""
    z = _values(ds)
    a = np.asarray(inner, dtype=bool)
    b = np.asarray(outer, dtype=bool)
    if np.any(a & ~b):
        raise ValueError("inner bitset is not contained in outer bitset")
    return _group_stats(z[a])[2] + _group_stats(z[b & ~a])[2]


@dataclass(frozen=True)
class ScanStatistics:
    cusum: float
    rss: float
    inside_count: int
    outside_count: int


def scan_statistics(inner, outer, ds, sided: str = "two") -> ScanStatistics:
    a = np.asarray(inner, dtype=bool)
    b = np.asarray(outer, dtype=bool)
    return ScanStatistics(
        cusum=local_cusum(a, b, ds, sided),
        rss=rss(a, b, ds),
        inside_count=int(np.count_nonzero(a)),
        outside_count=int(np.count_nonzero(b & ~a)),
    )


# --- thresholds -----------------------------------------------------------

def rss_threshold_lm(m: int, lambda_r: float) -> float:
    """Chi-squared upper tail bound ``m + 2 sqrt(m lambda) + 2 lambda``."""
    if m < 1:
        raise ValueError(f"need m >= 1 degrees of freedom, got {m!r}")
    if lambda_r < 0:
        raise ValueError(f"lambda_r must be non-negative, got {lambda_r!r}")
    return m + 2.0 * math.sqrt(m * lambda_r) + 2.0 * lambda_r


class ConvergenceError(RuntimeError):
    pass


@lru_cache(maxsize=4096)
def rss_threshold_chi2(m: int, p: float = 0.05) -> float:
    """Upper ``p`` quantile of chi-squared with ``m`` degrees of freedom.

    Solves ``Q(m/2, x/2) = p`` for ``x``, where ``Q`` is the regularized
    upper incomplete gamma function, by safeguarded Newton iteration on
    ``log Q``.
    """
    if int(m) != m or m < 1:
        raise ValueError(f"need integer m >= 1, got {m!r}")
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p!r}")
    a = m / 2.0
    target = math.log(p)
    lg = special.gammaln(a)

    def log_q(x):
        q = special.gammaincc(a, x / 2.0)
        return math.log(q) if q > 0 else -math.inf

    # log of the chi2 density, i.e. of -dQ/dx
    def log_dens(x):
        return (a - 1) * math.log(x / 2.0) - x / 2.0 - lg - math.log(2.0)

    # Wilson-Hilferty starting point
    z = math.sqrt(2.0) * special.erfcinv(2.0 * p)
    h = 2.0 / (9.0 * m)
    x = max(m * (1.0 - h + z * math.sqrt(h)) ** 3, 1e-8)
    lo, hi = 0.0, max(2.0 * x, 10.0)
    while log_q(hi) > target:
        hi *= 2.0
    for _ in range(200):
        lq = log_q(x)
        fx = lq - target
        if fx > 0:
            lo = x
        else:
            hi = x
        # Newton on log Q: d(log Q)/dx = -dens / Q
        step = fx * math.exp(lq - log_dens(x)) if math.isfinite(lq) else math.inf
        x_new = x + step
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-14 * max(1.0, x):
            return x_new
        x = x_new
    raise ConvergenceError(f"chi-squared quantile did not converge for m={m}, p={p}")


def cusum_threshold(n: int, J: int) -> float:
    """Practical CUSUM threshold ``sqrt(2 log(n J / 2))``."""
    arg = n * J / 2.0
    if arg <= 1.0:
        raise ValueError(f"need n*J/2 > 1, got {arg!r}")
    return math.sqrt(2.0 * math.log(arg))


def theoretical_lambda(n: int, d: int) -> float:
    """``4 (d + 1) log n``."""
    return 4.0 * (d + 1) * math.log(n)


def theoretical_cusum_threshold(n: int, d: int) -> float:
    """``4 (n lambda)^{1/4} + 8 sqrt(lambda)`` with ``lambda = 4 (d + 1) log n``."""
    lam = theoretical_lambda(n, d)
    return 4.0 * (n * lam) ** 0.25 + 8.0 * math.sqrt(lam)


def num_outer_discs(d: int, alpha: float = 0.05) -> int:
    """Number of random outer discs so that one centre is expected within ``alpha``.

    For a uniform direction v and a fixed v*, ``cos^2 angle(v, v*)`` is
    Beta(1/2, (d-1)/2); the count is ``ceil(1 / P(cos^2 >= cos^2 alpha))``.
    """
    if int(d) != d or d < 2:
        raise ValueError(f"d must be an integer >= 2, got {d!r}")
    if not 0.0 < alpha < math.pi / 2:
        raise ValueError(f"alpha must lie in (0, pi/2), got {alpha!r}")
    cdf = float(special.betainc(0.5, (d - 1) / 2.0, math.cos(alpha) ** 2))
    tail = 1.0 - cdf
    if not tail > 0.0:
        raise ArithmeticError(f"incomplete beta underflow at d={d}, alpha={alpha}")
    return math.ceil(1.0 / tail)


@dataclass(frozen=True)
class ThresholdConfig:
    """Acceptance thresholds of the multi-region detector.

    lambda_t: ``"auto"`` for ``sqrt(2 log(nJ/2))``, ``"theory"`` for the
        ``4(n lambda)^{1/4} + 8 sqrt(lambda)`` rule, or a positive number.
    rss_rule: ``"chi2"`` (upper ``rss_level`` quantile) or ``"lm"`` (tail
        bound with ``lambda_r``; ``lambda_r=None`` means ``4(d+1) log n``).
    """

    lambda_t: float | str = "auto"
    rss_rule: str = "chi2"
    rss_level: float = 0.05
    lambda_r: float | None = None

    def __post_init__(self):
        if isinstance(self.lambda_t, str):
            if self.lambda_t not in ("auto", "theory"):
                raise ValueError(f"unknown lambda_t rule {self.lambda_t!r}")
        elif not self.lambda_t > 0:
            raise ValueError("explicit lambda_t must be positive")
        if self.rss_rule not in ("chi2", "lm"):
            raise ValueError(f"unknown rss_rule {self.rss_rule!r}")
        if not 0.0 < self.rss_level < 1.0:
            raise ValueError("rss_level must lie in (0, 1)")
        if self.lambda_r is not None and not self.lambda_r > 0:
            raise ValueError("lambda_r must be positive")

    def cusum_threshold(self, n: int, J: int, d: int) -> float:
        if self.lambda_t == "auto":
            return cusum_threshold(n, J)
        if self.lambda_t == "theory":
            return theoretical_cusum_threshold(n, d)
        return float(self.lambda_t)

    def rss_threshold(self, m: int, n: int, d: int) -> float:
        if self.rss_rule == "chi2":
            return rss_threshold_chi2(m, self.rss_level)
        lam = self.lambda_r if self.lambda_r is not None else theoretical_lambda(n, d)
        return rss_threshold_lm(m, lam)
