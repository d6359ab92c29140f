"""Tail-exponent estimation and wildness diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError

MIN_ORDER = 10
BAND_TOLERANCE = 0.25
BAND_Z = 2.0


@dataclass(frozen=True)
class TailEstimate:
    """A fitted tail ``P(X > x) ~ constant * x^-exponent`` above ``x_min``.

    ``constant`` is an estimate of the tail scale, labelled as such: the
    limit theorems only assert that it exists.
    """

    exponent: float
    method: str
    order_count: int
    std_error: float
    x_min: float
    power_law: bool | None = None
    constant: float | None = None

    def to_json(self) -> dict:
        return {
            "exponent": self.exponent,
            "method": self.method,
            "k": self.order_count,
            "stderr": self.std_error,
            "xmin": self.x_min,
            "constant_estimate": self.constant,
        }


def _as_array(sample) -> np.ndarray:
    return np.asarray(sample, dtype=float).ravel()


def drop_zeros(sample) -> tuple[np.ndarray, int]:
    """Absolute values with exact zeros removed, plus the number removed."""
    x = np.abs(_as_array(sample))
    keep = x > 0
    return x[keep], int(x.size - np.count_nonzero(keep))


def _check_positive(x):
    if x.size == 0:
        raise InsufficientDataError("empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    if np.any(x <= 0):
        raise ValueError("Hill estimation needs strictly positive values")


def _hill_sorted(desc: np.ndarray, k: int) -> TailEstimate:
    n = desc.size
    if k < MIN_ORDER:
        raise ValueError(f"k must be at least {MIN_ORDER}, got {k}")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the sample size {n}")
    threshold = desc[k]
    logs = np.log(desc[:k] / threshold)
    total = float(logs.sum())
    if total <= 0:
        raise InsufficientDataError("top order statistics are tied; no tail to estimate")
    mu = k / total
    # P(X > x) ~ C x^-mu matched at the threshold: C = (k / n) threshold^mu
    const = math.exp(math.log(k / n) + mu * math.log(threshold))
    return TailEstimate(mu, "hill", k, mu / math.sqrt(k), float(threshold), constant=const)


def hill_estimator(sample, k: int) -> TailEstimate:
    """Hill estimate from the ``k`` largest order statistics.

    ``exponent = k / sum_{i<=k} ln(x_(i) / x_(k+1))`` with descending order
    statistics; its standard error is ``exponent / sqrt(k)``.
    """
    x = _as_array(sample)
    _check_positive(x)
    desc = -np.sort(-x)
    return _hill_sorted(desc, int(k))


def default_k(n: int) -> int:
    return int(math.floor(2 * math.sqrt(n)))


def _blocks_se(x, desc, k, block):
    """Dependence-robust standard error of the Hill exponent at order ``k``.

    The Hill statistic is the ratio of the summed log-excesses to the number
    of exceedances; its linearisation is summed over consecutive time blocks
    of ``block`` observations, so clustered extremes count once per block
    rather than once per observation.  For iid data this reduces to
    ``exponent / sqrt(k)``.
    """
    u = desc[k]
    h = float(np.mean(np.log(desc[:k] / u)))
    exc = x > u
    z = np.where(exc, np.log(np.where(exc, x, u) / u) - h, 0.0)
    nb = x.size // block
    sums = z[:nb * block].reshape(nb, block).sum(axis=1)
    rest = z[nb * block:].sum()
    var = (float(np.sum(sums**2)) + float(rest) ** 2) / (k * k)
    return math.sqrt(var) / (h * h)


@dataclass(frozen=True)
class HillBand:
    """Hill estimates at ``k/2``, ``k`` and ``2k`` for one sample.

    ``lo``/``hi`` bound the band: the range of the three estimates widened
    by ``BAND_Z`` standard errors each, where each error is the larger of
    the iid value and the blocks value (``robust_se``), so serially
    clustered extremes widen the band honestly.  ``spread`` is the range of
    the point estimates relative to the central one; the sample is called
    power-law when it is below ``BAND_TOLERANCE``.  ``deep_drift`` compares
    the estimate at ``k/8`` with the one at ``2k``: exponential-type tails
    steepen steadily into the tail while a power law stays flat.
    """

    central: TailEstimate
    half: TailEstimate
    double: TailEstimate
    lo: float
    hi: float
    spread: float
    power_law: bool
    deep_drift: float | None
    zeros_dropped: int = 0
    robust_se: tuple = ()
    block_length: int = 1

    @property
    def exponent(self) -> float:
        return self.central.exponent

    @property
    def central_se(self) -> float:
        """Standard error of the central estimate used for the band."""
        return self.robust_se[1] if self.robust_se else self.central.std_error

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    @property
    def mild_suspected(self) -> bool:
        drift = self.deep_drift is not None and self.deep_drift > BAND_TOLERANCE
        return not self.power_law or drift

    def to_json(self) -> dict:
        return {
            "central": self.central.to_json(),
            "half_k": self.half.to_json(),
            "double_k": self.double.to_json(),
            "lo": self.lo,
            "hi": self.hi,
            "spread": self.spread,
            "power_law": self.power_law,
            "deep_drift": self.deep_drift,
            "zeros_dropped": self.zeros_dropped,
            "robust_se": list(self.robust_se),
            "block_length": self.block_length,
        }


def hill_band(sample, k: int | None = None, block_length: int | None = None) -> HillBand:
    """Hill stability band; zeros are dropped and counted first.

    ``sample`` is taken in time order.  ``block_length`` defaults to
    ``floor(sqrt(n))``; pass 1 for iid data.
    """
    x, zeros = drop_zeros(sample)
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    n = x.size
    k = default_k(n) if k is None else int(k)
    if k // 2 < MIN_ORDER or 2 * k >= n:
        raise InsufficientDataError(
            f"need k/2 >= {MIN_ORDER} and 2k < n for a stability band (n={n}, k={k})"
        )
    block = max(1, math.isqrt(n)) if block_length is None else int(block_length)
    if block < 1:
        raise ValueError("block_length must be at least 1")
    desc = -np.sort(-x)
    orders = (k // 2, k, 2 * k)
    ests = [_hill_sorted(desc, kk) for kk in orders]
    half, central, double = ests
    ses = tuple(max(e.std_error, _blocks_se(x, desc, kk, block)) for e, kk in zip(ests, orders))
    points = [e.exponent for e in ests]
    spread = (max(points) - min(points)) / central.exponent
    lo = min(e.exponent - BAND_Z * se for e, se in zip(ests, ses))
    hi = max(e.exponent + BAND_Z * se for e, se in zip(ests, ses))
    drift = None
    if k // 8 >= MIN_ORDER:
        deep = _hill_sorted(desc, k // 8)
        drift = (deep.exponent - double.exponent) / central.exponent
    return HillBand(central, half, double, lo, hi, spread,
                    spread < BAND_TOLERANCE, drift, zeros, ses, block)


def ccdf_points(sample) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``P(X > x)`` at each distinct sample value (ascending x)."""
    x = _as_array(sample)
    if x.size == 0:
        raise InsufficientDataError("ccdf of an empty sample")
    values, counts = np.unique(x, return_counts=True)
    greater = x.size - np.cumsum(counts)
    return values, greater / x.size


def _rank_fit(x_sorted_asc, n, fraction):
    m = int(math.floor(fraction * n))
    if m < 1:
        raise InsufficientDataError("tail fraction selects no observations")
    threshold = x_sorted_asc[n - m]
    tail = x_sorted_asc[n - m:]
    values, counts = np.unique(tail, return_counts=True)
    greater = tail.size - np.cumsum(counts)
    keep = greater > 0
    values, prob = values[keep], greater[keep] / n
    if values.size < MIN_ORDER:
        raise InsufficientDataError(
            f"only {values.size} usable tail points; need {MIN_ORDER}"
        )
    if np.any(values <= 0):
        raise ValueError("rank regression needs positive tail values")
    slope, intercept = np.polyfit(np.log(values), np.log(prob), 1)
    return -float(slope), m, float(threshold), math.exp(float(intercept))


def rank_regression(sample, tail_fraction: float) -> TailEstimate:
    """Least-squares slope of ``ln P(X > x)`` against ``ln x`` in the tail.

    The fit uses the largest ``tail_fraction`` of the sample.  Refits at
    half, twice and an eighth of that fraction give a stability check: if
    they differ by more than 25 % of the central estimate, ``power_law`` is
    set to false.  The deepest refit is skipped when it has too few points.
    The standard error is the large-sample ``exponent * sqrt(2 / m)`` of
    log-rank regression.
    """
    if not 0 < tail_fraction <= 0.5:
        raise ValueError("tail_fraction must lie in (0, 0.5]")
    x = np.sort(_as_array(sample))
    n = x.size
    mu, m, threshold, const = _rank_fit(x, n, tail_fraction)
    fits = [mu, _rank_fit(x, n, min(2 * tail_fraction, 0.5))[0]]
    for depth in (2, 8):
        try:
            fits.append(_rank_fit(x, n, tail_fraction / depth)[0])
        except InsufficientDataError:
            break
    spread = (max(fits) - min(fits)) / mu
    return TailEstimate(mu, "rank_regression", m, mu * math.sqrt(2.0 / m), threshold,
                        power_law=spread < BAND_TOLERANCE, constant=const)


def moment_probe(sample, p: float, min_prefix: int = 100) -> str:
    """Heuristic check for a divergent ``p``-th moment.

    The running mean of ``|x|^p`` is evaluated on prefixes whose lengths
    halve from the full sample down to ``min_prefix``.  A finite moment
    settles; a divergent one keeps climbing, so the moment is reported as
    ``"divergent_suspected"`` when the full-sample value exceeds twice either
    the half-sample value or the shortest-prefix value.
    """
    y = np.abs(_as_array(sample)) ** p
    n = y.size
    if n < 2 * min_prefix:
        raise InsufficientDataError(f"need at least {2 * min_prefix} observations")
    csum = np.cumsum(y)
    lengths = []
    m = n
    while m >= min_prefix:
        lengths.append(m)
        m //= 2
    means = np.array([csum[m - 1] / m for m in lengths])
    final = means[0]
    if final > 2 * means[1] or final > 2 * means[-1]:
        return "divergent_suspected"
    return "finite"


def wildness_compare(sample_x, sample_y) -> str:
    """Which of two positive samples is wilder.

    Returns ``"x_wilder"``, ``"y_wilder"``, ``"comparable"`` or
    ``"both_mild"``.  A power-law sample is wilder than a mild one; between
    two power laws the smaller exponent is wilder unless they differ by
    less than two joint (dependence-robust) standard errors.
    """
    bx, by = hill_band(sample_x), hill_band(sample_y)
    wild_x, wild_y = not bx.mild_suspected, not by.mild_suspected
    if not wild_x and not wild_y:
        return "both_mild"
    if wild_x != wild_y:
        return "x_wilder" if wild_x else "y_wilder"
    gap = BAND_Z * math.hypot(bx.central_se, by.central_se)
    if abs(bx.exponent - by.exponent) <= gap:
        return "comparable"
    return "x_wilder" if bx.exponent < by.exponent else "y_wilder"


def ccdf_at(sample, x: float) -> float:
    """Empirical ``P(X > x)``."""
    s = _as_array(sample)
    return float(np.count_nonzero(s > x)) / s.size
