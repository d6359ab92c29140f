"""Scalar stochastic recurrence ``r_t = a_t r_{t-lag} + e_t``."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import distributions as dist
from ._exact import dec as _dec, reciprocal as _exact_reciprocal
from ._kernels import lag_one
from .distributions import DistributionSpec, RngState
from .errors import (ConfigurationError, FeedbackExplosionError, InsufficientDataError,
                     NonstationaryError, SingularMultiplierError)
from .kesten import StationarityReport, stationarity_report
from .series_io import write_csv

DEFAULT_BURN_IN = 10_000
CHUNK = 1 << 20


# ------------------------------------------------------------- multipliers


def multiplier(a: float) -> float:
    """Amplification ``k = 1 / (1 - a)`` of a disturbance under feedback ``a``."""
    if a == 1:
        raise SingularMultiplierError("multiplier is singular at a = 1")
    return _exact_reciprocal(1 - _dec(a))


def variance_multiplier(a: float) -> float:
    """``k' = 1 / (1 - a^2)``: variance amplification of a lag-one recursion."""
    if abs(a) == 1:
        raise SingularMultiplierError("variance multiplier is singular at |a| = 1")
    d = _dec(a)
    return _exact_reciprocal(1 - d * d)


def mean_multiplier(mean_a: float) -> float:
    """``k'' = 1 / (1 - E a)``: amplification of the stationary mean."""
    if mean_a == 1:
        raise SingularMultiplierError("mean multiplier is singular at E a = 1")
    return _exact_reciprocal(1 - _dec(mean_a))


def instantaneous_solve(a, b):
    """Fixed point of ``r = a r + a b``: ``a b / (1 - a)``.

    Works elementwise on arrays; any ``a >= 1`` raises
    :class:`FeedbackExplosionError` naming the first offending index.
    """
    a_arr = np.asarray(a, dtype=float)
    bad = np.flatnonzero(a_arr.ravel() >= 1)
    if bad.size:
        step = int(bad[0])
        raise FeedbackExplosionError(
            f"feedback a = {a_arr.ravel()[step]:.6g} >= 1: no instantaneous equilibrium",
            step=step if a_arr.ndim else None,
        )
    out = a_arr * np.asarray(b, dtype=float) / (1.0 - a_arr)
    return float(out) if out.ndim == 0 else out


# ------------------------------------------------------------------ paths


@dataclass(frozen=True)
class RecurrenceSpec:
    """``r_t = a_t r_{t-lag} + e_t``.

    ``input_mode`` is ``"direct"`` (``e`` drawn from ``input_law``) or
    ``"coupled"`` (``e = a * b`` with ``b`` drawn from ``input_law``).
    """

    a_law: DistributionSpec
    input_law: DistributionSpec
    input_mode: str = "direct"
    lag: int = 1
    r0: float = 0.0

    def __post_init__(self):
        if self.lag not in (0, 1):
            raise ConfigurationError(f"lag must be 0 or 1, got {self.lag}")
        if self.input_mode not in ("direct", "coupled"):
            raise ConfigurationError(f"input_mode must be direct or coupled, got {self.input_mode!r}")
        if not math.isfinite(self.r0):
            raise ConfigurationError("r0 must be finite")

    @property
    def coupled(self) -> bool:
        return self.input_mode == "coupled"


@dataclass(frozen=True)
class SeriesSample:
    values: np.ndarray
    burn_in_dropped: int
    seed: dict
    inputs: np.ndarray | None = None

    def __post_init__(self):
        if len(self.values) == 0:
            raise ValueError("a series sample must not be empty")

    def __len__(self):
        return len(self.values)

    def to_csv(self, path) -> None:
        write_csv(path, {"r": self.values})


def _draw_step_inputs(spec: RecurrenceSpec, gen, m):
    a = dist.draw(spec.a_law, gen, m)
    x = dist.draw(spec.input_law, gen, m)
    return a, x


def simulate_path(spec: RecurrenceSpec, length: int, burn_in: int = DEFAULT_BURN_IN,
                  rng: RngState | None = None, check: bool = True,
                  keep_inputs: bool = False) -> SeriesSample:
    """Simulate ``length`` post-burn-in values of the recurrence.

    Draws are consumed in fixed-size chunks (``a`` then the input), so the
    output depends only on ``rng``.  With ``lag = 0`` every step is the
    instantaneous equilibrium ``r_t = e_t / (1 - a_t)``.  ``keep_inputs``
    also stores the post-burn-in inputs ``e_t``.
    """
    if length <= 0:
        raise ValueError("length must be positive")
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    rng = rng if rng is not None else RngState()
    if check:
        verdict = check_stationarity(spec).verdict
        if verdict == "nonstationary":
            warnings.warn("E ln|a| >= 0: the recurrence has no stationary regime",
                          RuntimeWarning, stacklevel=2)
    gen = rng.generator if isinstance(rng, RngState) else dist._gen(rng)
    total = burn_in + length
    out = np.empty(total)
    inputs = np.empty(total) if keep_inputs else None
    r = float(spec.r0)
    start = 0
    while start < total:
        m = min(CHUNK, total - start)
        a, x = _draw_step_inputs(spec, gen, m)
        e = a * x if spec.coupled else x
        if spec.lag == 0:
            bad = np.flatnonzero(a >= 1)
            if bad.size:
                step = start + int(bad[0])
                raise FeedbackExplosionError(
                    f"feedback a = {a[bad[0]]:.6g} >= 1 at step {step}", step=step)
            chunk = e / (1.0 - a)
        else:
            chunk = lag_one(a, e, r)
            r = chunk[-1]
        if not np.all(np.isfinite(chunk)):
            step = start + int(np.flatnonzero(~np.isfinite(chunk))[0])
            raise NonstationaryError(f"recurrence overflowed at step {step}")
        out[start:start + m] = chunk
        if keep_inputs:
            inputs[start:start + m] = e
        start += m
    desc = rng.descriptor() if isinstance(rng, RngState) else {}
    return SeriesSample(out[burn_in:], burn_in, desc,
                        None if inputs is None else inputs[burn_in:])


def check_stationarity(spec: RecurrenceSpec, mc_budget: int = dist.DEFAULT_MC_BUDGET,
                       rng=None) -> StationarityReport:
    """Unique-stationary-solution check for ``spec`` (see :func:`stationarity_report`)."""
    return stationarity_report(spec.a_law, spec.input_law, mc_budget, rng)


# ------------------------------------------------------------ diagnostics


@dataclass(frozen=True)
class IncrementSummary:
    mean_increment: float
    std_error: float
    count: int
    gaussian_fit_residual: float | None

    def to_json(self):
        return {
            "mean_increment": self.mean_increment,
            "stderr": self.std_error,
            "count": self.count,
            "gaussian_fit_residual": self.gaussian_fit_residual,
        }


def log_abs_increment_diagnostic(sample, threshold: float, min_excursions: int = 5) -> IncrementSummary:
    """Mean of ``ln|r_t| - ln|r_{t-1}|`` over steps with ``|r_{t-1}| > threshold``.

    Far out in the tail the additive input is negligible, so the increment is
    close to ``ln|a_t|``.  The Gaussian residual is the Kolmogorov-Smirnov
    distance of the standardized increments from a normal law.
    """
    values = np.asarray(getattr(sample, "values", sample), dtype=float)
    prev, cur = np.abs(values[:-1]), np.abs(values[1:])
    sel = (prev > threshold) & (cur > 0)
    count = int(np.count_nonzero(sel))
    if count < min_excursions:
        raise InsufficientDataError(
            f"{count} excursions above threshold {threshold}; need {min_excursions}"
        )
    inc = np.log(cur[sel]) - np.log(prev[sel])
    mean = float(inc.mean())
    sd = float(inc.std(ddof=1)) if count > 1 else 0.0
    resid = None
    if sd > 0:
        resid = float(stats.kstest((inc - mean) / sd, "norm").statistic)
    return IncrementSummary(mean, sd / math.sqrt(count), count, resid)
