"""Matrix recurrences ``x_t = A_t x_{t-1} + e_t``: opinion networks and cross-asset returns."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components

from . import distributions as dist
from ._kernels import vector_steps
from .distributions import DistributionSpec, RngState
from .errors import (ConfigurationError, NonstationaryError, NumericError,
                     SingularMultiplierError)
from .kesten import solve_moment_equation
from .series_io import write_csv
from .tails import TailEstimate, hill_band

MODES = ("opinion_network", "cross_asset")
MAX_ITER = 100_000


@dataclass(frozen=True)
class WeightMatrix:
    """Square weight matrix.

    In opinion-network mode the diagonal is zero, entries are nonnegative,
    every row sums to at most one and at least one row sums to less.
    """

    entries: np.ndarray
    mode: str = "opinion_network"

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
            raise ConfigurationError(f"weight matrix must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ConfigurationError("weight matrix has non-finite entries")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.mode == "opinion_network":
            _check_network(m)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @classmethod
    def from_csv(cls, path, mode="opinion_network"):
        return cls(np.loadtxt(path, delimiter=",", ndmin=2), mode)


def _check_network(m, atol=1e-12):
    if np.any(np.diag(m) != 0):
        raise ConfigurationError("opinion-network weights need a zero diagonal")
    if np.any(m < 0):
        raise ConfigurationError("opinion-network weights must be nonnegative")
    rows = m.sum(axis=1)
    if np.any(rows > 1 + atol):
        raise ConfigurationError(f"row sums must not exceed 1 (max {rows.max():.6g})")
    if not np.any(rows < 1 - atol):
        raise ConfigurationError("at least one row sum must be below 1")


def _as_array(m) -> np.ndarray:
    return m.entries if isinstance(m, WeightMatrix) else np.asarray(m, dtype=float)


# --------------------------------------------------------------- structure


def strong_connectivity(m) -> bool:
    """Whether every node reaches every other along positive entries."""
    a = _as_array(m)
    n_comp, _ = connected_components(a != 0, directed=True, connection="strong")
    return n_comp == 1


def spectral_radius(m, tol: float = 1e-12, max_iter: int = MAX_ITER) -> float:
    """Largest absolute eigenvalue.

    Nonnegative matrices are split into strongly connected blocks (the
    radius is the largest block radius) and each block is handled by power
    iteration on ``B + I``.  The shift makes the block primitive, so periodic
    (oscillating) blocks converge too, and the Collatz-Wielandt ratios of
    the positive iterate bracket the root, which gives a rigorous stopping
    rule.  Matrices with negative entries fall back to a dense eigenvalue
    solve.
    """
    a = _as_array(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("spectral radius needs a square matrix")
    if not np.any(a):
        return 0.0
    if np.any(a < 0):
        return float(np.max(np.abs(np.linalg.eigvals(a))))
    n_comp, labels = connected_components(a != 0, directed=True, connection="strong")
    best = 0.0
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        block = a[np.ix_(idx, idx)]
        if idx.size == 1:
            best = max(best, float(block[0, 0]))
        else:
            best = max(best, _perron_root(block, tol, max_iter))
    return best


def _perron_root(block, tol, max_iter):
    shifted = block + np.eye(block.shape[0])
    x = np.ones(block.shape[0])
    for _ in range(max_iter):
        y = shifted @ x
        ratios = y / x
        lo, hi = float(ratios.min()), float(ratios.max())
        if hi - lo <= tol * hi:
            return max(0.5 * (lo + hi) - 1.0, 0.0)
        x = y / hi
    raise NumericError(f"power iteration did not converge in {max_iter} steps")


def operator_norm(m, tol: float = 1e-12, max_iter: int = MAX_ITER) -> float:
    """Euclidean operator norm by power iteration on ``M^T M``."""
    a = _as_array(m)
    if not np.any(a):
        return 0.0
    g = a.T @ a
    x = np.ones(a.shape[1]) / math.sqrt(a.shape[1])
    x = x + 1e-3 * np.arange(a.shape[1])  # avoid starting orthogonal to the top singular vector
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        y = g @ x
        new = float(np.linalg.norm(y))
        if new == 0:
            return float(np.linalg.norm(a, 2))
        x = y / new
        if abs(new - lam) <= tol * new:
            return math.sqrt(new)
        lam = new
    raise NumericError(f"power iteration did not converge in {max_iter} steps")


def multiplier_matrix(m, tol: float = 1e-12) -> np.ndarray:
    """``K = (I - M)^-1 = sum_l M^l``; requires spectral radius below one."""
    a = _as_array(m)
    rho = spectral_radius(a, tol)
    if rho >= 1 - 10 * tol:
        raise SingularMultiplierError(f"spectral radius {rho:.12g} >= 1: the multiplier diverges")
    n = a.shape[0]
    return np.linalg.solve(np.eye(n) - a, np.eye(n))


def neumann_series(m, terms: int) -> np.ndarray:
    """Truncated ``sum_{l=0}^{terms} M^l``."""
    a = _as_array(m)
    total = np.eye(a.shape[0])
    power = np.eye(a.shape[0])
    for _ in range(terms):
        power = power @ a
        total = total + power
    return total


# ------------------------------------------------------------- generation


@dataclass(frozen=True)
class MatrixRecurrenceSpec:
    """Law of the iid pairs ``(A_t, e_t)``.

    ``A_t`` is the base matrix with each entry multiplied by independent
    lognormal noise of log-sd ``jitter_sd``.  In opinion-network mode the
    rows are then rescaled back to the base row sums, so every draw keeps
    the weight invariants.  Cross-asset mode may also scale the whole matrix
    by a draw of ``scale_law`` and replace the diagonal with draws of
    ``diag_laws``.  Inputs come from ``input_laws`` (one law, or one per
    component); with ``coupled`` the input is ``a_ii b_i``.
    """

    base: WeightMatrix
    input_laws: tuple
    jitter_sd: float = 0.0
    scale_law: DistributionSpec | None = None
    diag_laws: tuple | None = None
    coupled: bool = False

    def __post_init__(self):
        n = self.base.size
        object.__setattr__(self, "input_laws", tuple(self.input_laws))
        if len(self.input_laws) not in (1, n):
            raise ConfigurationError(f"need 1 or {n} input laws, got {len(self.input_laws)}")
        if self.jitter_sd < 0:
            raise ConfigurationError("jitter_sd must be nonnegative")
        if self.diag_laws is not None:
            object.__setattr__(self, "diag_laws", tuple(self.diag_laws))
            if len(self.diag_laws) not in (1, n):
                raise ConfigurationError(f"need 1 or {n} diagonal laws")
        if self.mode == "opinion_network":
            if self.diag_laws is not None or self.coupled:
                raise ConfigurationError("diagonal laws and coupled inputs are cross-asset features")
            if self.scale_law is not None:
                lo, hi = dist.support(self.scale_law)
                if lo < 0 or hi > 1:
                    raise ConfigurationError("opinion-network scale_law must lie in [0, 1]")
        if self.coupled and self.diag_laws is None:
            raise ConfigurationError("coupled inputs need diag_laws")

    @property
    def mode(self) -> str:
        return self.base.mode

    @property
    def size(self) -> int:
        return self.base.size

    def draw_matrices(self, gen, count: int) -> np.ndarray:
        n = self.size
        mats = np.broadcast_to(self.base.entries, (count, n, n)).copy()
        if self.jitter_sd > 0:
            mats *= np.exp(self.jitter_sd * gen.standard_normal((count, n, n)))
            if self.mode == "opinion_network":
                target = self.base.entries.sum(axis=1)
                rows = mats.sum(axis=2)
                scale = np.divide(target, rows, out=np.zeros_like(rows), where=rows > 0)
                mats *= scale[:, :, None]
        if self.scale_law is not None:
            mats *= dist.draw(self.scale_law, gen, count)[:, None, None]
        if self.diag_laws is not None:
            idx = np.arange(n)
            laws = self.diag_laws if len(self.diag_laws) == n else self.diag_laws * n
            for i, law in enumerate(laws):
                mats[:, idx[i], idx[i]] = dist.draw(law, gen, count)
        return mats

    def draw_inputs(self, gen, count: int, mats=None) -> np.ndarray:
        n = self.size
        laws = self.input_laws if len(self.input_laws) == n else self.input_laws * n
        e = np.column_stack([dist.draw(law, gen, count) for law in laws])
        if self.coupled:
            e = e * np.diagonal(mats, axis1=1, axis2=2)
        return e


def diagonal_spec(a_law: DistributionSpec, input_law: DistributionSpec, size: int = 2) -> MatrixRecurrenceSpec:
    """``A_t = a_t I``: every component is the scalar recurrence with shared ``a_t``."""
    base = WeightMatrix(np.eye(size), "cross_asset")
    return MatrixRecurrenceSpec(base, (input_law,), scale_law=a_law)


def contraction_check(spec: MatrixRecurrenceSpec, samples: int = 2000, rng=None):
    """Smallest ``E ||A||^delta`` over a grid of ``delta``; below one means contractive."""
    gen = dist._gen(rng if rng is not None else RngState(0, 2**62))
    mats = spec.draw_matrices(gen, samples)
    norms = np.linalg.norm(mats, ord=2, axis=(1, 2))
    deltas = np.linspace(0.05, 2.0, 40)
    with np.errstate(divide="ignore"):
        vals = np.array([np.mean(norms**d) for d in deltas])
    i = int(np.argmin(vals))
    return float(deltas[i]), float(vals[i])


# --------------------------------------------------------------- simulation


@dataclass(frozen=True)
class VectorPath:
    components: np.ndarray
    burn_in_dropped: int
    seed: dict

    @property
    def average(self) -> np.ndarray:
        return self.components.mean(axis=1)

    def columns(self) -> dict:
        cols = {f"x{i}": self.components[:, i] for i in range(self.components.shape[1])}
        cols["avg"] = self.average
        return cols

    def to_csv(self, path) -> None:
        write_csv(path, self.columns())


CHUNK_ENTRIES = 1 << 22


def simulate_vector_path(spec: MatrixRecurrenceSpec, length: int, burn_in: int = 10_000,
                         rng: RngState | None = None, x0=None, check: bool = True) -> VectorPath:
    """Simulate ``x_t = A_t x_{t-1} + e_t`` and keep the post-burn-in part."""
    if length <= 0:
        raise ValueError("length must be positive")
    rng = rng if rng is not None else RngState()
    gen = rng.generator if isinstance(rng, RngState) else dist._gen(rng)
    n = spec.size
    if check:
        delta, value = contraction_check(spec)
        if value >= 1:
            warnings.warn(f"E||A||^delta >= 1 on the whole grid (best {value:.4g} at "
                          f"delta={delta:.3g}); no stationary regime is guaranteed",
                          RuntimeWarning, stacklevel=2)
    total = burn_in + length
    out = np.empty((total, n))
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    chunk = max(1, CHUNK_ENTRIES // (n * n + n))
    start = 0
    while start < total:
        m = min(chunk, total - start)
        mats = spec.draw_matrices(gen, m)
        e = spec.draw_inputs(gen, m, mats)
        block = vector_steps(mats, e, x)
        if not np.all(np.isfinite(block)):
            step = start + int(np.flatnonzero(~np.all(np.isfinite(block), axis=1))[0])
            raise NonstationaryError(f"vector recurrence overflowed at step {step}")
        out[start:start + m] = block
        x = block[-1].copy()
        start += m
    desc = rng.descriptor() if isinstance(rng, RngState) else {}
    return VectorPath(out[burn_in:], burn_in, desc)


# ---------------------------------------------------------------- exponent


@dataclass(frozen=True)
class MatrixExponent:
    root: float | None
    root_half_horizon: float | None
    converged: bool
    horizon: int
    particles: int

    def to_json(self):
        return {"root": self.root, "root_half_horizon": self.root_half_horizon,
                "converged": self.converged, "horizon": self.horizon,
                "particles": self.particles}


class _GrowthRate:
    """Particle estimate of ``(1/t) ln E ||A_t ... A_1 x||^mu``.

    Each particle carries a unit vector.  At every step it is multiplied by
    its own pre-drawn matrix, weighted by ``||A x||^mu`` and renormalised;
    the mean weight is the step's growth factor, and particles are
    resampled in proportion to their weights (systematic resampling).  The
    product of growth factors is an unbiased estimate of the moment, and
    resampling keeps the rare large products that dominate it represented.
    All matrices and resampling uniforms are fixed up front, so the curve
    in ``mu`` uses common random numbers.
    """

    def __init__(self, spec, particles, horizon, gen):
        self.mats = spec.draw_matrices(gen, horizon * particles).reshape(
            horizon, particles, spec.size, spec.size)
        self.uniforms = gen.random(horizon)
        self.particles = particles

    def __call__(self, mu, horizon=None):
        steps = self.mats.shape[0] if horizon is None else horizon
        m = self.particles
        n = self.mats.shape[2]
        x = np.full((m, n), 1.0 / math.sqrt(n))
        total = 0.0
        for t in range(steps):
            y = np.einsum("pij,pj->pi", self.mats[t], x)
            norms = np.linalg.norm(y, axis=1)
            alive = norms > 0
            if not np.any(alive):
                return -math.inf
            logw = np.full(m, -math.inf)
            logw[alive] = mu * np.log(norms[alive])
            top = logw.max()
            w = np.exp(logw - top)
            total += top + math.log(w.mean())
            cdf = np.cumsum(w)
            cdf /= cdf[-1]
            picks = np.searchsorted(cdf, (self.uniforms[t] + np.arange(m)) / m)
            picks = np.minimum(picks, m - 1)
            x = y[picks] / norms[picks, None]
        if not math.isfinite(total):
            raise NumericError(f"growth rate is not finite at mu={mu}")
        return total / steps


def matrix_exponent_report(spec: MatrixRecurrenceSpec, mu_max: float = 10.0, tol: float = 1e-3,
                           mc_budget: int = 2000, horizon: int = 50, rng=None) -> MatrixExponent:
    """Root of the matrix moment equation at ``horizon`` and ``horizon / 2``.

    ``converged`` is true when both roots exist and differ by less than 5 %,
    or when neither exists.
    """
    if mu_max <= 0:
        raise ValueError("mu_max must be positive")
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    gen = dist._gen(rng if rng is not None else RngState())
    rate = _GrowthRate(spec, int(mc_budget), int(horizon), gen)
    full = solve_moment_equation(lambda mu: rate(mu), mu_max, tol, strict=False)
    half = solve_moment_equation(lambda mu: rate(mu, horizon // 2), mu_max, tol, strict=False)
    if full is None or half is None:
        converged = full is None and half is None
    else:
        converged = abs(full - half) < 0.05 * full
    return MatrixExponent(full, half, converged, int(horizon), int(mc_budget))


def estimate_matrix_exponent(spec: MatrixRecurrenceSpec, mu_max: float = 10.0, tol: float = 1e-3,
                             mc_budget: int = 2000, horizon: int = 50, rng=None):
    """Tail exponent of the matrix recurrence, or ``None`` when no root exists."""
    rep = matrix_exponent_report(spec, mu_max, tol, mc_budget, horizon, rng)
    if not rep.converged:
        warnings.warn(f"matrix exponent not settled: {rep.root_half_horizon} at horizon "
                      f"{horizon // 2} vs {rep.root} at {horizon}", RuntimeWarning, stacklevel=2)
    return rep.root


def average_opinion_tail(path: VectorPath, k: int | None = None) -> TailEstimate:
    """Hill estimate of the tail of ``|avg|``; ``power_law`` reflects the stability band."""
    band = hill_band(np.abs(path.average), k)
    c = band.central
    return TailEstimate(c.exponent, c.method, c.order_count, c.std_error, c.x_min,
                        power_law=not band.mild_suspected, constant=c.constant)


def component_tails(path: VectorPath, k: int | None = None) -> list:
    """Hill stability band of every component."""
    return [hill_band(np.abs(path.components[:, i]), k) for i in range(path.components.shape[1])]
