"""Agent-based speculative market: demands, price formation and simulation.

Each period ``N_t`` traders submit demands ``q_it = alpha r^e_it + gamma phi_it``
where ``phi_it = (F_it - P_t) / P_t`` is the perceived value gap.  Prices form
either by market clearing (aggregate demand is zero) or by linear price
impact ``r_t = beta q_t / L_t``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from . import distributions as dist
from .distributions import DistributionSpec, RngState
from .errors import (ConfigurationError, FeedbackExplosionError, InsufficientDataError,
                     LiquidityError, PriceCollapseError)
from .kesten import KestenReport, solve_moment_equation
from .series_io import write_csv
from .tails import HillBand, hill_band

PRICE_RULES = ("clearing", "impact")
EXPECTATION_MODELS = ("prediction_error", "confidence")
DEMAND_SIGNS = ("speculative", "law_of_demand")
DEFAULT_EXACT_LIMIT = 1000
BLOCK_INDIVIDUALS = 1 << 21


@dataclass(frozen=True)
class MarketConfig:
    """Parameters of the trader population and of price formation.

    ``expectation_law`` is the law of the prediction error ``eps_it`` or of
    the confidence term ``theta_it`` depending on ``expectation_model``.
    Traders with ``N_t`` above ``exact_limit`` are aggregated: their mean
    expectation and guess are drawn from the normal law the central limit
    theorem gives (exact for normal laws), and volume is scaled up from a
    subsample of ``exact_limit`` traders.  Infinite-variance laws are always
    drawn trader by trader.
    """

    alpha: float = 1.0
    gamma: float = 0.0
    beta: float = 0.5
    price_rule: str = "clearing"
    expectation_model: str = "prediction_error"
    expectation_law: DistributionSpec = field(default_factory=lambda: dist.constant(0.0))
    fundamental_value: float = 100.0
    guess_law: DistributionSpec | None = None
    n_law: DistributionSpec = field(default_factory=lambda: dist.constant(100))
    l_law: DistributionSpec | None = None
    p0: float = 100.0
    demand_sign: str = "speculative"
    r0: float = 0.0
    exact_limit: int = DEFAULT_EXACT_LIMIT

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
        if not self.gamma >= 0:
            raise ConfigurationError(f"gamma must be nonnegative, got {self.gamma}")
        if not 0 < self.beta < 1:
            raise ConfigurationError(f"beta must lie in (0, 1), got {self.beta}")
        if self.price_rule not in PRICE_RULES:
            raise ConfigurationError(f"price_rule must be one of {PRICE_RULES}")
        if self.expectation_model not in EXPECTATION_MODELS:
            raise ConfigurationError(f"expectation_model must be one of {EXPECTATION_MODELS}")
        if self.demand_sign not in DEMAND_SIGNS:
            raise ConfigurationError(f"demand_sign must be one of {DEMAND_SIGNS}")
        if not self.fundamental_value > 0:
            raise ConfigurationError("fundamental_value must be positive")
        if not self.p0 > 0:
            raise ConfigurationError("p0 must be positive")
        if self.exact_limit < 1:
            raise ConfigurationError("exact_limit must be at least 1")
        if self.price_rule == "impact":
            if self.l_law is None:
                raise ConfigurationError("impact pricing needs l_law")
            if dist.support(self.l_law)[0] <= 0:
                raise LiquidityError(f"l_law {self.l_law} is not bounded away from zero")
        if (self.price_rule == "clearing" and self.demand_sign == "speculative"
                and self.expectation_model == "confidence"):
            raise ConfigurationError(
                "the confidence model does not involve the current return, so demand "
                "cannot clear; use price_rule = impact"
            )

    @property
    def rho(self) -> float:
        return self.gamma / self.alpha

    @property
    def guesses(self) -> DistributionSpec:
        return self.guess_law if self.guess_law is not None else dist.constant(self.fundamental_value)

    @property
    def lagged(self) -> bool:
        return (self.price_rule == "impact" and self.demand_sign == "speculative"
                and self.expectation_model == "confidence")

    def mode(self) -> int:
        if self.demand_sign == "law_of_demand":
            return K.CLEARING_LAW_OF_DEMAND if self.price_rule == "clearing" else K.IMPACT_LAW_OF_DEMAND
        if self.price_rule == "clearing":
            return K.CLEARING
        return K.IMPACT_LAGGED if self.expectation_model == "confidence" else K.IMPACT_INSTANT


# ---------------------------------------------------------- single period


def individual_demand(expected_return: float, value_gap: float, cfg: MarketConfig) -> float:
    """One trader's excess demand.

    Speculative traders demand ``alpha r^e + gamma phi``.  Under the law of
    demand the first argument is the realized return and the demand is
    ``gamma phi - alpha r``.
    """
    if cfg.demand_sign == "law_of_demand":
        return cfg.gamma * value_gap - cfg.alpha * expected_return
    return cfg.alpha * expected_return + cfg.gamma * value_gap


@dataclass(frozen=True)
class AggregateDemand:
    q: float
    b: float
    v: float


def _individual_terms(r, cfg, x, phi):
    """Per-trader demands given the reference return ``r``."""
    a, g = cfg.alpha, cfg.gamma
    if cfg.demand_sign == "law_of_demand":
        return g * phi - a * r
    if cfg.expectation_model == "confidence":
        return a * (r + x) + g * phi
    if cfg.price_rule == "clearing":
        return a * (r - x) + g * phi
    return a * (r + x) + g * phi


def aggregate_excess_demand(r: float, cfg: MarketConfig, n: int, rng=None,
                            price: float | None = None, terms=None, guesses=None) -> AggregateDemand:
    """Sum of ``n`` individual demands at reference return ``r``.

    ``r`` is the current return for the prediction-error model and the law
    of demand, and the previous return for the confidence model.  The
    prediction error enters as ``r^e = r - eps`` under clearing and as
    ``r^e = r + eps`` under price impact.  ``terms`` and ``guesses`` fix the
    individual expectation terms and value guesses instead of drawing them.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    gen = dist._gen(rng)
    price = cfg.p0 if price is None else float(price)
    x = np.asarray(terms, dtype=float) if terms is not None else dist.draw(cfg.expectation_law, gen, n)
    if cfg.gamma != 0:
        f = np.asarray(guesses, dtype=float) if guesses is not None else dist.draw(cfg.guesses, gen, n)
        phi = (f - price) / price
    else:
        phi = np.zeros(n)
    if x.size != n or phi.size != n:
        raise ValueError("terms and guesses must have n entries")
    q_i = _individual_terms(r, cfg, x, phi)
    phibar = float(phi.mean())
    b = cfg.rho * phibar if cfg.demand_sign == "law_of_demand" else float(x.mean()) + cfg.rho * phibar
    return AggregateDemand(float(q_i.sum()), b, float(np.abs(q_i).sum()))


def clearing_return(eps_bar: float, phi_bar: float, rho: float) -> float:
    """Return at which aggregate demand vanishes: ``eps_bar - rho phi_bar``."""
    return eps_bar - rho * phi_bar


def impact_return(q: float, liquidity: float, beta: float) -> float:
    """Linear price impact ``beta q / L``."""
    if not liquidity > 0:
        raise LiquidityError(f"liquidity must be positive, got {liquidity}")
    if not 0 < beta < 1:
        raise ConfigurationError(f"beta must lie in (0, 1), got {beta}")
    return beta * q / liquidity


# -------------------------------------------------------------- simulation


@dataclass(frozen=True)
class MarketPath:
    """Simulated market series; ``prices`` has one more entry than ``r``."""

    prices: np.ndarray
    r: np.ndarray
    q: np.ndarray
    N: np.ndarray
    L: np.ndarray
    v: np.ndarray
    b: np.ndarray
    seed: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("prices", "r", "q", "N", "L", "v", "b"):
            getattr(self, name).setflags(write=False)

    @property
    def P(self) -> np.ndarray:
        return self.prices[:-1]

    @property
    def n(self) -> np.ndarray:
        return self.N

    def __len__(self):
        return len(self.r)

    def columns(self) -> dict:
        return {"P": self.P, "r": self.r, "q": self.q, "N": self.N, "L": self.L,
                "v": self.v, "b": self.b}

    def to_csv(self, path) -> None:
        write_csv(path, self.columns())


def feedback_mean(cfg: MarketConfig, mc_budget=dist.DEFAULT_MC_BUDGET, rng=None) -> float:
    """``E a = alpha beta E N E(1/L)`` for independent ``N`` and ``L``."""
    if cfg.l_law is None:
        raise ConfigurationError("feedback is only defined under price impact")
    counts = dist.draw_counts(cfg.n_law, rng, mc_budget)
    inv_l = dist.inverse_moment(cfg.l_law, 1.0, mc_budget, rng).value
    return cfg.alpha * cfg.beta * float(counts.mean()) * inv_l


def feedback_log_moment_curve(cfg: MarketConfig, mc_budget=dist.DEFAULT_MC_BUDGET, rng=None):
    """``mu -> ln E a^mu`` for ``a = alpha beta N / L``.

    ``E a^mu`` factors into ``(alpha beta)^mu E N^mu E L^-mu``.  With
    ``N = max(ceil(X), 1)`` the count moment is the closed form of ``E X^mu``
    times the ratio ``mean(N^mu) / mean(X^mu)`` on one set of draws: the
    ratio is close to one and has little variance even when the moments
    themselves are heavy tailed.  Without a closed form, the plain sample
    mean over fixed draws is used.
    """
    if cfg.l_law is None:
        raise ConfigurationError("feedback is only defined under price impact")
    gen = dist._gen(rng)
    x = dist.draw(cfg.n_law, gen, int(mc_budget))
    counts = np.maximum(np.ceil(x), 1.0)
    log_n = np.log(counts)
    x_pos = x > 0
    log_x = np.log(np.where(x_pos, x, 1.0))
    closed_x = dist._closed_abs_moment(cfg.n_law, 1.0) is not None and bool(np.all(x_pos))
    if dist._closed_inverse_moment(cfg.l_law, 1.0) is None:
        log_l = np.log(dist.draw(cfg.l_law, gen, int(mc_budget)))
    else:
        log_l = None
    log_ab = math.log(cfg.alpha * cfg.beta)

    def f(mu):
        if mu == 0:
            return 0.0
        if not dist.has_finite_moment(cfg.n_law, mu):
            return math.inf
        if closed_x:
            exact = dist.moment(cfg.n_law, mu).value
            ratio = logsumexp(mu * log_n) - logsumexp(mu * log_x)
            count_part = math.log(exact) + ratio
        else:
            count_part = logsumexp(mu * log_n) - math.log(log_n.size)
        if log_l is None:
            inv = dist.inverse_moment(cfg.l_law, mu).value
            if math.isinf(inv):
                return math.inf
            l_part = math.log(inv)
        else:
            l_part = logsumexp(-mu * log_l) - math.log(log_l.size)
        return mu * log_ab + count_part + l_part

    return f


def feedback_exponent(cfg: MarketConfig, mu_max=10.0, tol=1e-6,
                      mc_budget=dist.DEFAULT_MC_BUDGET, rng=None):
    """Root of ``E (alpha beta N / L)^mu = 1``, or ``None``."""
    return solve_moment_equation(feedback_log_moment_curve(cfg, mc_budget, rng), mu_max, tol)


def check_market_kesten(cfg: MarketConfig, mu: float | None = None,
                        mc_budget=dist.DEFAULT_MC_BUDGET, rng=None, tol=1e-3) -> KestenReport:
    """Kesten conditions for ``a = alpha beta N / L`` with input ``a b``.

    Condition (i) uses the feedback moment curve; (ii) and (iii) hold when
    ``N`` has a finite moment of order ``mu`` (``1/L`` is bounded); the
    continuous liquidity law makes ``ln a`` nonarithmetic.  ``b`` is an
    average of finite-variance terms, or of the expectation law itself.
    """
    if cfg.price_rule != "impact":
        raise ConfigurationError("Kesten conditions concern impact pricing")
    gen = dist._gen(rng)
    curve = feedback_log_moment_curve(cfg, mc_budget, gen)
    solved = solve_moment_equation(curve, 10.0, 1e-6)
    notes = []
    if mu is None:
        if solved is None:
            raise ConfigurationError("no exponent root; pass mu explicitly")
        mu = solved
    value = math.exp(curve(mu)) if math.isfinite(curve(mu)) else math.inf
    cond_i = "pass" if abs(value - 1) <= tol else "fail"
    finite_n = dist.has_finite_moment(cfg.n_law, mu)
    finite_b = dist.has_finite_moment(cfg.expectation_law, mu)
    lattice = dist.is_lattice(cfg.n_law) and dist.is_lattice(cfg.l_law)
    counts = dist.draw_counts(cfg.n_law, gen, mc_budget)
    log_a = (math.log(cfg.alpha * cfg.beta) + np.log(counts)
             - np.log(dist.draw(cfg.l_law, gen, mc_budget)))
    mean, se = float(log_a.mean()), float(log_a.std(ddof=1) / math.sqrt(log_a.size))
    stat = "stationary" if mean + 3 * se < 0 else ("nonstationary" if mean - 3 * se > 0
                                                    else "undetermined")
    if not cfg.lagged:
        notes.append("instantaneous feedback: the tail law is that of a b / (1 - a)")
    if solved is not None and cond_i == "fail":
        notes.append(f"the moment equation is solved at mu = {solved:.6g}")
    return KestenReport(
        mu=float(mu), mu_root=float(mu) if cond_i == "pass" else None,
        condition_i=cond_i,
        condition_ii="pass" if finite_n else "fail",
        condition_iii="pass" if finite_n and finite_b else "fail",
        condition_iv="fail" if lattice else "pass",
        stationarity=stat,
        degenerate=dist.is_degenerate(cfg.n_law) and dist.is_degenerate(cfg.l_law),
        moment_at_mu=value, solved_root=solved, notes=notes,
    )


def _block_size(cfg: MarketConfig) -> int:
    mean_n = dist.mean_var(cfg.n_law)[0] if dist.has_finite_moment(cfg.n_law, 1) else math.inf
    per_step = max(1.0, min(float(cfg.exact_limit), mean_n + 1.0))
    return int(min(65536, max(64, BLOCK_INDIVIDUALS // per_step)))


def _step_means(law: DistributionSpec, counts, m, gen, flat):
    """Per-step means of ``counts[t]`` draws from ``law``.

    ``flat`` holds the first ``m[t]`` draws of every step.  Steps with more
    traders than drawn get the remainder from a normal law with matching
    mean and variance, or, for infinite-variance laws, from exact draws.
    """
    starts = np.concatenate(([0], np.cumsum(m)[:-1]))
    sums = np.add.reduceat(flat, starts) if flat.size else np.zeros(len(m))
    rest = counts - m
    big = np.flatnonzero(rest > 0)
    if big.size:
        if dist.has_finite_moment(law, 2):
            mean, var = dist.mean_var(law)
            extra = rest[big] * mean + np.sqrt(rest[big] * var) * gen.standard_normal(big.size)
            sums[big] += extra
        else:
            for i in big:
                sums[i] += dist.draw(law, gen, int(rest[i])).sum()
    return sums / counts


def simulate_market(cfg: MarketConfig, length: int, rng: RngState | None = None,
                    check: bool = True) -> MarketPath:
    """Simulate ``length`` periods of the market.

    Instantaneous price impact raises :class:`FeedbackExplosionError` at the
    first period with ``a_t = alpha beta N_t / L_t >= 1``.  A return of
    -100 % or less aborts with :class:`PriceCollapseError`.
    """
    if length <= 0:
        raise ValueError("length must be positive")
    rng = rng if rng is not None else RngState()
    gen = rng.generator if isinstance(rng, RngState) else dist._gen(rng)
    if check and cfg.price_rule == "impact" and cfg.demand_sign == "speculative":
        ea = feedback_mean(cfg, 10**5, RngState(0, 2**63))
        if ea >= 1:
            warnings.warn(f"E a = {ea:.4g} >= 1: feedback is explosive on average",
                          RuntimeWarning, stacklevel=2)
    mode = cfg.mode()
    block = _block_size(cfg)
    uses_x = cfg.demand_sign == "speculative"
    uses_f = cfg.gamma != 0
    out = {k: np.empty(length) for k in ("r", "q", "L", "v", "b")}
    out_n = np.empty(length, dtype=np.int64)
    prices = np.empty(length + 1)
    prices[0] = cfg.p0
    r_prev, p = float(cfg.r0), float(cfg.p0)
    start = 0
    while start < length:
        m_steps = min(block, length - start)
        counts = dist.draw_counts(cfg.n_law, gen, m_steps)
        liq = dist.draw(cfg.l_law, gen, m_steps) if cfg.l_law is not None else np.ones(m_steps)
        if cfg.l_law is not None and np.any(liq <= 0):
            raise LiquidityError("nonpositive liquidity drawn")
        sub = np.minimum(counts, cfg.exact_limit)
        total = int(sub.sum())
        x = dist.draw(cfg.expectation_law, gen, total) if uses_x else np.zeros(total)
        f = dist.draw(cfg.guesses, gen, total) if uses_f else np.zeros(total)
        xbar = _step_means(cfg.expectation_law, counts, sub, gen, x) if uses_x else np.zeros(m_steps)
        fbar = _step_means(cfg.guesses, counts, sub, gen, f) if uses_f else np.zeros(m_steps)
        if mode == K.IMPACT_INSTANT:
            a = cfg.alpha * cfg.beta * counts / liq
            bad = np.flatnonzero(a >= 1)
            if bad.size:
                step = start + int(bad[0])
                raise FeedbackExplosionError(
                    f"feedback a = {a[bad[0]]:.6g} >= 1 at step {step}", step=step)
        r, q, phibar, pr, bad = K.market_steps(mode, counts.astype(float), liq, xbar, fbar,
                                               cfg.alpha, cfg.beta, cfg.gamma, r_prev, p)
        if bad >= 0:
            step = start + int(bad)
            raise PriceCollapseError(f"return {r[bad]:.6g} <= -1 at step {step}", step=step)
        # volume from the drawn traders, scaled up for aggregated steps
        step_of = np.repeat(np.arange(m_steps), sub)
        ref = np.concatenate(([r_prev], r[:-1])) if cfg.lagged else r
        price_at = pr[:-1]
        phi_i = (f - price_at[step_of]) / price_at[step_of] if uses_f else f
        q_i = _individual_terms(ref[step_of], cfg, x, phi_i)
        starts = np.concatenate(([0], np.cumsum(sub)[:-1]))
        v = np.add.reduceat(np.abs(q_i), starts) * (counts / sub)
        b = cfg.rho * phibar if not uses_x else xbar + cfg.rho * phibar
        sl = slice(start, start + m_steps)
        out["r"][sl], out["q"][sl], out["L"][sl], out["v"][sl], out["b"][sl] = r, q, liq, v, b
        out_n[sl] = counts
        prices[start + 1:start + m_steps + 1] = pr[1:]
        r_prev, p = float(r[-1]), float(pr[-1])
        start += m_steps
    desc = rng.descriptor() if isinstance(rng, RngState) else {}
    return MarketPath(prices, out["r"], out["q"], out_n, out["L"], out["v"], out["b"], desc)


# ---------------------------------------------------- deterministic paths


def bubble_path(rho: float, b0: float, length: int) -> np.ndarray:
    """``B_t = (1 + rho)^t b0`` for ``t = 0 .. length``."""
    if length < 1:
        raise ValueError("length must be at least 1")
    t = np.arange(length + 1, dtype=float)
    return b0 * np.power(1.0 + rho, t)


def negative_feedback_path(rho: float, f: float, p0: float, length: int) -> np.ndarray:
    """Prices under the law of demand: ``P_{t+1} = (1 - rho) P_t + rho f``.

    Entry ``t`` is ``P_t`` for ``t = 0 .. length``; the gap to ``f`` scales
    by ``1 - rho`` each step, so the path converges iff ``|1 - rho| < 1``.
    """
    if length < 1:
        raise ValueError("length must be at least 1")
    if not rho > 0 or not f > 0:
        raise ValueError("rho and f must be positive")
    out = np.empty(length + 1)
    out[0] = p0
    for t in range(length):
        out[t + 1] = (1.0 - rho) * out[t] + rho * f
    return out


def converges(rho: float) -> bool:
    """Whether the negative-feedback path converges to the intrinsic value."""
    return abs(1.0 - rho) < 1.0


# ------------------------------------------------------------------ volume


@dataclass(frozen=True)
class VolumeReport:
    q_band: HillBand
    v_band: HillBand | None
    ratio: float | None
    ratio_std_error: float | None
    q_power_law: bool
    consistent: bool

    def to_json(self):
        return {
            "mu_q": self.q_band.central.to_json(),
            "mu_v": None if self.v_band is None else self.v_band.central.to_json(),
            "ratio": self.ratio,
            "ratio_stderr": self.ratio_std_error,
            "q_power_law": self.q_power_law,
            "consistent": self.consistent,
        }


MIN_VOLUME_SAMPLE = 10_000


def volume_imbalance_relation(v_samples, q_samples) -> VolumeReport:
    """Compare the tails of excess demand and volume.

    If ``q`` behaves like ``nu sqrt(v)`` with mild ``nu`` then
    ``mu_q = 2 mu_v``.  The verdict is consistent when the Hill exponent
    ratio is within two standard errors (delta method) of 2.
    """
    v = np.abs(np.asarray(v_samples, dtype=float))
    q = np.abs(np.asarray(q_samples, dtype=float))
    if v.shape != q.shape:
        raise ValueError("v and q must be paired samples")
    keep = (v > 0) | (q > 0)
    if np.count_nonzero(keep) < MIN_VOLUME_SAMPLE:
        raise InsufficientDataError(f"need at least {MIN_VOLUME_SAMPLE} nonzero pairs")
    qb = hill_band(q[keep])
    try:
        vb = hill_band(v[keep])
    except InsufficientDataError:
        vb = None
    q_pl = not qb.mild_suspected
    if vb is None or vb.mild_suspected:
        return VolumeReport(qb, vb, None, None, q_pl, False)
    mq, mv = qb.central, vb.central
    ratio = mq.exponent / mv.exponent
    se = ratio * math.hypot(qb.central_se / mq.exponent, vb.central_se / mv.exponent)
    return VolumeReport(qb, vb, ratio, se, q_pl, q_pl and abs(ratio - 2.0) <= 2 * se)
