"""Executable versions of the Kesten / Goldie / Grincevicius results.

The central routine solves ``E|a|^mu = 1`` for the tail exponent ``mu`` of
the stationary solution of ``r = a r + e``.  Everything is phrased in terms
of the log-moment function ``f(mu) = ln E|a|^mu``, which is convex with
``f(0) = 0``; a positive root exists when ``f'(0) = E ln|a| < 0`` and ``f``
eventually turns positive.
"""

from __future__ import annotations

import math
from decimal import Decimal
from dataclasses import dataclass, field, asdict

import numpy as np

from . import distributions as dist
from ._exact import dec, one_minus_reciprocal
from .distributions import DistributionSpec
from .errors import NumericError, PreconditionError, TheoremInapplicableError

DEFAULT_MU_MAX = 10.0
DEFAULT_TOL = 1e-8
GRID_POINTS = 200


def log_moment_curve(a_law: DistributionSpec, mc_budget=dist.DEFAULT_MC_BUDGET, rng=None,
                     force_mc=False):
    """``mu -> ln E|a|^mu``, analytic when possible.

    Without a closed form the curve is a sample average over one fixed set of
    ``mc_budget`` draws, so every ``mu`` sees the same random numbers.
    Orders at which the moment is known to diverge map to ``+inf``.
    """
    if not force_mc and dist._closed_abs_moment(a_law, 1.0) is not None:
        def f(mu):
            m = dist.moment(a_law, mu)
            if m.divergent or math.isinf(m.value):
                return math.inf
            return -math.inf if m.value == 0 else math.log(m.value)
        f.closed_form = True
        return f
    draws = np.abs(dist.draw(a_law, rng, int(mc_budget)))
    with np.errstate(divide="ignore"):
        base = dist.log_moment_function(np.log(draws))

    def g(mu):
        if not dist.has_finite_moment(a_law, mu):
            return math.inf
        return base(mu)

    g.closed_form = False
    return g


def solve_moment_equation(f, mu_max=DEFAULT_MU_MAX, tol=DEFAULT_TOL, strict=True):
    """Positive root of ``f(mu) = 0`` for a convex log-moment curve.

    Scans ``(0, mu_max]`` for the first sign change, then bisects.  Returns
    ``None`` when ``f`` stays nonpositive, or when the sign change is a jump
    to a divergent moment rather than a genuine crossing.  With ``strict``
    the root must satisfy ``|exp(f) - 1| < tol``; curves estimated with
    resampling can have tiny jumps, so they pass ``strict=False`` and accept
    the located sign change.
    """
    if mu_max <= 0 or tol <= 0:
        raise ValueError("mu_max and tol must be positive")
    grid = np.linspace(0.0, mu_max, GRID_POINTS + 1)[1:]
    lo, hi = None, None
    prev = 0.0
    for mu in grid:
        val = f(float(mu))
        if math.isnan(val):
            raise NumericError(f"moment curve is undefined at mu={mu}")
        if val > 0:
            lo, hi = prev, float(mu)
            break
        prev = float(mu)
    if hi is None:
        return None
    if lo == 0.0:
        lo = hi * 1e-9
        if f(lo) > 0:
            raise NumericError("moment curve is positive arbitrarily close to zero")
    for _ in range(200):
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    f_lo, f_hi = f(lo), f(hi)
    if math.isinf(f_hi) and math.expm1(f_lo) < -tol:
        return None
    root = lo if abs(f_lo) <= abs(f_hi) else hi
    if strict and abs(math.expm1(f(root))) >= tol:
        raise NumericError(
            f"bisection converged to mu={root} but |E(a^mu) - 1| = {abs(math.expm1(f(root)))}"
        )
    return root


def solve_exponent(a_law: DistributionSpec, mu_max=DEFAULT_MU_MAX, tol=DEFAULT_TOL,
                   mc_budget=dist.DEFAULT_MC_BUDGET, rng=None, force_mc=False):
    """Tail exponent ``mu`` with ``E|a|^mu = 1``, or ``None``.

    Raises :class:`PreconditionError` when ``E ln|a| >= 0``: there is then no
    stationary regime to speak of.  ``force_mc`` skips closed forms even when
    the family has them.
    """
    elog = dist.log_moment(a_law, mc_budget, rng)
    if elog.value >= 0:
        raise PreconditionError(
            f"E ln|a| = {elog.value:.6g} >= 0: no stationary solution exists"
        )
    if not dist.prob_abs_exceeds_one(a_law):
        return None
    curve = log_moment_curve(a_law, mc_budget, rng, force_mc)
    return solve_moment_equation(curve, mu_max, tol)


# ------------------------------------------------------------ stationarity


@dataclass(frozen=True)
class StationarityReport:
    verdict: str
    mean_log_a: float
    interval: tuple[float, float]
    log_input_finite: bool
    closed_form: bool

    def to_json(self):
        d = asdict(self)
        d["interval"] = list(self.interval)
        return _jsonable(d)


def stationarity_report(a_law: DistributionSpec, e_law: DistributionSpec | None = None,
                        mc_budget=dist.DEFAULT_MC_BUDGET, rng=None, z=3.0) -> StationarityReport:
    """Condition check for a unique stationary solution of ``r = a r + e``.

    Requires ``E ln|a| < 0`` and ``E ln+|e| < inf``, or an atom of ``a`` at
    zero.  Monte Carlo estimates give ``"undetermined"`` when their
    ``z``-sigma interval contains zero.
    """
    m = dist.log_moment(a_law, mc_budget, rng)
    # every supported family has a finite logarithmic moment
    log_input_finite = True
    if m.value == -math.inf:
        return StationarityReport("stationary", m.value, (m.value, m.value), log_input_finite,
                                  m.closed_form)
    lo, hi = m.value - z * m.std_error, m.value + z * m.std_error
    if not log_input_finite:
        verdict = "nonstationary"
    elif m.closed_form:
        verdict = "stationary" if m.value < 0 else "nonstationary"
    elif hi < 0:
        verdict = "stationary"
    elif lo > 0:
        verdict = "nonstationary"
    else:
        verdict = "undetermined"
    return StationarityReport(verdict, m.value, (lo, hi), log_input_finite, m.closed_form)


# ------------------------------------------------------------ Kesten report


@dataclass
class KestenReport:
    mu: float
    mu_root: float | None
    condition_i: str
    condition_ii: str
    condition_iii: str
    condition_iv: str
    stationarity: str
    degenerate: bool
    moment_at_mu: float
    solved_root: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def all_pass(self) -> bool:
        conds = (self.condition_i, self.condition_ii, self.condition_iii, self.condition_iv)
        return all(c == "pass" for c in conds) and self.stationarity == "stationary"

    def to_json(self):
        return _jsonable(asdict(self))


def _verdict(ok):
    return "pass" if ok else "fail"


def check_kesten(a_law: DistributionSpec, e_law: DistributionSpec, mu: float | None = None,
                 mc_budget=dist.DEFAULT_MC_BUDGET, rng=None, coupled=False,
                 tol=1e-6) -> KestenReport:
    """Evaluate the hypotheses of the Kesten-Goldie theorem at ``mu``.

    With ``coupled=True``, ``e_law`` is the law of ``b`` and the input is
    ``e = a * b`` with independent factors.  When ``mu`` is omitted the
    solver root is used.
    """
    notes = []
    solved = None
    try:
        solved = solve_exponent(a_law, mc_budget=mc_budget, rng=rng)
    except PreconditionError as exc:
        notes.append(str(exc))
    if mu is None:
        if solved is None:
            raise PreconditionError("no exponent root to check; pass mu explicitly")
        mu = solved
    if mu <= 0:
        raise ValueError("mu must be positive")

    m = dist.moment(a_law, mu, mc_budget, rng)
    if m.divergent:
        cond_i = "fail"
    elif m.closed_form:
        cond_i = _verdict(abs(m.value - 1.0) <= tol)
    else:
        cond_i = _verdict(abs(m.value - 1.0) <= max(tol, 3 * m.std_error))
    cond_ii = _verdict(dist.has_finite_moment(a_law, mu))
    if coupled:
        e_finite = dist.has_finite_moment(a_law, mu) and dist.has_finite_moment(e_law, mu)
    else:
        e_finite = dist.has_finite_moment(e_law, mu)
    cond_iii = _verdict(e_finite)
    lattice = dist.is_lattice(a_law)
    cond_iv = _verdict(not lattice)
    if lattice:
        notes.append(f"ln|a| is lattice valued; jittered({a_law}, 0.01) restores condition (iv)")

    stat = stationarity_report(a_law, None if coupled else e_law, mc_budget, rng).verdict

    if coupled:
        degenerate = (dist.is_degenerate(a_law) and dist.is_degenerate(e_law)) or \
            _is_zero(e_law)
    else:
        degenerate = (dist.is_degenerate(a_law) and dist.is_degenerate(e_law)) or \
            _is_zero(e_law)
    if degenerate:
        notes.append("(1 - a)^-1 e is a nonrandom constant: trivial tail, C = 0")
    if solved is not None and cond_i == "fail":
        notes.append(f"the moment equation is solved at mu = {solved:.6g}")

    return KestenReport(
        mu=float(mu),
        mu_root=float(mu) if cond_i == "pass" else None,
        condition_i=cond_i,
        condition_ii=cond_ii,
        condition_iii=cond_iii,
        condition_iv=cond_iv,
        stationarity=stat,
        degenerate=degenerate,
        moment_at_mu=float(m.value),
        solved_root=solved,
        notes=notes,
    )


def _is_zero(spec):
    return dist.support(spec) == (0.0, 0.0)


# ------------------------------------------------------------- Grincevicius


def tail_ratio(moment_value: float) -> float:
    """Limit of ``P(r > x) / P(e > x)``: ``1 / (1 - E a^mu_e)``."""
    if moment_value >= 1:
        raise TheoremInapplicableError(f"E(a^mu_e) = {moment_value} >= 1")
    return one_minus_reciprocal(moment_value)


def amplification(moment_value: float) -> float:
    """Limit of ``P(r > x) / P(b > x)`` when ``e = a b``."""
    if moment_value >= 1:
        raise TheoremInapplicableError(f"E(a^mu_e) = {moment_value} >= 1")
    return float(dec(moment_value) * Decimal(repr(tail_ratio(moment_value))))


@dataclass(frozen=True)
class GrinceviciusPrediction:
    moment: float
    tail_ratio: float
    amplification: float
    coupled: bool

    @property
    def predicted_ratio(self) -> float:
        """Ratio against the input (``e``), or against ``b`` when coupled."""
        return self.amplification if self.coupled else self.tail_ratio

    def to_json(self):
        return asdict(self)


def grincevicius_predict(a_law: DistributionSpec, mu_e: float, coupled: bool = False,
                         mc_budget=dist.DEFAULT_MC_BUDGET, rng=None) -> GrinceviciusPrediction:
    """Tail amplification when the input is wilder than the feedback."""
    if dist.support(a_law)[0] < 0:
        raise TheoremInapplicableError("the feedback coefficient must be nonnegative")
    m = dist.moment(a_law, mu_e, mc_budget, rng)
    if m.divergent or m.value >= 1:
        raise TheoremInapplicableError(f"E(a^{mu_e}) = {m.value} is not below one")
    return GrinceviciusPrediction(m.value, tail_ratio(m.value), amplification(m.value), coupled)


# --------------------------------------------------------------------- Levy


@dataclass(frozen=True)
class LevyVerdict:
    verdict: str
    note: str


def levy_regime_check(theta_exponent: float) -> LevyVerdict:
    """Whether iid opinions with tail ``theta_exponent`` fit a return tail near 3.

    Independent infinite-variance opinions average to a Levy law, so the
    return exponent would be capped below two.
    """
    if theta_exponent < 2:
        return LevyVerdict("inconsistent",
                           f"opinion exponent {theta_exponent} < 2 forces a return exponent below 2")
    if theta_exponent == 2:
        return LevyVerdict("consistent_with_data",
                           "boundary case: exponent 2 sits on the edge of the Levy regime")
    return LevyVerdict("consistent_with_data", "finite-variance opinions average to a normal impulse")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj
