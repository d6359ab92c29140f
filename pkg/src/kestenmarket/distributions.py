"""Parametric laws for the random inputs of the recurrences and markets.

A :class:`DistributionSpec` is an immutable description such as
``uniform(0, 2)`` or ``jittered(two_point(2, 0.2, 0.5), 0.01)``.  Sampling is
driven by :class:`RngState`, a Philox counter-based stream keyed by
``(seed, stream_id)`` so replicas never share randomness.

Moments are always absolute moments ``E|X|^p``; for the nonnegative laws used
as feedback coefficients this is the same as ``E(X^p)``.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError

KINDS = {
    "constant": 1,
    "uniform": 2,
    "normal": 2,
    "lognormal": 2,
    "pareto": 2,
    "two_point": 3,
    "scaled": 2,
    "jittered": 2,
}
WRAPPERS = ("scaled", "jittered")

DEFAULT_MC_BUDGET = 10**6
MAX_SEED = 2**64


@dataclass(frozen=True)
class DistributionSpec:
    """Immutable description of a scalar law.

    ``params`` holds the numeric parameters in the order of the textual
    grammar; wrappers (``scaled``, ``jittered``) keep their inner law in
    ``base`` and their own number in ``params[0]``.
    """

    kind: str
    params: tuple[float, ...] = ()
    base: DistributionSpec | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown distribution kind {self.kind!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if any(not math.isfinite(p) for p in self.params):
            raise ConfigurationError(f"{self.kind}: parameters must be finite")
        expected = KINDS[self.kind] - (1 if self.kind in WRAPPERS else 0)
        if len(self.params) != expected:
            raise ConfigurationError(
                f"{self.kind} takes {KINDS[self.kind]} arguments, got {self}"
            )
        if self.kind in WRAPPERS:
            if not isinstance(self.base, DistributionSpec):
                raise ConfigurationError(f"{self.kind} needs a base distribution")
        elif self.base is not None:
            raise ConfigurationError(f"{self.kind} does not wrap another law")
        self._check_ranges()

    def _check_ranges(self):
        k, p = self.kind, self.params
        if k == "uniform" and not p[0] < p[1]:
            raise ConfigurationError(f"uniform needs lo < hi, got {self}")
        if k in ("normal", "lognormal") and not p[1] > 0:
            raise ConfigurationError(f"{k} needs a positive scale, got {self}")
        if k == "pareto" and not (p[0] > 0 and p[1] > 0):
            raise ConfigurationError(f"pareto needs exponent > 0 and x_min > 0, got {self}")
        if k == "two_point" and not 0.0 <= p[1] <= 1.0:
            raise ConfigurationError(f"two_point needs 0 <= p1 <= 1, got {self}")
        if k == "scaled" and p[0] == 0.0:
            raise ConfigurationError("scaled needs a nonzero factor")
        if k == "jittered" and not p[0] > 0:
            raise ConfigurationError(f"jittered needs jitter_sd > 0, got {self}")

    def __str__(self):
        nums = ", ".join(_fmt(v) for v in self.params)
        if self.base is not None:
            return f"{self.kind}({self.base}, {nums})"
        return f"{self.kind}({nums})"


def _fmt(v: float) -> str:
    return repr(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


# Constructors mirroring the textual grammar.
def constant(value):
    return DistributionSpec("constant", (value,))


def uniform(lo, hi):
    return DistributionSpec("uniform", (lo, hi))


def normal(mean, sd):
    return DistributionSpec("normal", (mean, sd))


def lognormal(mu, sigma):
    return DistributionSpec("lognormal", (mu, sigma))


def pareto(exponent, x_min=1.0):
    return DistributionSpec("pareto", (exponent, x_min))


def two_point(v1, p1, v2):
    return DistributionSpec("two_point", (v1, p1, v2))


def scaled(base, factor):
    return DistributionSpec("scaled", (factor,), base)


def jittered(base, jitter_sd):
    return DistributionSpec("jittered", (jitter_sd,), base)


def parse_spec(text: str) -> DistributionSpec:
    """Parse ``kind(param, ...)`` into a :class:`DistributionSpec`.

    >>> str(parse_spec("jittered(two_point(2, 0.2, 0.5), 0.01)"))
    'jittered(two_point(2, 0.2, 0.5), 0.01)'
    """
    if isinstance(text, DistributionSpec):
        return text
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse distribution {text!r}: {exc.msg}") from None
    return _from_node(tree.body, text)


def _from_node(node, text):
    if not isinstance(node, ast.Call) or not isinstance(node.func, ast.Name) or node.keywords:
        raise ConfigurationError(f"expected kind(param, ...) in {text!r}")
    kind = node.func.id
    if kind not in KINDS:
        raise ConfigurationError(f"unknown distribution kind {kind!r} in {text!r}")
    if len(node.args) != KINDS[kind]:
        raise ConfigurationError(f"{kind} takes {KINDS[kind]} arguments in {text!r}")
    if kind in WRAPPERS:
        base = _from_node(node.args[0], text)
        return DistributionSpec(kind, (_number(node.args[1], text),), base)
    return DistributionSpec(kind, tuple(_number(a, text) for a in node.args))


def _number(node, text):
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _number(node.operand, text)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        return float(node.value)
    raise ConfigurationError(f"expected a number in {text!r}")


# --------------------------------------------------------------------- RNG


@dataclass
class RngState:
    """Deterministic random stream keyed by ``(seed, stream_id)``.

    Both keys are 64-bit unsigned integers.  The underlying bit generator is
    Philox, a counter-based generator, so streams with different ids are
    independent and results do not depend on the platform.
    """

    seed: int = 0
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not (isinstance(v, (int, np.integer)) and 0 <= v < MAX_SEED):
                raise ConfigurationError(f"{name} must be a 64-bit unsigned integer, got {v!r}")
        seq = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        self.generator = np.random.Generator(np.random.Philox(seq))

    def spawn(self, stream_id: int) -> RngState:
        return RngState(self.seed, stream_id)

    def descriptor(self) -> dict:
        return {"seed": int(self.seed), "stream_id": int(self.stream_id)}


def _gen(rng) -> np.random.Generator:
    if rng is None:
        return RngState().generator
    if isinstance(rng, RngState):
        return rng.generator
    return rng


def draw(spec: DistributionSpec, rng, size) -> np.ndarray:
    """Vectorised sampling; ``size`` may be an int or a shape tuple."""
    g = _gen(rng)
    k, p = spec.kind, spec.params
    if k == "constant":
        return np.full(size, p[0])
    if k == "uniform":
        return g.uniform(p[0], p[1], size)
    if k == "normal":
        return g.normal(p[0], p[1], size)
    if k == "lognormal":
        return g.lognormal(p[0], p[1], size)
    if k == "pareto":
        # inverse transform; 1 - U lies in (0, 1] so the draw is finite
        return p[1] * (1.0 - g.random(size)) ** (-1.0 / p[0])
    if k == "two_point":
        return np.where(g.random(size) < p[1], p[0], p[2])
    if k == "scaled":
        return p[0] * draw(spec.base, g, size)
    if k == "jittered":
        x = draw(spec.base, g, size)
        return x * np.exp(p[0] * g.standard_normal(size))
    raise AssertionError(k)


def sample(spec: DistributionSpec, rng) -> float:
    """One draw from ``spec``; advances ``rng``."""
    return float(draw(spec, rng, 1)[0])


def draw_counts(spec: DistributionSpec, rng, size) -> np.ndarray:
    """Integer counts as the ceiling of a continuous draw, floored at one."""
    return np.maximum(np.ceil(draw(spec, rng, size)), 1.0).astype(np.int64)


# ----------------------------------------------------------------- moments


class Moment(NamedTuple):
    """Result of a moment evaluation.

    ``value`` is ``inf`` and ``divergent`` is true when the moment does not
    exist.  ``std_error`` is zero for closed forms.
    """

    value: float
    std_error: float
    divergent: bool
    closed_form: bool


def _closed_abs_moment(spec, p):
    """``E|X|^p`` in closed form, ``None`` when no closed form is known."""
    k, q = spec.kind, spec.params
    if k == "constant":
        return _pow_abs(q[0], p)
    if k == "uniform":
        lo, hi = q
        prim = lambda x: math.copysign(abs(x) ** (p + 1), x) / (p + 1)
        return (prim(hi) - prim(lo)) / (hi - lo)
    if k == "two_point":
        v1, p1, v2 = q
        return p1 * _pow_abs(v1, p) + (1 - p1) * _pow_abs(v2, p)
    if k == "pareto":
        alpha, xm = q
        if p >= alpha:
            return math.inf
        return alpha * xm**p / (alpha - p)
    if k == "lognormal":
        mu, sigma = q
        return math.exp(p * mu + 0.5 * p * p * sigma * sigma)
    if k == "scaled":
        inner = _closed_abs_moment(spec.base, p)
        return None if inner is None else abs(q[0]) ** p * inner
    if k == "jittered":
        inner = _closed_abs_moment(spec.base, p)
        return None if inner is None else inner * math.exp(0.5 * p * p * q[0] ** 2)
    return None


def _pow_abs(x, p):
    if p == 0:
        return 1.0
    return abs(x) ** p


def moment(spec: DistributionSpec, p: float, mc_budget: int = DEFAULT_MC_BUDGET, rng=None) -> Moment:
    """Absolute moment ``E|X|^p``.

    Closed forms are used for constant, uniform, two_point, pareto and
    lognormal laws and for wrappers around them; other laws fall back to a
    Monte Carlo mean over ``mc_budget`` draws.
    """
    if p < 0:
        raise ValueError(f"negative moment order {p} is not supported")
    if not has_finite_moment(spec, p):
        return Moment(math.inf, 0.0, True, True)
    value = _closed_abs_moment(spec, p)
    if value is not None:
        return Moment(float(value), 0.0, False, True)
    x = np.abs(draw(spec, rng, int(mc_budget))) ** p
    return Moment(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), False, False)


def has_finite_moment(spec: DistributionSpec, p: float) -> bool:
    """Structural check that ``E|X|^p`` (and ``E|X|^p ln+|X|``) are finite."""
    if spec.kind == "pareto":
        return p < spec.params[0]
    if spec.base is not None:
        return has_finite_moment(spec.base, p)
    return True


def inverse_moment(spec: DistributionSpec, p: float, mc_budget: int = DEFAULT_MC_BUDGET, rng=None) -> Moment:
    """Negative absolute moment ``E|X|^-p`` for ``p >= 0``."""
    if p < 0:
        raise ValueError("inverse_moment expects p >= 0")
    value = _closed_inverse_moment(spec, p)
    if value is not None:
        div = math.isinf(value)
        return Moment(float(value), 0.0, div, True)
    x = np.abs(draw(spec, rng, int(mc_budget)))
    with np.errstate(divide="ignore"):
        y = x ** (-p)
    if not np.all(np.isfinite(y)):
        return Moment(math.inf, 0.0, True, False)
    return Moment(float(y.mean()), float(y.std(ddof=1) / math.sqrt(y.size)), False, False)


def _closed_inverse_moment(spec, p):
    k, q = spec.kind, spec.params
    if p == 0:
        return 1.0
    if k == "constant":
        return math.inf if q[0] == 0 else abs(q[0]) ** (-p)
    if k == "uniform":
        lo, hi = q
        if lo < 0 < hi or lo == 0 or hi == 0:
            if p >= 1:
                return math.inf
        if p == 1:
            return math.log(hi / lo) / (hi - lo)
        prim = lambda x: math.copysign(abs(x) ** (1 - p), x) / (1 - p)
        return (prim(hi) - prim(lo)) / (hi - lo)
    if k == "two_point":
        v1, p1, v2 = q
        total = 0.0
        for v, w in ((v1, p1), (v2, 1 - p1)):
            if w > 0:
                if v == 0:
                    return math.inf
                total += w * abs(v) ** (-p)
        return total
    if k == "pareto":
        alpha, xm = q
        return alpha * xm ** (-p) / (alpha + p)
    if k == "lognormal":
        mu, sigma = q
        return math.exp(-p * mu + 0.5 * p * p * sigma * sigma)
    if k == "scaled":
        inner = _closed_inverse_moment(spec.base, p)
        return None if inner is None else abs(q[0]) ** (-p) * inner
    if k == "jittered":
        inner = _closed_inverse_moment(spec.base, p)
        return None if inner is None else inner * math.exp(0.5 * p * p * q[0] ** 2)
    return None


def log_moment(spec: DistributionSpec, mc_budget: int = DEFAULT_MC_BUDGET, rng=None) -> Moment:
    """``E ln|X|``; ``-inf`` when ``X = 0`` has positive probability."""
    value = _closed_log_moment(spec)
    if value is not None:
        return Moment(float(value), 0.0, False, True)
    x = np.abs(draw(spec, rng, int(mc_budget)))
    if np.any(x == 0):
        return Moment(-math.inf, 0.0, False, False)
    lx = np.log(x)
    return Moment(float(lx.mean()), float(lx.std(ddof=1) / math.sqrt(lx.size)), False, False)


def _closed_log_moment(spec):
    k, q = spec.kind, spec.params
    if k == "constant":
        return -math.inf if q[0] == 0 else math.log(abs(q[0]))
    if k == "uniform":
        lo, hi = q

        def prim(x):
            return 0.0 if x == 0 else x * math.log(abs(x)) - x

        return (prim(hi) - prim(lo)) / (hi - lo)
    if k == "two_point":
        v1, p1, v2 = q
        total = 0.0
        for v, w in ((v1, p1), (v2, 1 - p1)):
            if w > 0:
                if v == 0:
                    return -math.inf
                total += w * math.log(abs(v))
        return total
    if k == "pareto":
        alpha, xm = q
        return math.log(xm) + 1.0 / alpha
    if k == "lognormal":
        return q[0]
    if k == "normal":
        mean, sd = q
        if mean == 0:
            # E ln|Z| = -(euler_gamma + ln 2) / 2 for standard normal Z
            return math.log(sd) - 0.5 * (np.euler_gamma + math.log(2.0))
        return None
    if k == "scaled":
        inner = _closed_log_moment(spec.base)
        return None if inner is None else inner + math.log(abs(q[0]))
    if k == "jittered":
        return _closed_log_moment(spec.base)
    return None


def mean_var(spec: DistributionSpec) -> tuple[float, float]:
    """Signed mean and variance; ``inf`` where they do not exist."""
    k, q = spec.kind, spec.params
    if k == "constant":
        return q[0], 0.0
    if k == "uniform":
        return 0.5 * (q[0] + q[1]), (q[1] - q[0]) ** 2 / 12.0
    if k == "normal":
        return q[0], q[1] ** 2
    if k == "lognormal":
        mu, s = q
        return math.exp(mu + s * s / 2), math.expm1(s * s) * math.exp(2 * mu + s * s)
    if k == "pareto":
        a, xm = q
        mean = a * xm / (a - 1) if a > 1 else math.inf
        var = a * xm * xm / ((a - 1) ** 2 * (a - 2)) if a > 2 else math.inf
        return mean, var
    if k == "two_point":
        v1, p1, v2 = q
        return p1 * v1 + (1 - p1) * v2, p1 * (1 - p1) * (v1 - v2) ** 2
    m, v = mean_var(spec.base)
    if k == "scaled":
        return q[0] * m, q[0] ** 2 * v
    s2 = q[0] ** 2
    if math.isinf(v):
        return m * math.exp(s2 / 2), math.inf
    return m * math.exp(s2 / 2), (v + m * m) * math.exp(2 * s2) - m * m * math.exp(s2)


def support(spec: DistributionSpec) -> tuple[float, float]:
    """Closed hull ``(lo, hi)`` of the support."""
    k, q = spec.kind, spec.params
    if k == "constant":
        return q[0], q[0]
    if k == "uniform":
        return q[0], q[1]
    if k == "normal":
        return -math.inf, math.inf
    if k == "lognormal":
        return 0.0, math.inf
    if k == "pareto":
        return q[1], math.inf
    if k == "two_point":
        atoms = [v for v, w in ((q[0], q[1]), (q[2], 1 - q[1])) if w > 0]
        return min(atoms), max(atoms)
    lo, hi = support(spec.base)
    if k == "scaled":
        ends = (q[0] * lo, q[0] * hi)
        return min(ends), max(ends)
    # multiplicative lognormal noise spreads any nonzero value over a half-line
    new_lo = 0.0 if lo >= 0 else -math.inf
    new_hi = 0.0 if hi <= 0 else math.inf
    return new_lo, new_hi


def prob_abs_exceeds_one(spec: DistributionSpec) -> bool:
    """Whether ``P(|X| > 1) > 0``, decided from the support."""
    if spec.kind == "two_point":
        v1, p1, v2 = spec.params
        return (p1 > 0 and abs(v1) > 1) or (p1 < 1 and abs(v2) > 1)
    if spec.kind == "constant":
        return abs(spec.params[0]) > 1
    lo, hi = support(spec)
    return hi > 1 or lo < -1


def is_lattice(spec: DistributionSpec) -> bool:
    """Whether ``ln|X|`` (given ``X != 0``) lives on a lattice.

    Decided by family: point masses and two-point laws are lattice valued,
    scaling preserves that, continuous families and jittered laws are not.
    """
    if spec.kind in ("constant", "two_point"):
        return True
    if spec.kind == "scaled":
        return is_lattice(spec.base)
    return False


def is_degenerate(spec: DistributionSpec) -> bool:
    """True when the law is a point mass."""
    if spec.kind == "constant":
        return True
    if spec.kind == "two_point":
        v1, p1, v2 = spec.params
        return p1 in (0.0, 1.0) or v1 == v2
    if spec.kind == "scaled":
        return is_degenerate(spec.base)
    return False


def log_moment_function(log_abs: np.ndarray):
    """Return ``mu -> ln mean(exp(mu * log_abs))`` over fixed draws.

    Reusing one set of draws for every ``mu`` (common random numbers) keeps
    the estimated moment curve smooth and convex, which root bracketing
    relies on.
    """
    la = np.asarray(log_abs, dtype=float)
    finite = la[np.isfinite(la)]
    n = la.size
    n_finite = finite.size

    def f(mu):
        if mu == 0:
            return 0.0
        if n_finite == 0:
            return -math.inf
        return float(logsumexp(mu * finite) - math.log(n))

    f.n_zero = n - n_finite
    return f
