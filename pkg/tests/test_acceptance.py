"""Acceptance criteria 1-10, one PASS/FAIL line each."""

import math
import sys
from fractions import Fraction

import numpy as np
from scipy import stats

from kestenmarket import distributions as dist
from kestenmarket import kesten, market, matrix, tails
from kestenmarket.distributions import RngState
from kestenmarket.market import MarketConfig
from kestenmarket.recurrence import (RecurrenceSpec, log_abs_increment_diagnostic, mean_multiplier,
                                     multiplier, simulate_path, variance_multiplier)
from kestenmarket.runner import run_scenario

try:
    from conftest import ACCEPTANCE_LINES
except ImportError:
    ACCEPTANCE_LINES = []

UNIFORM = dist.uniform(0, 2)
JITTERED = dist.jittered(dist.two_point(2, 0.2, 0.5), 0.01)
NORMAL = dist.normal(0, 1)


def report(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _ulps(x, exact):
    return abs(Fraction(x) - exact) / Fraction(float(np.spacing(abs(float(exact)))))


def test_criterion_01_multiplier_algebra():
    # oracle: exact rational closed forms at the decimal value of each argument
    exact = multiplier(0.9) == 10.0
    grid = [float(f"{a:.6g}") for a in np.linspace(-0.99, 0.99, 397)]
    var_err = max(_ulps(variance_multiplier(a), 1 / (1 - Fraction(repr(a)) ** 2)) for a in grid)
    mean_err = max(_ulps(mean_multiplier(a), 1 / (1 - Fraction(repr(a)))) for a in grid)
    ok = exact and var_err <= 1 and mean_err <= 1
    report(1, ok, f"multiplier(0.9) = {multiplier(0.9)!r}; max error vs exact closed forms "
                  f"{float(var_err):.2f} / {float(mean_err):.2f} ulp (variance / mean)")


def test_criterion_02_random_walk():
    cfg = MarketConfig(expectation_law=dist.normal(0, 0.02), n_law=dist.constant(10_000))
    r = market.simulate_market(cfg, 100_000, RngState(2024)).r
    sd, target = float(r.std(ddof=1)), 0.02 / math.sqrt(10_000)
    skew, kurt = float(stats.skew(r)), float(stats.kurtosis(r))
    ok = abs(sd / target - 1) < 0.05 and abs(skew) < 0.05 and abs(kurt) < 0.1
    report(2, ok, f"sd {sd:.4e} vs {target:.1e} ({abs(sd / target - 1):.2%}); "
                  f"skew {skew:+.4f}, excess kurtosis {kurt:+.4f}")


def test_criterion_03_bubble_and_paradox():
    rho = 0.1
    b = market.bubble_path(rho, 1.0, 200)
    growth = float(np.mean(np.diff(np.log(b))))
    growth_ok = abs(growth - math.log1p(rho)) < 1e-12
    rhos = np.linspace(0.05, 2.95, 59)
    iff_ok = True
    for r in rhos:
        gaps = np.abs(market.negative_feedback_path(r, 100, 50, 400) - 100)
        shrinks = gaps[-1] < gaps[0]
        iff_ok &= shrinks == (abs(1 - r) < 1) == market.converges(r)
    gaps = np.abs(market.negative_feedback_path(2.5, 100, 50, 30) - 100)
    diverge_ok = bool(np.allclose(gaps[1:] / gaps[:-1], 1.5)) and not market.converges(2.5)
    ok = growth_ok and iff_ok and diverge_ok
    report(3, ok, f"growth {growth:.15f} vs ln(1.1) {math.log1p(rho):.15f}; "
                  f"converges iff |1 - rho| < 1 on {len(rhos)} values: {bool(iff_ok)}; "
                  f"rho = 2.5 gap ratio {gaps[-1] / gaps[-2]:.3f}")


def test_criterion_04_kesten_closed_loop():
    mu_u = kesten.solve_exponent(UNIFORM)
    x_u = np.abs(simulate_path(RecurrenceSpec(UNIFORM, NORMAL), 1_000_000,
                               rng=RngState(4, 0)).values)
    band_u = tails.hill_band(x_u)
    mu_j = kesten.solve_exponent(JITTERED)
    x_j = np.abs(simulate_path(RecurrenceSpec(JITTERED, NORMAL), 10_000_000,
                               rng=RngState(4, 1)).values)
    band_j = tails.hill_band(x_j)
    ok = (abs(mu_u - 1) <= 0.02 and band_u.contains(1.0)
          and abs(mu_j - 2) <= 0.05 and band_j.contains(2.0))
    report(4, ok, f"uniform root {mu_u:.6f}, Hill {band_u.exponent:.3f} band "
                  f"[{band_u.lo:.3f}, {band_u.hi:.3f}]; jittered two-point root {mu_j:.4f}, "
                  f"Hill {band_j.exponent:.3f} band [{band_j.lo:.3f}, {band_j.hi:.3f}]")


def test_criterion_05_market_self_consistency(tmp_path):
    summary = run_scenario("kesten-stock", tmp_path)
    root = summary["solver"]["market"]["root"]
    rb, qb = summary["tail"]["market_r"], summary["tail"]["market_q"]
    mu_r, mu_q = rb["central"]["exponent"], qb["central"]["exponent"]
    joint = tails.BAND_Z * math.hypot(rb["robust_se"][1], qb["robust_se"][1])
    in_band = root is not None and rb["lo"] <= root <= rb["hi"]
    agree = abs(mu_r - mu_q) <= joint
    report(5, in_band and agree,
           f"solver root {root:.3f}; |r| Hill {mu_r:.3f} band [{rb['lo']:.3f}, {rb['hi']:.3f}]; "
           f"|q| Hill {mu_q:.3f}; |mu_r - mu_q| = {abs(mu_r - mu_q):.3f} <= {joint:.3f}: {agree}")


def test_criterion_06_volume_relation():
    n = 1_000_000
    v = dist.draw(dist.pareto(1.5, 1), RngState(6, 0), n)
    q = dist.draw(NORMAL, RngState(6, 1), n) * np.sqrt(v)
    rep = market.volume_imbalance_relation(v, q)
    mu_q = rep.q_band.exponent
    ok = abs(mu_q - 3.0) <= 0.3 and rep.ratio is not None and abs(rep.ratio - 2.0) <= 0.3
    report(6, ok, f"mu_q {mu_q:.3f} (target 3.0 +- 0.3); ratio mu_q/mu_v {rep.ratio:.3f} "
                  f"(target 2.0 +- 0.3)")


def test_criterion_07_grincevicius():
    c = 1.25 ** (2 / 3)
    a_law = dist.uniform(0, c)
    pred = kesten.grincevicius_predict(a_law, 1.5)
    path = simulate_path(RecurrenceSpec(a_law, dist.pareto(1.5, 1)), 10_000_000,
                         rng=RngState(7), keep_inputs=True)
    x = float(np.quantile(path.inputs, 0.999))
    ratio = tails.ccdf_at(path.values, x) / tails.ccdf_at(path.inputs, x)
    amp = kesten.amplification(0.9)
    ok = abs(ratio / pred.tail_ratio - 1) <= 0.25 and amp == 9.0
    report(7, ok, f"E a^1.5 = {pred.moment:.6f}; empirical tail ratio {ratio:.3f} vs predicted "
                  f"{pred.tail_ratio:.3f} ({abs(ratio / pred.tail_ratio - 1):.1%}); "
                  f"amplification(0.9) = {amp!r}")


def test_criterion_08_log_random_walk():
    path = simulate_path(RecurrenceSpec(UNIFORM, NORMAL), 2_000_000, rng=RngState(8))
    thr = float(np.quantile(np.abs(path.values), 0.99))
    s = log_abs_increment_diagnostic(path, thr)
    target = math.log(2) - 1
    z = (s.mean_increment - target) / s.std_error
    report(8, abs(z) <= 2, f"mean increment {s.mean_increment:.4f} vs ln 2 - 1 = {target:.4f} "
                           f"({z:+.2f} SE over {s.count} excursions)")


def test_criterion_09_matrix_machinery():
    gen = np.random.default_rng(9)
    neumann_err = 0.0
    for _ in range(200):
        n = int(gen.integers(2, 7))
        m = gen.random((n, n))
        np.fill_diagonal(m, 0)
        m *= gen.uniform(0.1, 0.9) / m.sum(axis=1).max()
        neumann_err = max(neumann_err, float(np.abs(matrix.multiplier_matrix(m)
                                                    - matrix.neumann_series(m, 400)).max()))
    bound_ok = True
    for _ in range(1000):
        n = int(gen.integers(2, 10))
        m = gen.random((n, n)) * (gen.random((n, n)) < 0.5)
        np.fill_diagonal(m, 0)
        rows = m.sum(axis=1)
        rho = matrix.spectral_radius(m)
        bound_ok &= rows.min() - 1e-10 <= rho <= rows.max() + 1e-10
    diffs = []
    for i, law in enumerate((UNIFORM, JITTERED)):
        est = matrix.estimate_matrix_exponent(matrix.diagonal_spec(law, NORMAL),
                                              rng=RngState(9, i))
        diffs.append(abs(est - kesten.solve_exponent(law)) if est is not None else math.inf)
    ok = neumann_err <= 1e-8 and bool(bound_ok) and max(diffs) <= 0.1
    report(9, ok, f"Neumann max error {neumann_err:.1e}; row-sum bound on 1000 matrices: "
                  f"{bool(bound_ok)}; matrix vs scalar root gaps {diffs[0]:.3f}, {diffs[1]:.3f}")


def test_criterion_10_condition_checkers():
    u = kesten.check_kesten(UNIFORM, NORMAL, 1.0)
    tp = kesten.check_kesten(dist.two_point(2, 0.2, 0.5), NORMAL, 2.0)
    dg = kesten.check_kesten(dist.constant(0.5), dist.constant(2), 1.0)
    got = {
        "uniform": (u.condition_i, u.condition_ii, u.condition_iii, u.condition_iv, u.degenerate),
        "two_point": (tp.condition_i, tp.condition_ii, tp.condition_iii, tp.condition_iv,
                      tp.degenerate),
        "constant": dg.degenerate,
    }
    ok = (got["uniform"] == ("pass",) * 4 + (False,)
          and got["two_point"] == ("pass",) * 3 + ("fail", False) and got["constant"] is True)
    report(10, ok, f"uniform {got['uniform'][:4]}, two-point {got['two_point'][:4]}, "
                   f"constant degenerate {got['constant']}")


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion"):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    with tempfile.TemporaryDirectory() as d:
                        fn(Path(d))
                else:
                    fn()
            except AssertionError:
                failed += 1
    sys.exit(1 if failed else 0)
