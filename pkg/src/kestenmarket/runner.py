"""Scenario execution: replicas, analyses, CSV series and the JSON summary."""

from __future__ import annotations

import json
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy import stats

from . import distributions as dist
from . import kesten, market, matrix, recurrence, tails
from .config import ScenarioConfig, load_config
from .distributions import RngState
from .errors import InsufficientDataError, KestenMarketError
from .series_io import write_csv

SUMMARY_KEYS = (
    "scenario", "description", "seed", "replicas", "length", "burn_in", "files",
    "solver", "kesten", "stationarity", "grincevicius", "tail", "rank_regression",
    "log_increment", "moment_probe", "market", "volume", "network", "bubble",
    "negative_feedback", "replica_summary", "warnings",
)


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def _band(sample, k):
    try:
        return tails.hill_band(sample, k)
    except (InsufficientDataError, ValueError) as exc:
        return str(exc)


def _band_json(band, root=None):
    if isinstance(band, str):
        return {"error": band}
    out = band.to_json()
    out["mild_suspected"] = band.mild_suspected
    if root is not None:
        out["root"] = root
        out["root_in_band"] = band.contains(root)
    return out


def _probe(sample, p):
    try:
        return {"p": p, "verdict": tails.moment_probe(sample, p)}
    except InsufficientDataError as exc:
        return {"p": p, "error": str(exc)}


# ----------------------------------------------------------------- replica


def _run_replica(cfg: ScenarioConfig, replica: int, roots: dict) -> dict:
    """Simulate every model section of one replica and estimate its tails."""
    an = cfg.analysis
    rng_seed = cfg.run.seed
    k = an["hill_k"]
    out = {"series": {}, "estimates": {}, "tail": {}, "warnings": []}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if cfg.recurrence is not None:
            keep = an["grincevicius_mu_e"] is not None
            path = recurrence.simulate_path(cfg.recurrence, cfg.run.length, cfg.run.burn_in,
                                            RngState(rng_seed, replica), keep_inputs=keep)
            out["series"]["recurrence"] = {"r": path.values}
            absr = np.abs(path.values)
            band = _band(absr, k)
            out["tail"]["recurrence_r"] = _band_json(band, roots.get("recurrence"))
            if not isinstance(band, str):
                out["estimates"]["recurrence_hill"] = band.exponent
            try:
                rr = tails.rank_regression(absr[absr > 0], an["tail_fraction"])
                out["rank_regression"] = {**rr.to_json(), "power_law": rr.power_law}
            except (InsufficientDataError, ValueError) as exc:
                out["rank_regression"] = {"error": str(exc)}
            if cfg.recurrence.lag == 1:
                thr = float(np.quantile(absr, an["increment_quantile"]))
                try:
                    inc = recurrence.log_abs_increment_diagnostic(path, thr)
                    elog = dist.log_moment(cfg.recurrence.a_law, an["mc_budget"],
                                           RngState(rng_seed, 2**63 + 1))
                    out["log_increment"] = {**inc.to_json(), "threshold": thr,
                                            "mean_log_a": elog.value,
                                            "z": (inc.mean_increment - elog.value) / inc.std_error
                                            if inc.std_error > 0 else None}
                except InsufficientDataError as exc:
                    out["log_increment"] = {"error": str(exc)}
            if keep:
                e = path.inputs
                x = float(np.quantile(e, an["grincevicius_quantile"]))
                pe = tails.ccdf_at(e, x)
                pr = tails.ccdf_at(path.values, x)
                out["grincevicius_empirical"] = {"x": x, "p_r": pr, "p_e": pe,
                                                 "ratio": pr / pe if pe > 0 else None}
                if pe > 0:
                    out["estimates"]["grincevicius_ratio"] = pr / pe
            if an["moment_probe_p"] is not None:
                out["moment_probe"] = _probe(absr, an["moment_probe_p"])
        if cfg.market is not None:
            mp = market.simulate_market(cfg.market, cfg.run.length, RngState(rng_seed, replica))
            out["series"]["market"] = mp.columns()
            r = mp.r
            sd = float(r.std(ddof=1))
            out["market_stats"] = {
                "mean_r": float(r.mean()), "sd_r": sd,
                "se_mean_r": sd / math.sqrt(r.size),
                "skew_r": float(stats.skew(r)), "excess_kurtosis_r": float(stats.kurtosis(r)),
                "final_price": float(mp.prices[-1]),
            }
            out["estimates"]["market_sd_r"] = sd
            for name, sample in (("market_r", np.abs(r)), ("market_q", np.abs(mp.q))):
                band = _band(sample[sample > 0], k) if np.any(sample > 0) else "all zero"
                out["tail"][name] = _band_json(band, roots.get("market"))
                if not isinstance(band, str):
                    out["estimates"][name + "_hill"] = band.exponent
            rb, qb = out["tail"]["market_r"], out["tail"]["market_q"]
            if "error" not in rb and "error" not in qb:
                c_r, c_q = rb["central"], qb["central"]
                gap = tails.BAND_Z * math.hypot(rb["robust_se"][1], qb["robust_se"][1])
                out["market_stats"]["r_q_exponent_gap"] = abs(c_r["exponent"] - c_q["exponent"])
                out["market_stats"]["r_q_agree"] = abs(c_r["exponent"] - c_q["exponent"]) <= gap
            if an["volume_relation"]:
                try:
                    out["volume"] = market.volume_imbalance_relation(mp.v, mp.q).to_json()
                except InsufficientDataError as exc:
                    out["volume"] = {"error": str(exc)}
            if an["moment_probe_p"] is not None:
                out["moment_probe"] = _probe(np.abs(r), an["moment_probe_p"])
        if cfg.network is not None:
            vp = matrix.simulate_vector_path(cfg.network, cfg.run.length, cfg.run.burn_in,
                                             RngState(rng_seed, replica))
            out["series"]["network"] = vp.columns()
            try:
                avg = matrix.average_opinion_tail(vp, k)
                out["tail"]["network_avg"] = {**avg.to_json(), "power_law": avg.power_law}
                out["estimates"]["network_avg_hill"] = avg.exponent
            except (InsufficientDataError, ValueError) as exc:
                out["tail"]["network_avg"] = {"error": str(exc)}
            for i in range(cfg.network.size):
                comp = np.abs(vp.components[:, i])
                out["tail"][f"network_x{i}"] = _band_json(_band(comp, k), roots.get("network"))
    out["warnings"] = [str(w.message) for w in caught]
    return out


# ------------------------------------------------------------ deterministic


def _solver_section(cfg: ScenarioConfig, roots: dict) -> dict | None:
    an = cfg.analysis
    section = {}
    if cfg.recurrence is not None:
        try:
            root = kesten.solve_exponent(cfg.recurrence.a_law, an["mu_max"], an["tol"],
                                         an["mc_budget"], RngState(cfg.run.seed, 2**63))
            section["recurrence"] = {"root": root, "a_law": str(cfg.recurrence.a_law),
                                     "method": "moment equation E|a|^mu = 1"}
        except KestenMarketError as exc:
            root = None
            section["recurrence"] = {"root": None, "error": str(exc)}
        roots["recurrence"] = root
    if cfg.market is not None and cfg.market.price_rule == "impact" \
            and cfg.market.demand_sign == "speculative":
        root = market.feedback_exponent(cfg.market, an["mu_max"], 1e-6, an["mc_budget"],
                                        RngState(cfg.run.seed, 2**63))
        section["market"] = {
            "root": root, "feedback": "a = alpha beta N / L",
            "mean_feedback": market.feedback_mean(cfg.market, an["mc_budget"],
                                                  RngState(cfg.run.seed, 2**63 + 2)),
            "method": "moment equation with count control variate",
        }
        roots["market"] = root
    return section or None


def _kesten_section(cfg: ScenarioConfig, roots: dict):
    an = cfg.analysis
    rng = RngState(cfg.run.seed, 2**63 + 3)
    if cfg.recurrence is not None:
        mu = an["kesten_mu"] or roots.get("recurrence")
        if mu is None:
            return {"error": "no exponent root; set analysis.kesten_mu"}
        rep = kesten.check_kesten(cfg.recurrence.a_law, cfg.recurrence.input_law, mu,
                                  an["mc_budget"], rng, coupled=cfg.recurrence.coupled)
        return rep.to_json()
    if cfg.market is not None and cfg.market.price_rule == "impact" \
            and cfg.market.demand_sign == "speculative":
        mu = an["kesten_mu"] or roots.get("market")
        if mu is None:
            return {"error": "no exponent root; set analysis.kesten_mu"}
        return market.check_market_kesten(cfg.market, mu, an["mc_budget"], rng).to_json()
    return None


def _network_section(cfg: ScenarioConfig, roots: dict):
    if cfg.network is None:
        return None
    an = cfg.analysis
    base = cfg.network.base.entries
    section = {"mode": cfg.network.mode, "size": cfg.network.size,
               "strongly_connected": matrix.strong_connectivity(base),
               "spectral_radius": matrix.spectral_radius(base),
               "max_row_sum": float(base.sum(axis=1).max())}
    try:
        section["multiplier"] = matrix.multiplier_matrix(base).tolist()
    except KestenMarketError as exc:
        section["multiplier"] = {"error": str(exc)}
    delta, value = matrix.contraction_check(cfg.network)
    section["contraction"] = {"delta": delta, "moment": value}
    if an["matrix_exponent"]:
        rep = matrix.matrix_exponent_report(cfg.network, an["mu_max"], 1e-3, an["particles"],
                                            an["horizon"], RngState(cfg.run.seed, 2**63 + 4))
        section["matrix_exponent"] = rep.to_json()
        roots["network"] = rep.root
    if cfg.network.diag_laws is not None:
        laws = cfg.network.diag_laws
        per = []
        for law in (laws if len(laws) == cfg.network.size else laws * cfg.network.size):
            try:
                per.append(kesten.solve_exponent(law, an["mu_max"], 1e-8, an["mc_budget"]))
            except KestenMarketError as exc:
                per.append(str(exc))
        section["diagonal_roots"] = per
    section["caveat"] = ("weights are drawn iid every step; persistent or dependent "
                         "weights would violate the iid assumption of the tail theory")
    return section


def _bubble_section(cfg: ScenarioConfig):
    an = cfg.analysis
    if not an["bubble_length"]:
        return None, None
    rho = an["bubble_rho"] if an["bubble_rho"] is not None else cfg.market.rho
    b0 = an["bubble_b0"]
    if b0 is None:
        b0 = cfg.market.p0 - cfg.market.fundamental_value if cfg.market is not None else 1.0
    path = market.bubble_path(rho, b0, an["bubble_length"])
    growth = float(np.mean(np.diff(np.log(np.abs(path))))) if b0 != 0 else None
    return ({"rho": rho, "b0": b0, "growth_rate": growth, "log1p_rho": math.log1p(rho),
             "final": float(path[-1])}, {"B": path})


def _negative_feedback_section(cfg: ScenarioConfig):
    an = cfg.analysis
    if not an["feedback_rhos"]:
        return None, None
    f = cfg.market.fundamental_value if cfg.market is not None else 100.0
    p0 = cfg.market.p0 if cfg.market is not None else 50.0
    cols, rows = {}, []
    for rho in an["feedback_rhos"]:
        path = market.negative_feedback_path(rho, f, p0, an["feedback_length"])
        cols[f"P_rho_{rho:g}"] = path
        gaps = np.abs(path - f)
        rows.append({"rho": rho, "converges": market.converges(rho),
                     "gap_ratio": float(gaps[-1] / gaps[-2]) if gaps[-2] > 0 else 0.0,
                     "final_gap": float(gaps[-1])})
    return {"f": f, "p0": p0, "paths": rows}, cols


# ------------------------------------------------------------------ driver


def _aggregate(replicas: list[dict]) -> dict:
    keys = sorted({k for r in replicas for k in r["estimates"]})
    agg = {}
    for key in keys:
        vals = np.array([r["estimates"][key] for r in replicas if key in r["estimates"]])
        se = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else None
        agg[key] = {"mean": float(vals.mean()), "stderr": se, "n": int(vals.size)}
    return agg


def run_scenario(name_or_path, out_dir, workers: int | None = None) -> dict:
    """Run a scenario and write ``summary.json`` plus series CSVs to ``out_dir``."""
    cfg = load_config(name_or_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    roots: dict = {}
    notes: list = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        solver = _solver_section(cfg, roots)
        network = _network_section(cfg, roots)
        kest = _kesten_section(cfg, roots)
    notes.extend(str(w.message) for w in caught)

    n_rep = cfg.run.replicas
    workers = workers if workers is not None else min(n_rep, os.cpu_count() or 1)
    if workers > 1 and n_rep > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replica, [cfg] * n_rep, range(n_rep), [roots] * n_rep))
    else:
        results = [_run_replica(cfg, i, roots) for i in range(n_rep)]

    files = []
    for i, res in enumerate(results):
        suffix = "" if i == 0 else f"_r{i}"
        for name, cols in res["series"].items():
            fname = f"{name}{suffix}.csv"
            write_csv(out / fname, cols)
            files.append(fname)
        notes.extend(f"replica {i}: {w}" for w in res["warnings"])
    bubble, bubble_cols = _bubble_section(cfg)
    if bubble_cols is not None:
        write_csv(out / "bubble.csv", bubble_cols)
        files.append("bubble.csv")
    negfb, negfb_cols = _negative_feedback_section(cfg)
    if negfb_cols is not None:
        write_csv(out / "negative_feedback.csv", negfb_cols)
        files.append("negative_feedback.csv")

    first = results[0]
    stationarity = None
    if cfg.recurrence is not None:
        stationarity = recurrence.check_stationarity(cfg.recurrence, cfg.analysis["mc_budget"],
                                                     RngState(cfg.run.seed, 2**63 + 5)).to_json()
    grinc = None
    if cfg.analysis["grincevicius_mu_e"] is not None:
        try:
            pred = kesten.grincevicius_predict(cfg.recurrence.a_law, cfg.analysis["grincevicius_mu_e"],
                                               cfg.recurrence.coupled)
            grinc = {**pred.to_json(), "predicted_ratio": pred.predicted_ratio,
                     "empirical": first.get("grincevicius_empirical")}
            emp = first.get("grincevicius_empirical") or {}
            if emp.get("ratio") is not None:
                grinc["relative_error"] = abs(emp["ratio"] / pred.predicted_ratio - 1)
        except KestenMarketError as exc:
            grinc = {"error": str(exc)}
    market_sec = None
    if cfg.market is not None:
        market_sec = dict(first["market_stats"])
        market_sec["rho"] = cfg.market.rho
        if cfg.market.price_rule == "clearing" and cfg.market.demand_sign == "speculative":
            sigma = math.sqrt(dist.mean_var(cfg.market.expectation_law)[1])
            n_mean = dist.mean_var(cfg.market.n_law)[0]
            market_sec["predicted_sd_r"] = sigma / math.sqrt(n_mean)
    if network is not None and "network_avg" in first["tail"]:
        network["average_tail"] = first["tail"]["network_avg"]

    summary = {
        "scenario": cfg.name,
        "description": cfg.description,
        "seed": cfg.run.seed,
        "replicas": n_rep,
        "length": cfg.run.length,
        "burn_in": cfg.run.burn_in,
        "files": files,
        "solver": solver,
        "kesten": kest,
        "stationarity": stationarity,
        "grincevicius": grinc,
        "tail": first["tail"] or None,
        "rank_regression": first.get("rank_regression"),
        "log_increment": first.get("log_increment"),
        "moment_probe": first.get("moment_probe"),
        "market": market_sec,
        "volume": first.get("volume"),
        "network": network,
        "bubble": bubble,
        "negative_feedback": negfb,
        "replica_summary": _aggregate(results) if n_rep > 1 else None,
        "warnings": notes,
    }
    assert tuple(summary) == SUMMARY_KEYS
    with open(out / "summary.json", "w", newline="\n") as fh:
        json.dump(_clean(summary), fh, indent=2, sort_keys=False)
        fh.write("\n")
    return summary


# ------------------------------------------------------- single analyses


def solver_report(name_or_path) -> dict | None:
    """Exponent roots of every model section of a scenario."""
    cfg = load_config(name_or_path)
    roots: dict = {}
    section = _solver_section(cfg, roots) or {}
    network = _network_section(cfg, roots)
    if network is not None and "matrix_exponent" in network:
        section["network"] = network["matrix_exponent"]
    return _clean(section) or None


def kesten_report(name_or_path) -> dict | None:
    """Condition report for the scalar or market recurrence of a scenario."""
    cfg = load_config(name_or_path)
    roots: dict = {}
    _solver_section(cfg, roots)
    return _clean(_kesten_section(cfg, roots))


def network_report(name_or_path) -> dict | None:
    """Structure, multiplier and exponent diagnostics of the weight matrices."""
    cfg = load_config(name_or_path)
    return _clean(_network_section(cfg, {}))
