"""INI scenario files: parsing, schema checks and cross-field validation."""

from __future__ import annotations

import ast
import configparser
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import distributions as dist
from .errors import ConfigurationError, KestenMarketError
from .market import MarketConfig, feedback_mean
from .matrix import MatrixRecurrenceSpec, WeightMatrix
from .recurrence import DEFAULT_BURN_IN, RecurrenceSpec

MODEL_SECTIONS = ("recurrence", "market", "network")
SECTIONS = ("run",) + MODEL_SECTIONS + ("analysis",)


# ----------------------------------------------------------- value parsers


def _int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _float(text):
    value = float(text)
    if math.isnan(value):
        raise ValueError("NaN is not allowed")
    return value


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _spec(text):
    return dist.parse_spec(text)


def _spec_list(text):
    return tuple(dist.parse_spec(part) for part in text.split(";") if part.strip())


def _float_list(text):
    return tuple(_float(part) for part in text.replace(";", ",").split(",") if part.strip())


def _choice(*options):
    def parse(text):
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {value!r}")
        return value
    return parse


def _text(text):
    return text.strip()


SCHEMA = {
    "run": {
        "name": _text,
        "description": _text,
        "length": _int,
        "burn_in": _int,
        "seed": _int,
        "replicas": _int,
    },
    "recurrence": {
        "a_law": _spec,
        "input_law": _spec,
        "input_mode": _choice("direct", "coupled"),
        "lag": _int,
        "r0": _float,
    },
    "market": {
        "alpha": _float,
        "gamma": _float,
        "beta": _float,
        "price_rule": _choice("clearing", "impact"),
        "expectation_model": _choice("prediction_error", "confidence"),
        "eps_law": _spec,
        "theta_law": _spec,
        "fundamental_value": _float,
        "guess_law": _spec,
        "n_law": _spec,
        "l_law": _spec,
        "p0": _float,
        "demand_sign": _choice("speculative", "law_of_demand"),
        "r0": _float,
        "exact_limit": _int,
    },
    "network": {
        "mode": _choice("opinion_network", "cross_asset"),
        "matrix": _text,
        "jitter_sd": _float,
        "scale_law": _spec,
        "diag_laws": _spec_list,
        "input_laws": _spec_list,
        "coupled": _bool,
    },
    "analysis": {
        "mu_max": _float,
        "tol": _float,
        "mc_budget": _int,
        "hill_k": _int,
        "tail_fraction": _float,
        "kesten_mu": _float,
        "grincevicius_mu_e": _float,
        "grincevicius_quantile": _float,
        "increment_quantile": _float,
        "moment_probe_p": _float,
        "bubble_length": _int,
        "bubble_rho": _float,
        "bubble_b0": _float,
        "feedback_rhos": _float_list,
        "feedback_length": _int,
        "volume_relation": _bool,
        "matrix_exponent": _bool,
        "particles": _int,
        "horizon": _int,
    },
}

ANALYSIS_DEFAULTS = {
    "mu_max": 10.0,
    "tol": 1e-8,
    "mc_budget": 10**6,
    "hill_k": None,
    "tail_fraction": 0.01,
    "kesten_mu": None,
    "grincevicius_mu_e": None,
    "grincevicius_quantile": 0.999,
    "increment_quantile": 0.99,
    "moment_probe_p": None,
    "bubble_length": 0,
    "bubble_rho": None,
    "bubble_b0": None,
    "feedback_rhos": (),
    "feedback_length": 50,
    "volume_relation": False,
    "matrix_exponent": True,
    "particles": 2000,
    "horizon": 50,
}


@dataclass(frozen=True)
class RunConfig:
    length: int = 100_000
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0
    replicas: int = 1


@dataclass
class ScenarioConfig:
    name: str
    path: str
    description: str = ""
    run: RunConfig = field(default_factory=RunConfig)
    recurrence: RecurrenceSpec | None = None
    market: MarketConfig | None = None
    network: MatrixRecurrenceSpec | None = None
    analysis: dict = field(default_factory=lambda: dict(ANALYSIS_DEFAULTS))
    raw: dict = field(default_factory=dict)


@dataclass
class ValidationResult:
    ok: bool
    diagnostics: list
    warnings: list
    config: ScenarioConfig | None = None


# ----------------------------------------------------------------- presets


def preset_names() -> list[str]:
    root = resources.files("kestenmarket") / "presets"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def resolve_path(name_or_path) -> Path:
    """A filesystem path, or the shipped preset of that name."""
    p = Path(name_or_path)
    if p.exists() or p.suffix:
        return p
    root = resources.files("kestenmarket") / "presets"
    candidate = root / f"{name_or_path}.ini"
    if candidate.is_file():
        return Path(str(candidate))
    return p


# ----------------------------------------------------------------- loading


def _unrepr(text):
    try:
        return str(ast.literal_eval(text)).strip()
    except (ValueError, SyntaxError):
        return text.strip()


def _read(path: Path) -> configparser.ConfigParser:
    if not path.is_file():
        raise FileNotFoundError(f"{path}: no such file")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None,
                                       empty_lines_in_values=False)
    try:
        parser.read_string(path.read_text(), source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}: expected a [section] header") from exc
    except configparser.ParsingError as exc:
        lines = "; ".join(f"{path}:{n}: cannot parse {_unrepr(text)!r}" for n, text in exc.errors)
        raise ConfigurationError(lines) from exc
    except configparser.DuplicateOptionError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}: duplicate key {exc.section}.{exc.option}") from exc
    except configparser.DuplicateSectionError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}: duplicate section [{exc.section}]") from exc
    except configparser.Error as exc:
        where = f"{path}:{exc.lineno}" if getattr(exc, "lineno", None) else str(path)
        raise ConfigurationError(f"{where}: {exc.message.splitlines()[0]}") from exc
    return parser


def _parse_sections(parser, path):
    values, errors = {}, []
    for section in parser.sections():
        if section not in SCHEMA:
            errors.append(f"[{section}]: unknown section (expected one of {', '.join(SECTIONS)})")
            continue
        values[section] = {}
        for key, text in parser.items(section):
            if key not in SCHEMA[section]:
                errors.append(f"{section}.{key}: unknown key")
                continue
            try:
                values[section][key] = SCHEMA[section][key](text)
            except (ValueError, ConfigurationError) as exc:
                errors.append(f"{section}.{key}: {exc}")
    if not any(s in values for s in MODEL_SECTIONS):
        errors.append(f"{path}: at least one of [{'], ['.join(MODEL_SECTIONS)}] is required")
    return values, errors


def _build(section, fn, errors):
    try:
        return fn()
    except KestenMarketError as exc:
        errors.append(f"{section}: {exc}")
    except (ValueError, TypeError) as exc:
        errors.append(f"{section}: {exc}")
    return None


def _matrix_from_text(text, base_dir):
    if text.endswith(".csv"):
        p = Path(text)
        if not p.is_absolute():
            p = base_dir / p
        return np.loadtxt(p, delimiter=",", ndmin=2)
    rows = [r for r in text.split(";") if r.strip()]
    return np.array([[float(x) for x in r.split(",")] for r in rows])


def _build_market(v):
    model = v.get("expectation_model", "prediction_error")
    wanted, other = ("eps_law", "theta_law") if model == "prediction_error" else ("theta_law", "eps_law")
    if other in v:
        raise ConfigurationError(f"{other} does not apply to expectation_model = {model}")
    kwargs = {k: v[k] for k in ("alpha", "gamma", "beta", "price_rule", "expectation_model",
                                "fundamental_value", "guess_law", "n_law", "l_law", "p0",
                                "demand_sign", "r0", "exact_limit") if k in v}
    if wanted in v:
        kwargs["expectation_law"] = v[wanted]
    return MarketConfig(**kwargs)


def _build_network(v, base_dir):
    if "matrix" not in v:
        raise ConfigurationError("matrix is required")
    if "input_laws" not in v:
        raise ConfigurationError("input_laws is required")
    entries = _matrix_from_text(v["matrix"], base_dir)
    base = WeightMatrix(entries, v.get("mode", "opinion_network"))
    return MatrixRecurrenceSpec(base, v["input_laws"], v.get("jitter_sd", 0.0),
                                v.get("scale_law"), v.get("diag_laws"), v.get("coupled", False))


def load_config(name_or_path) -> ScenarioConfig:
    """Parse and validate a scenario; raises on the first batch of errors."""
    result = validate_config(name_or_path)
    if not result.ok:
        raise ConfigurationError("; ".join(result.diagnostics))
    return result.config


def validate_config(name_or_path) -> ValidationResult:
    """Full validation: syntax, schema, ranges and cross-field checks."""
    path = resolve_path(name_or_path)
    try:
        parser = _read(path)
    except FileNotFoundError as exc:
        return ValidationResult(False, [f"file not found: {exc}"], [])
    except ConfigurationError as exc:
        return ValidationResult(False, str(exc).split("; "), [])
    values, errors = _parse_sections(parser, path)
    notes = []
    run_v = values.get("run", {})
    run = _build("run", lambda: RunConfig(**{k: run_v[k] for k in ("length", "burn_in", "seed",
                                                                     "replicas") if k in run_v}),
                 errors)
    if run is not None:
        if run.length <= 0:
            errors.append("run.length: must be positive")
        if run.burn_in < 0:
            errors.append("run.burn_in: must be nonnegative")
        if not 0 <= run.seed < dist.MAX_SEED:
            errors.append("run.seed: must be a 64-bit unsigned integer")
        if run.replicas < 1:
            errors.append("run.replicas: must be at least 1")

    rec = mkt = net = None
    if "recurrence" in values:
        v = values["recurrence"]
        missing = [k for k in ("a_law", "input_law") if k not in v]
        if missing:
            errors.append(f"recurrence: missing {', '.join(missing)}")
        else:
            rec = _build("recurrence", lambda: RecurrenceSpec(
                v["a_law"], v["input_law"], v.get("input_mode", "direct"), v.get("lag", 1),
                v.get("r0", 0.0)), errors)
            if rec is not None and rec.lag == 0 and dist.support(rec.a_law)[1] >= 1:
                errors.append("recurrence.a_law: lag 0 needs a feedback law supported below 1")
    if "market" in values:
        mkt = _build("market", lambda: _build_market(values["market"]), errors)
        if mkt is not None and mkt.price_rule == "impact" and mkt.demand_sign == "speculative":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                ea = feedback_mean(mkt, 10**5, dist.RngState(0, 2**63))
            if ea >= 1:
                notes.append(f"market: E a = {ea:.4g} >= 1; the feedback is explosive on average")
    if "network" in values:
        net = _build("network", lambda: _build_network(values["network"], path.parent), errors)

    analysis = dict(ANALYSIS_DEFAULTS)
    analysis.update(values.get("analysis", {}))
    for key in ("mu_max", "tol", "mc_budget", "particles", "horizon"):
        if analysis[key] is not None and analysis[key] <= 0:
            errors.append(f"analysis.{key}: must be positive")
    if not 0 < analysis["tail_fraction"] <= 0.5:
        errors.append("analysis.tail_fraction: must lie in (0, 0.5]")
    for key in ("grincevicius_quantile", "increment_quantile"):
        if not 0 < analysis[key] < 1:
            errors.append(f"analysis.{key}: must lie in (0, 1)")
    if analysis["grincevicius_mu_e"] is not None and rec is None:
        errors.append("analysis.grincevicius_mu_e: needs a [recurrence] section")
    if analysis["volume_relation"] and mkt is None:
        errors.append("analysis.volume_relation: needs a [market] section")
    if analysis["bubble_length"] and mkt is None and analysis["bubble_rho"] is None:
        errors.append("analysis.bubble_rho: required without a [market] section")

    if errors:
        return ValidationResult(False, errors, notes)
    cfg = ScenarioConfig(
        name=run_v.get("name", path.stem), path=str(path),
        description=run_v.get("description", ""), run=run, recurrence=rec, market=mkt,
        network=net, analysis=analysis,
        raw={s: dict(parser.items(s)) for s in parser.sections()},
    )
    return ValidationResult(True, [], notes, cfg)
