"""Stochastic feedback recurrences for market returns and their power-law tails."""

from .distributions import (DistributionSpec, RngState, constant, draw, jittered, lognormal,
                            moment, normal, pareto, parse_spec, scaled, two_point, uniform)
from .errors import (ConfigurationError, FeedbackExplosionError, InsufficientDataError,
                     KestenMarketError, LiquidityError, NonstationaryError, NumericError,
                     PreconditionError, PriceCollapseError, SingularMultiplierError,
                     TheoremInapplicableError)
from .kesten import (amplification, check_kesten, grincevicius_predict, levy_regime_check,
                     solve_exponent, tail_ratio)
from .market import (MarketConfig, aggregate_excess_demand, bubble_path, check_market_kesten,
                     feedback_exponent, negative_feedback_path, simulate_market,
                     volume_imbalance_relation)
from .matrix import (MatrixRecurrenceSpec, WeightMatrix, estimate_matrix_exponent,
                     multiplier_matrix, neumann_series, simulate_vector_path, spectral_radius)
from .recurrence import (RecurrenceSpec, check_stationarity, instantaneous_solve,
                         log_abs_increment_diagnostic, mean_multiplier, multiplier,
                         simulate_path, variance_multiplier)
from .tails import hill_band, hill_estimator, moment_probe, rank_regression, wildness_compare

__version__ = "0.1.0"
