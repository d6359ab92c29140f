"""Exception hierarchy shared by every module."""


class KestenMarketError(Exception):
    """Base class for all errors raised by the package."""


class ConfigurationError(KestenMarketError, ValueError):
    """Invalid distribution parameters, scenario keys or value ranges."""


class SingularMultiplierError(KestenMarketError, ZeroDivisionError):
    """A multiplier (1 - a)^-1 was requested at a singular point."""


class FeedbackExplosionError(KestenMarketError):
    """An instantaneous feedback coefficient reached or exceeded one."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class LiquidityError(KestenMarketError, ValueError):
    """Liquidity must be strictly positive."""


class InsufficientDataError(KestenMarketError):
    """Not enough observations for the requested statistic."""


class NonstationaryError(KestenMarketError):
    """A simulated path overflowed or left the stationary regime."""


class PreconditionError(KestenMarketError):
    """An analytical routine was called outside its domain of validity."""


class TheoremInapplicableError(PreconditionError):
    """The hypotheses of a limit theorem are not satisfied."""


class NumericError(KestenMarketError, ArithmeticError):
    """Iterative numerics failed to converge or produced non-finite values."""


class PriceCollapseError(KestenMarketError):
    """A simulated return reached -100 % or below, so the price would be nonpositive."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
