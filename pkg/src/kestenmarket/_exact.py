"""Reciprocals evaluated on the decimal literal of the input."""

from decimal import Decimal, localcontext


def dec(x: float) -> Decimal:
    return Decimal(repr(float(x)))


def reciprocal(denominator: Decimal) -> float:
    # 1/(1-0.9) is 10.0 here, not the 10.000000000000002 of binary arithmetic
    with localcontext() as ctx:
        ctx.prec = 50
        return float(Decimal(1) / denominator)


def one_minus_reciprocal(x: float) -> float:
    return reciprocal(1 - dec(x))
