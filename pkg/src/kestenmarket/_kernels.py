"""Compiled inner loops for the sequential recursions."""

import numpy as np
from numba import njit


@njit(cache=True)
def lag_one(a, e, r0):
    """``r_t = a_t r_{t-1} + e_t`` from ``r0``."""
    n = a.shape[0]
    out = np.empty(n)
    r = r0
    for t in range(n):
        r = a[t] * r + e[t]
        out[t] = r
    return out


CLEARING = 0
IMPACT_INSTANT = 1
IMPACT_LAGGED = 2
CLEARING_LAW_OF_DEMAND = 3
IMPACT_LAW_OF_DEMAND = 4


@njit(cache=True)
def market_steps(mode, counts, liq, xbar, fbar, alpha, beta, gamma, r0, p0):
    """Sequential price formation for one block of steps.

    ``xbar`` holds the per-step mean expectation term, ``fbar`` the mean
    guess of intrinsic value.  Returns ``(r, q, phibar, prices, bad)`` where
    ``prices`` has one more entry than ``r`` and ``bad`` is the first step
    with ``r <= -1`` (else -1); outputs past ``bad`` are unset.
    """
    n = counts.shape[0]
    r_out = np.empty(n)
    q_out = np.empty(n)
    phi_out = np.empty(n)
    prices = np.empty(n + 1)
    rho = gamma / alpha
    r_prev = r0
    p = p0
    prices[0] = p
    bad = -1
    for t in range(n):
        nt = counts[t]
        phi = 0.0
        if gamma != 0.0:
            phi = (fbar[t] - p) / p
        if mode == CLEARING:
            r = xbar[t] - rho * phi
            q = alpha * nt * (r - xbar[t]) + gamma * nt * phi
        elif mode == IMPACT_INSTANT:
            a = alpha * beta * nt / liq[t]
            q = nt * (alpha * xbar[t] + gamma * phi) / (1.0 - a)
            r = beta * q / liq[t]
        elif mode == IMPACT_LAGGED:
            q = alpha * nt * (r_prev + xbar[t]) + gamma * nt * phi
            r = beta * q / liq[t]
        elif mode == CLEARING_LAW_OF_DEMAND:
            r = rho * phi
            q = gamma * nt * phi - alpha * nt * r
        else:
            a = alpha * beta * nt / liq[t]
            q = gamma * nt * phi / (1.0 + a)
            r = beta * q / liq[t]
        r_out[t] = r
        q_out[t] = q
        phi_out[t] = phi
        if r <= -1.0:
            bad = t
            break
        p = p * (1.0 + r)
        prices[t + 1] = p
        r_prev = r
    return r_out, q_out, phi_out, prices, bad


@njit(cache=True)
def vector_steps(mats, inputs, x0):
    """``x_t = A_t x_{t-1} + e_t`` over a block of steps."""
    steps, n = inputs.shape
    out = np.empty((steps, n))
    x = x0.copy()
    y = np.empty(n)
    for t in range(steps):
        for i in range(n):
            s = inputs[t, i]
            for j in range(n):
                s += mats[t, i, j] * x[j]
            y[i] = s
        for i in range(n):
            x[i] = y[i]
            out[t, i] = y[i]
    return out
