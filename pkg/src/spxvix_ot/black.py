"""Zero-rate Black formulas on a forward, with a safeguarded implied-vol solver."""
import math

import numpy as np
from scipy.stats import norm


class ImpliedVolError(ValueError):
    pass


def _d1(forward, strike, vol, maturity):
    sd = vol * math.sqrt(maturity)
    return (math.log(forward / strike) + 0.5 * sd * sd) / sd, sd


def black_price(forward, strike, vol, maturity, call=True):
    if forward <= 0 or strike <= 0 or maturity <= 0:
        raise ValueError("forward, strike and maturity must be positive")
    if vol <= 0:
        intrinsic = forward - strike if call else strike - forward
        return max(intrinsic, 0.0)
    d1, sd = _d1(forward, strike, vol, maturity)
    d2 = d1 - sd
    if call:
        return forward * norm.cdf(d1) - strike * norm.cdf(d2)
    return strike * norm.cdf(-d2) - forward * norm.cdf(-d1)


# zero rates: spot-based Black-Scholes is the same formula on the forward
black_scholes_price = black_price


def black_vega(forward, strike, vol, maturity):
    if vol <= 0:
        raise ValueError("vol must be positive")
    d1, _ = _d1(forward, strike, vol, maturity)
    return forward * norm.pdf(d1) * math.sqrt(maturity)


black_scholes_vega = black_vega


def implied_vol(price, forward, strike, maturity, call=True, tol=1e-10, max_iter=100):
    """Invert :func:`black_price` by Newton steps guarded by a bisection bracket."""
    if forward <= 0 or strike <= 0 or maturity <= 0:
        raise ValueError("forward, strike and maturity must be positive")
    intrinsic = max(forward - strike, 0.0) if call else max(strike - forward, 0.0)
    upper = forward if call else strike
    if not (intrinsic - tol <= price < upper):
        raise ImpliedVolError(
            f"price {price} outside no-arbitrage bounds [{intrinsic}, {upper})")
    if price <= intrinsic + tol:
        return 0.0
    lo, hi = 1e-8, 1.0
    while black_price(forward, strike, hi, maturity, call) < price:
        hi *= 2.0
        if hi > 1e4:
            raise ImpliedVolError("implied vol bracket exploded")
    # Brenner-Subrahmanyam start, clipped into the bracket
    vol = min(max(math.sqrt(2 * math.pi / maturity) * price / forward, lo), hi)
    for _ in range(max_iter):
        diff = black_price(forward, strike, vol, maturity, call) - price
        if abs(diff) < tol:
            return vol
        if diff > 0:
            hi = vol
        else:
            lo = vol
        vega = black_vega(forward, strike, vol, maturity)
        step = vol - diff / vega if vega > 1e-14 else -1.0
        vol = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15:
            return vol
    raise ImpliedVolError(f"implied vol did not converge for price {price}")


def implied_vol_or_nan(*args, **kwargs):
    try:
        return implied_vol(*args, **kwargs)
    except (ImpliedVolError, ValueError):
        return float("nan")


def black_price_vec(forward, strike, vol, maturity, call=True):
    """Array version of :func:`black_price` (vol > 0)."""
    forward, strike, vol = np.broadcast_arrays(*map(np.asarray, (forward, strike, vol)))
    sd = vol * np.sqrt(maturity)
    d1 = (np.log(forward / strike) + 0.5 * sd**2) / sd
    d2 = d1 - sd
    if call:
        return forward * norm.cdf(d1) - strike * norm.cdf(d2)
    return strike * norm.cdf(-d2) - forward * norm.cdf(-d1)
