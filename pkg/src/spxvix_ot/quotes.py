"""Quote tables: CSV ingestion, vega scaling, X2_0 inference and simulated quotes."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .black import black_price, implied_vol_or_nan
from .heston import heston_surface
from .lattice import DAYS_PER_YEAR
from .payoffs import Instrument, InstrumentKind, vega_scale
from .pricing import model_prices
from .problem import CalibrationProblem

QUOTE_COLUMNS = ("kind", "strike", "maturity_days", "price", "implied_vol")


class QuoteError(ValueError):
    pass


@dataclass(frozen=True)
class QuoteRow:
    kind: InstrumentKind
    strike: float | None
    maturity_days: float
    price: float
    implied_vol: float | None = None

    @property
    def maturity(self):
        return self.maturity_days / DAYS_PER_YEAR

    @property
    def key(self):
        return (self.kind, self.strike, round(self.maturity_days, 9))


def _opt_float(text):
    text = (text or "").strip()
    return None if text == "" or text.lower() == "nan" else float(text)


def validate_quotes(rows, horizon_days=None):
    seen = {}
    for n, row in enumerate(rows, start=1):
        if row.kind is InstrumentKind.SINGULAR:
            raise QuoteError(f"row {n}: the singular contract is added automatically")
        if row.price < 0 or not math.isfinite(row.price):
            raise QuoteError(f"row {n}: negative or non-finite price {row.price}")
        if row.maturity_days <= 0:
            raise QuoteError(f"row {n}: maturity must be positive")
        if horizon_days is not None and row.maturity_days > horizon_days + 1e-9:
            raise QuoteError(f"row {n}: maturity {row.maturity_days}d beyond horizon {horizon_days}d")
        needs_strike = row.kind is not InstrumentKind.VIX_FUTURE
        if needs_strike and (row.strike is None or row.strike <= 0):
            raise QuoteError(f"row {n}: {row.kind.value} needs a positive strike")
        if row.key in seen:
            raise QuoteError(f"row {n}: duplicate of row {seen[row.key]} "
                             f"({row.kind.value}, {row.strike}, {row.maturity_days}d)")
        seen[row.key] = n
    return list(rows)


def read_quotes(path, horizon_days=None):
    """Rows of ``kind,strike,maturity_days,price,implied_vol``; row numbers count data rows."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(QUOTE_COLUMNS[:4]) - set(reader.fieldnames or ())
        if missing:
            raise QuoteError(f"{path}: missing columns {sorted(missing)}")
        for n, rec in enumerate(reader, start=1):
            try:
                kind = InstrumentKind(rec["kind"].strip())
                rows.append(QuoteRow(kind, _opt_float(rec["strike"]),
                                     float(rec["maturity_days"]), float(rec["price"]),
                                     _opt_float(rec.get("implied_vol"))))
            except (ValueError, KeyError) as exc:
                raise QuoteError(f"row {n}: {exc}") from exc
    return validate_quotes(rows, horizon_days)


def write_quotes(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QUOTE_COLUMNS)
        for r in rows:
            w.writerow([r.kind.value, "" if r.strike is None else repr(float(r.strike)),
                        repr(float(r.maturity_days)), repr(float(r.price)),
                        "" if r.implied_vol is None else repr(float(r.implied_vol))])


def quote_implied_vol(row, forward, vix_future=None):
    if row.kind.is_spx:
        fwd = forward
    elif row.kind.is_vix_option:
        fwd = vix_future
    else:
        return None
    if fwd is None:
        return None
    call = row.kind in (InstrumentKind.SPX_CALL, InstrumentKind.VIX_CALL)
    return implied_vol_or_nan(row.price, fwd, row.strike, row.maturity, call=call)


def vix_future_level(rows):
    fut = [r.price for r in rows if r.kind is InstrumentKind.VIX_FUTURE]
    return fut[0] if fut else None


def instruments_from_quotes(rows, forward, vix_future=None, vega_floor=0.01):
    """Vega-scaled instruments; missing implied vols are backed out of prices."""
    vix_future = vix_future if vix_future is not None else vix_future_level(rows)
    out = []
    for r in rows:
        ins = Instrument(r.kind, r.maturity, r.price, strike=r.strike)
        if r.kind.is_spx or r.kind.is_vix_option:
            iv = r.implied_vol if r.implied_vol is not None else quote_implied_vol(r, forward, vix_future)
            if iv is None or not np.isfinite(iv):
                raise QuoteError(f"{ins.label}: no implied vol available for vega scaling")
            ins = vega_scale(ins, iv, forward, vix_future, vega_floor)
        out.append(ins)
    return out


def infer_x2_0(strikes, prices, forward, maturity=None, calls=None, puts=None, min_strikes=5):
    """Half the risk-neutral expected quadratic variation from an option strip.

    ``prices`` are call prices (or pass ``calls``/``puts`` explicitly).  Below
    the forward out-of-the-money puts are used, above it calls; a missing
    side comes from parity.  The strip is integrated by trapezoid over
    ``P(k)/k^2`` and extended with flat prices to ``[k_min/2, 2 k_max]``.
    Returns ``(x2_0, wing_fraction)``.
    """
    if forward is None or not forward > 0:
        raise ValueError("a positive forward is required")
    k = np.asarray(strikes, dtype=float)
    if calls is None and puts is None:
        calls = prices
    if len(k) < min_strikes:
        raise ValueError(f"need at least {min_strikes} strikes, got {len(k)}")
    order = np.argsort(k)
    k = k[order]
    c = None if calls is None else np.asarray(calls, dtype=float)[order]
    p = None if puts is None else np.asarray(puts, dtype=float)[order]
    if c is None:
        c = p + forward - k
    if p is None:
        p = c - forward + k
    if not (k[0] < forward < k[-1]):
        raise ValueError("strikes must straddle the forward")
    otm = np.where(k < forward, p, c)
    # split at the forward, interpolating the strip linearly to it
    p_f = np.interp(forward, k, p)
    c_f = np.interp(forward, k, c)
    lo = k < forward
    k_lo = np.append(k[lo], forward)
    v_lo = np.append(otm[lo], p_f)
    k_hi = np.insert(k[~lo], 0, forward)
    v_hi = np.insert(otm[~lo], 0, c_f)
    core = trapezoid(v_lo / k_lo**2, k_lo) + trapezoid(v_hi / k_hi**2, k_hi)
    # flat prices on [k_min/2, k_min] and [k_max, 2 k_max] integrate to P/k_min and C/(2 k_max)
    wing = otm[0] / k[0] + otm[-1] / (2.0 * k[-1])
    total = core + wing
    return float(total), float(wing / total) if total > 0 else 0.0


def quote_template(spx_strikes, spx_maturities_days, vix_strikes, t0_days, vix_future=True,
                   spx_kind=InstrumentKind.SPX_CALL, vix_kind=InstrumentKind.VIX_CALL):
    template = [(spx_kind, float(s), float(m)) for m in spx_maturities_days for s in spx_strikes]
    if vix_future:
        template.append((InstrumentKind.VIX_FUTURE, None, float(t0_days)))
    template += [(vix_kind, float(s), float(t0_days)) for s in vix_strikes]
    return template


def generate_simulated_quotes(params, template, spec, x0, grid=None, method="implicit"):
    """Price a quote template under the Heston generating model on the lattice.

    Returns ``(rows, problem, extras)``: ``problem`` is the lattice-bearing
    problem used for pricing (weights 1) and ``extras`` holds the model VIX
    future and singular-contract prices.  Implied vols are Black-Scholes on
    the spot for SPX and Black on the model VIX future for VIX options.
    """
    instruments = [Instrument(kind, days / DAYS_PER_YEAR, 0.0, strike=strike)
                   for kind, strike, days in template]
    problem = CalibrationProblem.build(instruments, spec, x0, grid)
    quotes = model_prices(heston_surface(params, problem.lattice), problem, method)
    by_label = {q.label: q for q in quotes}
    future = next((q.model_price for q in quotes if q.kind is InstrumentKind.VIX_FUTURE), None)
    rows = []
    for ins in instruments:
        q = by_label[ins.label]
        iv = q.model_iv if q.model_iv is not None and np.isfinite(q.model_iv) else None
        rows.append(QuoteRow(ins.kind, ins.strike, ins.maturity * DAYS_PER_YEAR,
                             q.model_price, iv))
    singular = next(q for q in quotes if q.kind is InstrumentKind.SINGULAR)
    return rows, problem, {"vix_future": future, "singular_price": singular.model_price}


def black_strip(forward, strikes, vol, maturity):
    """Flat-vol call prices (helper for strip tests and examples)."""
    return np.array([black_price(forward, k, vol, maturity) for k in strikes])
