import math

import numpy as np
import pytest

from common import COARSE, GENERATING, SPEC, X0
from spxvix_ot.black import black_price
from spxvix_ot.payoffs import InstrumentKind
from spxvix_ot.quotes import (QuoteError, QuoteRow, black_strip, generate_simulated_quotes,
                              infer_x2_0, instruments_from_quotes, quote_template, read_quotes,
                              validate_quotes, write_quotes)

ROWS = [
    QuoteRow(InstrumentKind.SPX_CALL, 100.0, 44.0, 4.1, 0.25),
    QuoteRow(InstrumentKind.SPX_PUT, 95.0, 79.0, 2.2),
    QuoteRow(InstrumentKind.VIX_FUTURE, None, 49.0, 29.1),
    QuoteRow(InstrumentKind.VIX_CALL, 25.0, 49.0, 5.3),
]


def test_csv_round_trip(tmp_path):
    path = tmp_path / "q.csv"
    write_quotes(path, ROWS)
    assert read_quotes(path, horizon_days=79.0) == ROWS


@pytest.mark.parametrize("text, fragment", [
    ("kind,strike,maturity_days,price\nspx_call,100,44,-1\n", "row 1"),
    ("kind,strike,maturity_days,price\nspx_call,,44,1\n", "needs a positive strike"),
    ("kind,strike,maturity_days,price\nbond,100,44,1\n", "row 1"),
    ("kind,strike,maturity_days,price\nspx_call,100,44,1\nspx_call,100,44,2\n", "duplicate"),
    ("kind,strike,maturity_days,price\nspx_call,100,90,1\n", "beyond horizon"),
    ("kind,strike,maturity_days,price\nsingular,,79,0\n", "added automatically"),
    ("kind,strike,price\nspx_call,100,1\n", "missing columns"),
])
def test_bad_csv_rejected(tmp_path, text, fragment):
    path = tmp_path / "q.csv"
    path.write_text(text)
    with pytest.raises(QuoteError, match=fragment):
        read_quotes(path, horizon_days=79.0)


def test_instruments_use_quoted_or_implied_vol():
    ins = instruments_from_quotes(ROWS, 100.0)
    assert [i.kind for i in ins] == [r.kind for r in ROWS]
    assert ins[0].implied_vol == 0.25
    put = ins[1]
    assert black_price(100.0, 95.0, put.implied_vol, 79 / 365, call=False) == pytest.approx(2.2, abs=1e-9)
    assert ins[2].vega_weight == 1.0
    with pytest.raises(QuoteError, match="no implied vol"):
        instruments_from_quotes([QuoteRow(InstrumentKind.SPX_CALL, 100.0, 44.0, 200.0)], 100.0)


@pytest.mark.parametrize("vol, tau", [(0.2, 0.25), (0.35, 0.12)])
def test_infer_x2_from_flat_strip(vol, tau):
    strikes = np.linspace(40.0, 250.0, 400)
    x2, wing = infer_x2_0(strikes, black_strip(100.0, strikes, vol, tau), 100.0)
    # a flat-vol log contract pays half the integrated variance
    assert x2 == pytest.approx(0.5 * vol**2 * tau, rel=2e-3)
    assert 0 <= wing < 1e-3


def test_infer_x2_parity_sides_agree():
    strikes = np.linspace(60.0, 160.0, 41)
    calls = black_strip(100.0, strikes, 0.3, 0.2)
    puts = calls - 100.0 + strikes
    a = infer_x2_0(strikes, None, 100.0, calls=calls)
    b = infer_x2_0(strikes, None, 100.0, puts=puts)
    assert a == pytest.approx(b, rel=1e-12)
    with pytest.raises(ValueError):
        infer_x2_0(strikes[:3], calls[:3], 100.0)
    with pytest.raises(ValueError):
        infer_x2_0(strikes[strikes > 110], calls[strikes > 110], 100.0)


def test_template_layout():
    t = quote_template([95, 105], [44, 79], [20], 49)
    assert len(t) == 6
    assert t[4] == (InstrumentKind.VIX_FUTURE, None, 49.0)
    assert len(quote_template([95], [44], [20], 49, vix_future=False)) == 2


def test_generated_quotes_are_consistent():
    t = quote_template([95, 105], [44, 79], [20, 30], 49)
    rows, problem, extras = generate_simulated_quotes(GENERATING, t, SPEC, X0, COARSE)
    assert len(rows) == len(t)
    validate_quotes(rows, 79.0)
    fut = extras["vix_future"]
    assert fut == next(r.price for r in rows if r.kind is InstrumentKind.VIX_FUTURE)
    assert abs(extras["singular_price"]) < 1e-5
    for r in rows:
        if r.kind is InstrumentKind.SPX_CALL:
            assert black_price(100.0, r.strike, r.implied_vol, r.maturity) == pytest.approx(r.price, abs=1e-8)
        if r.kind is InstrumentKind.VIX_CALL:
            assert black_price(fut, r.strike, r.implied_vol, r.maturity) == pytest.approx(r.price, abs=1e-8)
    assert all(math.isfinite(r.price) for r in rows)
