import math

import numpy as np
import pytest
from scipy.stats import norm

from common import GENERATING, SPEC, X0, X2_0, exact_vix_prices, random_gamma_surface
from spxvix_ot.heston import HestonParams, heston_surface
from spxvix_ot.lattice import GridError, days
from spxvix_ot.payoffs import Instrument, InstrumentKind
from spxvix_ot.pricing import (PricingError, backward_sweep, heston_cf_price, model_prices,
                               price_at_origin, solve_pricing_pde)
from spxvix_ot.problem import CalibrationProblem, GridConfig

DESK = GridConfig()


@pytest.fixture(scope="module")
def desk_quotes():
    strikes = [95.0, 100.0, 105.0]
    ins = [Instrument(InstrumentKind.SPX_CALL, days(44), 0.0, strike=k) for k in strikes]
    ins += [Instrument(InstrumentKind.VIX_FUTURE, SPEC.t0, 0.0)]
    ins += [Instrument(InstrumentKind.VIX_CALL, SPEC.t0, 0.0, strike=k) for k in (20.0, 25.0, 35.0)]
    p = CalibrationProblem.build(ins, SPEC, X0, DESK)
    return model_prices(heston_surface(GENERATING, p.lattice), p, "adi")


@pytest.mark.parametrize("method", ["adi", "implicit"])
def test_constant_and_martingale_payoffs(coarse_problem, rng, method):
    lattice = coarse_problem.lattice
    beta = random_gamma_surface(lattice, rng)
    mat = SPEC.big_t
    one = solve_pricing_pde(beta, lambda x1, x2: np.ones_like(x1), mat, lattice, method)
    assert price_at_origin(one, lattice) == pytest.approx(1.0, abs=1e-6)
    ex = solve_pricing_pde(beta, lambda x1, x2: np.exp(x1), mat, lattice, method)
    assert price_at_origin(ex, lattice) == pytest.approx(math.exp(X0[0]), rel=1e-3)


def test_maturity_must_be_a_node(coarse_problem):
    beta = heston_surface(GENERATING, coarse_problem.lattice)
    with pytest.raises(GridError):
        solve_pricing_pde(beta, lambda a, b: a, 0.1234, coarse_problem.lattice)
    with pytest.raises(ValueError):
        backward_sweep(beta, coarse_problem.lattice, {}, method="crank")
    with pytest.raises(PricingError):
        backward_sweep(beta, coarse_problem.lattice, {})


def test_cf_degenerate_vol_of_vol_is_black():
    v0, t = 0.03, 0.5
    errors = []
    for omega in (0.02, 1e-3, 1e-4):
        params = HestonParams(1.5, 0.05, omega, -0.5)
        var = params.theta * t + (v0 - params.theta) * (1 - math.exp(-params.kappa * t)) / params.kappa
        d1 = (math.log(100 / 95) + 0.5 * var) / math.sqrt(var)
        black = 100 * norm.cdf(d1) - 95 * norm.cdf(d1 - math.sqrt(var))
        errors.append(abs(heston_cf_price(params, 100.0, 95.0, t, v0=v0) - black))
    assert errors[0] > errors[1] > errors[2]
    assert errors[2] < 1e-4


def test_cf_put_call_parity():
    for k in (80.0, 100.0, 120.0):
        c = heston_cf_price(GENERATING, 100.0, k, days(44), x2_0=X2_0, horizon=SPEC.big_t)
        p = heston_cf_price(GENERATING, 100.0, k, days(44), x2_0=X2_0, horizon=SPEC.big_t, call=False)
        assert c - p == pytest.approx(100.0 - k, abs=1e-8)
    with pytest.raises(ValueError):
        heston_cf_price(GENERATING, 100.0, 100.0, 0.1)


def test_pde_matches_cf_oracle(desk_quotes):
    cf = heston_cf_price(GENERATING, 100.0, 100.0, days(44), x2_0=X2_0, horizon=SPEC.big_t)
    pde = desk_quotes[1].model_price
    assert pde == pytest.approx(cf, rel=0.02)


def test_vix_prices_match_exact_law(desk_quotes):
    future, calls = exact_vix_prices(GENERATING, X2_0, SPEC.t0, SPEC.big_t, [20.0, 25.0])
    by = {q.label: q.model_price for q in desk_quotes}
    assert by["vix_future_49d"] == pytest.approx(future, rel=0.01)
    assert by["vix_call_49d_K20"] == pytest.approx(calls[0], rel=0.03)
    assert by["vix_call_49d_K25"] == pytest.approx(calls[1], rel=0.05)


def test_vix_prices_near_reference_values(desk_quotes):
    by = {q.label: q.model_price for q in desk_quotes}
    assert by["vix_future_49d"] == pytest.approx(29.1285, rel=0.01)
    assert by["vix_call_49d_K20"] == pytest.approx(9.5850, rel=0.02)
    assert by["singular_79d"] <= 1e-4


def test_prices_decrease_in_strike(desk_quotes):
    spx = [q.model_price for q in desk_quotes if q.kind is InstrumentKind.SPX_CALL]
    vix = [q.model_price for q in desk_quotes if q.kind is InstrumentKind.VIX_CALL]
    assert np.all(np.diff(spx) < 0) and np.all(np.diff(vix) < 0)


def test_quotes_carry_implied_vols(desk_quotes):
    for q in desk_quotes:
        if q.kind.is_spx or q.kind.is_vix_option:
            assert q.model_iv > 0
        else:
            assert q.model_iv is None


@pytest.mark.slow
def test_adi_and_implicit_agree():
    ins = [Instrument(InstrumentKind.SPX_CALL, days(44), 0.0, strike=100.0)]
    p = CalibrationProblem.build(ins, SPEC, X0, GridConfig(dt_days=0.25))
    beta = heston_surface(GENERATING, p.lattice)
    adi, imp = (model_prices(beta, p, m)[0].model_price for m in ("adi", "implicit"))
    assert adi == pytest.approx(imp, rel=2e-3)
