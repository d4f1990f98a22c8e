"""scikit-learn style wrapper around the joint calibration."""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .calibrator import CalibrationConfig, reference_measure_iteration
from .heston import HestonParams, ReferenceKind, ReferenceSpec, reference_beta
from .lattice import DAYS_PER_YEAR, days
from .payoffs import Instrument, InstrumentKind, VixSpec
from .pricing import scaled_model_prices
from .problem import CalibrationProblem, GridConfig
from .quotes import QuoteRow, instruments_from_quotes, validate_quotes


def as_quote_rows(X, y=None, implied_vols=None):
    """Quote rows from ``QuoteRow`` objects or ``(kind, strike, maturity_days)`` records."""
    rows = []
    n = len(X)
    if y is not None and len(y) != n:
        raise ValueError(f"X has {n} rows but y has {len(y)}")
    if implied_vols is not None and len(implied_vols) != n:
        raise ValueError("implied_vols must have one entry per row")
    for i, rec in enumerate(X):
        if isinstance(rec, QuoteRow):
            row = rec
            if y is not None:
                row = QuoteRow(row.kind, row.strike, row.maturity_days, float(y[i]), row.implied_vol)
        else:
            if len(rec) != 3:
                raise ValueError(f"row {i + 1}: expected (kind, strike, maturity_days)")
            kind, strike, mat = rec
            strike = None if strike is None or (isinstance(strike, float) and math.isnan(strike)) \
                else float(strike)
            price = 0.0 if y is None else float(y[i])
            row = QuoteRow(InstrumentKind(kind), strike, float(mat), price)
        if implied_vols is not None and implied_vols[i] is not None:
            row = QuoteRow(row.kind, row.strike, row.maturity_days, row.price, float(implied_vols[i]))
        rows.append(row)
    return rows


class JointCalibrator(BaseEstimator):
    """Calibrate a two-factor diffusion for (log SPX, half expected forward QV) to quotes.

    ``fit(X, y)`` takes instrument records ``(kind, strike, maturity_days)``
    and their prices; ``predict(X)`` prices any records whose maturities are
    nodes of the fitted time grid under the calibrated diffusion.
    """

    def __init__(self, spot=100.0, x2_0=0.0098, t0_days=49.0, horizon_days=79.0,
                 reference=(0.9, 0.04, 0.6, -0.3), reference_kind="heston", grid=None,
                 eps1=1e-4, eps2=1e-8, max_rounds=20, inner_early_stop=5, max_outer_iters=200,
                 smoothing_bandwidths=(3, 5, 5), pricing_method="implicit"):
        self.spot = spot
        self.x2_0 = x2_0
        self.t0_days = t0_days
        self.horizon_days = horizon_days
        self.reference = reference
        self.reference_kind = reference_kind
        self.grid = grid
        self.eps1 = eps1
        self.eps2 = eps2
        self.max_rounds = max_rounds
        self.inner_early_stop = inner_early_stop
        self.max_outer_iters = max_outer_iters
        self.smoothing_bandwidths = smoothing_bandwidths
        self.pricing_method = pricing_method

    def _reference_spec(self):
        if self.reference_kind == "heston":
            params = self.reference if isinstance(self.reference, HestonParams) \
                else HestonParams(*self.reference)
            return ReferenceSpec(ReferenceKind.HESTON, heston=params)
        if self.reference_kind == "constant":
            return ReferenceSpec(ReferenceKind.CONSTANT, constants=tuple(self.reference))
        raise ValueError(f"unknown reference_kind {self.reference_kind!r}")

    def _config(self):
        return CalibrationConfig(eps1=self.eps1, eps2=self.eps2, max_rounds=self.max_rounds,
                                 inner_early_stop=self.inner_early_stop,
                                 max_outer_iters=self.max_outer_iters,
                                 smoothing_bandwidths=self.smoothing_bandwidths,
                                 pricing_method=self.pricing_method)

    def _validate(self):
        if not self.spot > 0 or not self.x2_0 > 0:
            raise ValueError("spot and x2_0 must be positive")
        return VixSpec(days(self.t0_days), days(self.horizon_days))

    def fit(self, X, y, implied_vols=None):
        spec = self._validate()
        rows = validate_quotes(as_quote_rows(X, y, implied_vols), self.horizon_days)
        instruments = instruments_from_quotes(rows, self.spot)
        x0 = (math.log(self.spot), self.x2_0)
        grid = self.grid if self.grid is not None else GridConfig()
        problem = CalibrationProblem.build(instruments, spec, x0, grid)
        beta_bar = reference_beta(self._reference_spec(), problem.lattice)
        report = reference_measure_iteration(problem, beta_bar, self._config())
        self.problem_ = problem
        self.report_ = report
        self.beta_star_ = report.beta_star
        self.multipliers_ = report.multipliers
        self.status_ = report.status
        self.n_rounds_ = report.rounds
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        """Model prices of the records in ``X`` under the calibrated diffusion."""
        check_is_fitted(self, "beta_star_")
        rows = as_quote_rows(X)
        instruments = [Instrument(r.kind, r.maturity_days / DAYS_PER_YEAR, 0.0, strike=r.strike)
                       for r in rows]
        problem = self.problem_.with_instruments(instruments)
        prices = scaled_model_prices(self.beta_star_, problem, self.pricing_method)
        by_label = {ins.label: float(p) for ins, p in zip(problem.instruments, prices)}
        return np.array([by_label[ins.label] for ins in instruments])

    def score(self, X, y):
        """Negative largest absolute price error (higher is better)."""
        return -float(np.max(np.abs(self.predict(X) - np.asarray(y, dtype=float))))
