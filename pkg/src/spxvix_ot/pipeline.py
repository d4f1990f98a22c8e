"""End-to-end orchestration: quotes in, calibrated surface and diagnostics out."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .calibrator import NOT_CONVERGED, CalibrationConfig, reference_measure_iteration
from .config import ConfigError, ProblemConfig
from .heston import reference_beta
from .lattice import DAYS_PER_YEAR
from .montecarlo import euler_simulate, terminal_diagnostics, write_histograms, write_trajectories
from .pricing import model_prices
from .problem import CalibrationProblem
from .quotes import (generate_simulated_quotes, instruments_from_quotes, quote_template,
                     read_quotes, write_quotes)

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2

TABLE_COLUMNS = ("instrument", "kind", "maturity_days", "strike", "market_price", "model_price",
                 "price_error", "market_iv", "model_iv", "iv_error_bp", "vega_weight")


class PipelineError(RuntimeError):
    """A stage failure; ``str()`` starts with the stage name."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class PipelineResult:
    exit_code: int
    report: object = None
    artifacts: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)


class _Stage:
    def __init__(self, name):
        self.name = name

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and not isinstance(exc, PipelineError):
            raise PipelineError(self.name, str(exc) or exc_type.__name__) from exc
        return False


def template_from_config(config):
    t = config.template
    return quote_template(t.spx_strikes, t.spx_maturities_days, t.vix_strikes, config.t0_days,
                          vix_future=t.vix_future)


def load_or_generate_quotes(config):
    """Quote rows: read from ``config.instruments`` if set, else generated."""
    if config.instruments is not None:
        config.check_files()
        return read_quotes(config.instruments_path, config.horizon_days), {}
    if config.generating is None:
        raise ConfigError("no instruments file and no generating parameters")
    rows, _, extras = generate_simulated_quotes(config.generating, template_from_config(config),
                                                config.vix_spec, config.x0, config.grid)
    return rows, extras


def build_problem(config, rows):
    instruments = instruments_from_quotes(rows, config.spot)
    return CalibrationProblem.build(instruments, config.vix_spec, config.x0, config.grid)


def write_table(path, quotes):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TABLE_COLUMNS)
        for q in quotes:
            iv_bp = None if q.iv_error is None or not np.isfinite(q.iv_error) else 1e4 * q.iv_error
            w.writerow([q.label, q.kind.value, _fmt(q.maturity * DAYS_PER_YEAR), _fmt(q.strike),
                        _fmt(q.market_price), _fmt(q.model_price), _fmt(q.error),
                        _fmt(q.market_iv), _fmt(q.model_iv), _fmt(iv_bp), _fmt(q.vega_weight)])


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return ""
    return repr(float(v))


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default, allow_nan=False)
        fh.write("\n")


def _clean(value):
    """Replace non-finite floats by None so the report is strict JSON."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def exit_code_for(report):
    return EXIT_NOT_CONVERGED if report.status == NOT_CONVERGED else EXIT_OK


def run_pipeline(config, simulate=True, surface_every=1, progress=None):
    """Run every stage for ``config`` and write artifacts to its output directory.

    Returns a :class:`PipelineResult`; stage failures raise :class:`PipelineError`.
    """
    artifacts = {}
    diagnostics = {}
    with _Stage("config"):
        if not isinstance(config, ProblemConfig):
            raise ConfigError("expected a ProblemConfig")
        config.check_files()
        out = config.output_path
        os.makedirs(out, exist_ok=True)

    with _Stage("quotes"):
        rows, extras = load_or_generate_quotes(config)
        if config.instruments is None:
            artifacts["quotes"] = os.path.join(out, "quotes.csv")
            write_quotes(artifacts["quotes"], rows)
        diagnostics.update({f"generating_{k}": v for k, v in extras.items()})
        problem = build_problem(config, rows)

    with _Stage("calibrate"):
        beta_bar = reference_beta(config.reference, problem.lattice)
        report = reference_measure_iteration(problem, beta_bar, config.calibration,
                                             progress=progress)

    with _Stage("emit"):
        artifacts["table"] = os.path.join(out, "calibration_table.csv")
        write_table(artifacts["table"], report.quotes)
        artifacts["beta_star"] = os.path.join(out, "beta_star.csv")
        report.beta_star.dump_csv(artifacts["beta_star"], every=surface_every)
        artifacts["beta_bar"] = os.path.join(out, "beta_reference.csv")
        report.beta_bar.dump_csv(artifacts["beta_bar"], every=surface_every)

    if simulate:
        with _Stage("simulate"):
            sim = config.simulation
            batch = euler_simulate(report.beta_star, config.x0, problem.lattice.time.nodes,
                                   sim.n_paths, seed=sim.seed, keep_paths=sim.keep_paths,
                                   snapshot_times=(config.vix_spec.t0,))
            mc = terminal_diagnostics(batch, config.x0, config.vix_spec)
            diagnostics["monte_carlo"] = mc
            artifacts["histograms"] = os.path.join(out, "histograms.csv")
            write_histograms(artifacts["histograms"], batch, bins=sim.histogram_bins)
            if sim.keep_paths:
                artifacts["trajectories"] = os.path.join(out, "trajectories.csv")
                write_trajectories(artifacts["trajectories"], batch)

    with _Stage("emit"):
        artifacts["report"] = os.path.join(out, "report.json")
        payload = {"config": config.to_dict(), "calibration": report.to_dict(),
                   "diagnostics": diagnostics, "artifacts": artifacts}
        write_json(artifacts["report"], _clean(payload))

    return PipelineResult(exit_code_for(report), report, artifacts, diagnostics)


def price_reference(config, rows=None, method="adi"):
    """Model quotes under the configured reference surface."""
    if rows is None:
        rows, _ = load_or_generate_quotes(config)
    problem = build_problem(config, rows)
    return model_prices(reference_beta(config.reference, problem.lattice), problem, method)


def simulate_source(config, source="generating"):
    """Monte Carlo under the generating or reference Heston model."""
    spec = config.vix_spec
    if source == "generating":
        if config.generating is None:
            raise ConfigError("no generating parameters in the configuration")
        params = config.generating
    elif config.reference.heston is not None:
        params = config.reference.heston
    else:
        raise ConfigError("the reference is not a Heston model")
    sim = config.simulation
    n_steps = max(1, int(round(config.horizon_days / config.grid.dt_days)))
    times = np.linspace(0.0, spec.big_t, n_steps + 1)
    t0_idx = int(np.argmin(np.abs(times - spec.t0)))
    times[t0_idx] = spec.t0
    batch = euler_simulate((params, spec.big_t), config.x0, times, sim.n_paths, seed=sim.seed,
                           keep_paths=sim.keep_paths, snapshot_times=(spec.t0,))
    return batch, terminal_diagnostics(batch, config.x0, spec)


def with_overrides(config, **overrides):
    """Copy of ``config`` with calibration settings replaced (``None`` keeps the value)."""
    cal = config.calibration.to_dict()
    cal.update({k: v for k, v in overrides.items() if v is not None})
    return ProblemConfig(**{**config.__dict__, "calibration": CalibrationConfig(**cal)})

