"""Command-line front door: ``spxvix-ot <subcommand> CONFIG [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .config import ConfigError, load_config
from .montecarlo import write_histograms, write_trajectories
from .pipeline import (EXIT_ERROR, EXIT_OK, PipelineError, load_or_generate_quotes, price_reference,
                       run_pipeline, simulate_source, with_overrides, write_json, write_table)
from .quotes import QuoteError, infer_x2_0, read_quotes, write_quotes
from .payoffs import InstrumentKind

log = logging.getLogger("spxvix_ot")


def _add_config(p):
    p.add_argument("config", help="problem configuration (JSON)")
    p.add_argument("--output-dir", help="override the configured output directory")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spxvix-ot",
        description="Joint SPX/VIX calibration by semimartingale optimal transport.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress (-vv for every L-BFGS iteration)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="price the quote template under the generating model")
    _add_config(p)
    p.add_argument("--out", help="quotes CSV (default: <output_dir>/quotes.csv)")

    p = sub.add_parser("calibrate", help="run the full calibration pipeline")
    _add_config(p)
    p.add_argument("--max-rounds", type=int, help="reference-measure rounds cap")
    p.add_argument("--eps1", type=float, help="gradient tolerance (vega-scaled units)")
    p.add_argument("--eps2", type=float, help="policy iteration tolerance")
    p.add_argument("--inner-iters", type=int, help="L-BFGS iterations per early-stopped round")
    p.add_argument("--no-simulate", action="store_true", help="skip the Monte Carlo diagnostics")
    p.add_argument("--surface-every", type=int, default=1,
                   help="dump every n-th time slice of the surfaces")

    p = sub.add_parser("price", help="price the quotes under the reference model")
    _add_config(p)
    p.add_argument("--method", choices=("adi", "implicit"), default="adi")

    p = sub.add_parser("simulate", help="Monte Carlo diagnostics under a Heston model")
    _add_config(p)
    p.add_argument("--source", choices=("generating", "reference"), default="generating")
    p.add_argument("--paths", type=int, help="number of paths")
    p.add_argument("--seed", type=int, help="generator key")

    p = sub.add_parser("infer-x2", help="estimate X2_0 from an SPX option strip")
    p.add_argument("quotes", help="quotes CSV")
    p.add_argument("--maturity-days", type=float, required=True)
    p.add_argument("--forward", type=float, required=True)

    p = sub.add_parser("report", help="print a calibration report")
    p.add_argument("report", help="report.json written by calibrate")
    return parser


def _config(args):
    config = load_config(args.config)
    if getattr(args, "output_dir", None):
        config.output_dir = os.path.abspath(args.output_dir)
    return config


def cmd_generate(args):
    config = _config(args)
    if config.generating is None:
        raise ConfigError("generate needs generating Heston parameters")
    config.instruments = None
    rows, extras = load_or_generate_quotes(config)
    path = args.out or os.path.join(config.output_path, "quotes.csv")
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    write_quotes(path, rows)
    print(f"wrote {len(rows)} quotes to {path}")
    for k, v in extras.items():
        print(f"{k}: {v:.10g}")
    return EXIT_OK


def cmd_calibrate(args):
    config = with_overrides(_config(args), max_rounds=args.max_rounds, eps1=args.eps1,
                            eps2=args.eps2, inner_early_stop=args.inner_iters)
    result = run_pipeline(config, simulate=not args.no_simulate, surface_every=args.surface_every,
                          progress=log.info)
    rep = result.report
    print(f"status: {rep.status}  rounds: {rep.rounds}  max|gradient|: {rep.max_gradient:.3e}  "
          f"time: {rep.wall_time:.1f}s")
    _print_quotes(rep.to_dict()["quotes"])
    for msg in rep.messages:
        print(f"note: {msg}")
    print(f"report: {result.artifacts['report']}")
    return result.exit_code


def cmd_price(args):
    config = _config(args)
    quotes = price_reference(config, method=args.method)
    os.makedirs(config.output_path, exist_ok=True)
    path = os.path.join(config.output_path, "reference_prices.csv")
    write_table(path, quotes)
    for q in quotes:
        print(f"{q.label:28s} market {q.market_price:12.6f}  model {q.model_price:12.6f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_simulate(args):
    config = _config(args)
    if args.paths is not None:
        config.simulation.n_paths = args.paths
    if args.seed is not None:
        config.simulation.seed = args.seed
    batch, summary = simulate_source(config, args.source)
    out = config.output_path
    os.makedirs(out, exist_ok=True)
    write_json(os.path.join(out, "simulation.json"), summary)
    write_histograms(os.path.join(out, "histograms.csv"), batch, config.simulation.histogram_bins)
    if batch.trajectories is not None:
        write_trajectories(os.path.join(out, "trajectories.csv"), batch)
    for k, v in summary.items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_infer_x2(args):
    rows = read_quotes(args.quotes)
    strip = {}
    for r in rows:
        if r.kind.is_spx and abs(r.maturity_days - args.maturity_days) < 1e-9:
            strip.setdefault(r.strike, {})[r.kind] = r.price
    strikes = np.array(sorted(strip))
    calls, puts = [], []
    for k in strikes:
        c = strip[k].get(InstrumentKind.SPX_CALL)
        p = strip[k].get(InstrumentKind.SPX_PUT)
        # parity fills whichever side is missing
        calls.append(c if c is not None else p + args.forward - k)
        puts.append(p if p is not None else c - args.forward + k)
    x2, wing = infer_x2_0(strikes, None, args.forward, calls=calls, puts=puts)
    print(f"x2_0: {x2:.8g}")
    print(f"wing_fraction: {wing:.4g}")
    return EXIT_OK


def _print_quotes(records):
    print(f"{'instrument':28s} {'market':>12s} {'model':>12s} {'iv err (bp)':>12s}")
    for q in records:
        iv = q.get("iv_error")
        iv_txt = "" if iv is None else f"{1e4 * iv:12.3f}"
        print(f"{q['instrument']:28s} {q['market_price']:12.6f} {q['model_price']:12.6f} {iv_txt}")


def cmd_report(args):
    with open(args.report) as fh:
        payload = json.load(fh)
    cal = payload["calibration"]
    print(f"status: {cal['status']}  rounds: {cal['rounds']}  "
          f"max|gradient|: {cal['max_gradient']:.3e}  time: {cal['wall_time_s']:.1f}s")
    _print_quotes(cal["quotes"])
    mc = payload.get("diagnostics", {}).get("monte_carlo")
    if mc:
        print(f"Monte Carlo mean xi(X_T): {mc['mean_xi']:.3e} +- {mc['stderr_xi']:.1e}")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "calibrate": cmd_calibrate, "price": cmd_price,
            "simulate": cmd_simulate, "infer-x2": cmd_infer_x2, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (PipelineError, ConfigError, QuoteError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: [{args.command}] {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
