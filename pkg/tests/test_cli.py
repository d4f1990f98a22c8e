import json

import pytest

from spxvix_ot.cli import main
from spxvix_ot.config import (SimulationConfig, TemplateConfig, save_config,
                              simulated_example_config)
from spxvix_ot.calibrator import CalibrationConfig
from spxvix_ot.pipeline import EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, PipelineError, run_pipeline
from spxvix_ot.problem import GridConfig
from spxvix_ot.quotes import black_strip, read_quotes

TINY_GRID = GridConfig(n_x1=21, n_x2=17, dt_days=4.0, refine_factor=2, refine_steps=3)


def tiny_config(tmp_path, **overrides):
    base = dict(template=TemplateConfig((95.0, 105.0), (44.0, 79.0), (25.0,)),
                grid=TINY_GRID,
                calibration=CalibrationConfig(max_rounds=1, inner_early_stop=2, max_outer_iters=4),
                simulation=SimulationConfig(n_paths=500, keep_paths=2, histogram_bins=5),
                output_dir="out")
    base.update(overrides)
    cfg = simulated_example_config(**base)
    path = tmp_path / "config.json"
    save_config(cfg, path)
    return path


@pytest.fixture(scope="module")
def calibrated(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    path = tiny_config(tmp)
    code = main(["calibrate", str(path)])
    return tmp, code


def test_calibrate_writes_artifacts(calibrated, capsys):
    tmp, code = calibrated
    assert code in (EXIT_OK, EXIT_NOT_CONVERGED)
    out = tmp / "out"
    for name in ("quotes.csv", "calibration_table.csv", "beta_star.csv", "beta_reference.csv",
                 "histograms.csv", "trajectories.csv", "report.json"):
        assert (out / name).is_file(), name
    report = json.loads((out / "report.json").read_text())
    assert report["calibration"]["status"] in ("converged", "stalled", "not_converged")
    assert (code == EXIT_NOT_CONVERGED) == (report["calibration"]["status"] == "not_converged")
    assert "mean_xi" in report["diagnostics"]["monte_carlo"]
    assert main(["report", str(out / "report.json")]) == EXIT_OK
    assert "status:" in capsys.readouterr().out


def test_generate_and_price(tmp_path, capsys):
    path = tiny_config(tmp_path)
    assert main(["generate", str(path), "--out", str(tmp_path / "q.csv")]) == EXIT_OK
    rows = read_quotes(tmp_path / "q.csv")
    assert len(rows) == 6
    assert main(["price", str(path), "--method", "implicit"]) == EXIT_OK
    assert (tmp_path / "out" / "reference_prices.csv").is_file()
    assert "spx_call_44d_K95" in capsys.readouterr().out


def test_simulate(tmp_path, capsys):
    path = tiny_config(tmp_path)
    assert main(["simulate", str(path), "--paths", "300", "--seed", "4",
                 "--output-dir", str(tmp_path / "sim")]) == EXIT_OK
    summary = json.loads((tmp_path / "sim" / "simulation.json").read_text())
    assert summary["n_paths"] == 300 and summary["seed"] == 4


def test_infer_x2(tmp_path, capsys):
    lines = ["kind,strike,maturity_days,price"]
    strikes = [50.0 + i for i in range(151)]
    for k, c in zip(strikes, black_strip(100.0, strikes, 0.2, 44 / 365)):
        lines.append(f"spx_call,{k},44,{float(c)!r}")
    (tmp_path / "q.csv").write_text("\n".join(lines) + "\n")
    assert main(["infer-x2", str(tmp_path / "q.csv"), "--maturity-days", "44",
                 "--forward", "100"]) == EXIT_OK
    out = capsys.readouterr().out
    x2 = float(out.split("x2_0:")[1].split()[0])
    assert x2 == pytest.approx(0.5 * 0.04 * 44 / 365, rel=0.02)


def test_errors_exit_with_code_one(tmp_path, capsys):
    assert main(["calibrate", str(tmp_path / "missing.json")]) == EXIT_ERROR
    assert "cannot read" in capsys.readouterr().err
    path = tiny_config(tmp_path, mode="market", instruments="nope.csv")
    assert main(["calibrate", str(path)]) == EXIT_ERROR
    assert "[config]" in capsys.readouterr().err


def test_pipeline_stage_error_names_stage(tmp_path):
    (tmp_path / "q.csv").write_text("kind,strike,maturity_days,price\nspx_call,100,44,-1\n")
    cfg = simulated_example_config(mode="market", instruments=str(tmp_path / "q.csv"),
                                   grid=TINY_GRID, output_dir=str(tmp_path / "o"))
    with pytest.raises(PipelineError, match=r"^\[quotes\]"):
        run_pipeline(cfg, simulate=False)
