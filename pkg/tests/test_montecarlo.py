import math

import numpy as np
import pytest

from common import COARSE, GENERATING, REFERENCE, SPEC, X0
from spxvix_ot.montecarlo import (euler_simulate, terminal_diagnostics, write_histograms,
                                  write_trajectories)
from spxvix_ot.problem import CalibrationProblem
from spxvix_ot.surfaces import DiffusionSurface


@pytest.fixture(scope="module")
def lattice(coarse_problem):
    return coarse_problem.lattice


def test_zero_diffusion_paths_stay_put(lattice):
    zero = DiffusionSurface.constant(lattice, 0.0, 0.0, 0.0)
    batch = euler_simulate(zero, X0, lattice.time.nodes, 50, seed=3, keep_paths=5)
    assert np.all(batch.x1 == X0[0]) and np.all(batch.x2 == X0[1])
    assert np.all(batch.trajectories[1] == X0[1])


def test_deterministic_for_a_key(lattice):
    times = np.linspace(0, SPEC.big_t, 30)
    a = euler_simulate((REFERENCE, SPEC.big_t), X0, times, 200, seed=9)
    b = euler_simulate((REFERENCE, SPEC.big_t), X0, times, 200, seed=9)
    c = euler_simulate((REFERENCE, SPEC.big_t), X0, times, 200, seed=10)
    np.testing.assert_array_equal(a.x1, b.x1)
    assert not np.array_equal(a.x1, c.x1)


def test_heston_spot_is_martingale_and_x2_vanishes():
    times = np.linspace(0, SPEC.big_t, 80)
    batch = euler_simulate((GENERATING, SPEC.big_t), X0, times, 100_000, seed=1,
                           snapshot_times=(SPEC.t0,))
    d = terminal_diagnostics(batch, X0, SPEC)
    assert abs(d["mean_exp_x1_T"] - 100.0) <= 3 * d["stderr_exp_x1_T"]
    assert d["mean_xi"] <= 1e-3
    assert 15.0 < d["mean_vix_t0"] < 40.0


def test_constant_surface_matches_gaussian_moments(lattice):
    b11 = 0.04
    const = DiffusionSurface.constant(lattice, b11, 0.0, 0.0)
    batch = euler_simulate(const, X0, lattice.time.nodes, 40_000, seed=5)
    horizon = lattice.time.horizon
    assert batch.x1.var() == pytest.approx(b11 * horizon, rel=0.03)
    # drift -b11/2 in x2 drives it down linearly, floored at zero
    assert np.all(batch.x2 == pytest.approx(max(X0[1] - 0.5 * b11 * horizon, 0.0), abs=1e-15))


def test_rejects_wrong_times(lattice):
    const = DiffusionSurface.constant(lattice, 0.04, 0.0, 0.0)
    with pytest.raises(ValueError):
        euler_simulate(const, X0, np.linspace(0, 1, 5), 10)
    with pytest.raises(ValueError):
        euler_simulate(const, X0, lattice.time.nodes, 0)


def test_writers(tmp_path):
    times = np.linspace(0, SPEC.big_t, 10)
    batch = euler_simulate((REFERENCE, SPEC.big_t), X0, times, 100, seed=2, keep_paths=3,
                           snapshot_times=(SPEC.t0,))
    write_histograms(tmp_path / "h.csv", batch, bins=7)
    lines = (tmp_path / "h.csv").read_text().splitlines()
    assert len(lines) == 1 + 2 * 2 * 7
    write_trajectories(tmp_path / "t.csv", batch)
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 1 + 3 * 10
    no_paths = euler_simulate((REFERENCE, SPEC.big_t), X0, times, 10, seed=2)
    with pytest.raises(ValueError):
        write_trajectories(tmp_path / "u.csv", no_paths)
