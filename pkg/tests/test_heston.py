import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from common import GENERATING, REFERENCE, SPEC, X2_0
from spxvix_ot.conjugate import min_eigenvalue
from spxvix_ot.heston import (HestonParams, ReferenceKind, ReferenceSpec, heston_characteristics,
                              heston_surface, mean_reversion_factor, reference_beta,
                              variance_from_x2, x2_from_variance)
from spxvix_ot.surfaces import DiffusionSurface

T = SPEC.big_t


def test_mean_reversion_factor_examples():
    assert mean_reversion_factor(T, 0.6, T) == 0.0
    assert mean_reversion_factor(0.0, 1e-12, 1.0) == pytest.approx(1.0, abs=1e-11)
    tau = 79 / 365
    series = sum((-0.6) ** n * tau ** (n + 1) / math.factorial(n + 1) for n in range(30))
    assert mean_reversion_factor(0.0, 0.6, tau) == pytest.approx(series, abs=1e-12)
    with pytest.raises(ValueError):
        mean_reversion_factor(1.1, 0.6, 1.0)


def test_mean_reversion_factor_shape():
    t = np.linspace(0, T, 50)
    a = mean_reversion_factor(t, 0.6, T)
    assert np.all(a[:-1] > 0) and np.all(np.diff(a) < 0)
    assert np.all(a <= T - t + 1e-15)


def test_variance_examples():
    assert variance_from_x2(0.0, 0.5 * 0.09 * T, 0.6, 0.09, T) == pytest.approx(0.09, rel=1e-12)
    nu0 = variance_from_x2(0.0, X2_0, 0.6, 0.09, T)
    a = (1 - math.exp(-0.6 * T)) / 0.6
    assert nu0 > 0
    assert nu0 == pytest.approx((2 * X2_0 - 0.09 * T) / a + 0.09, rel=1e-13)
    with pytest.raises(ValueError):
        variance_from_x2(T, 0.01, 0.6, 0.09, T)
    assert variance_from_x2(0.0, 0.0, 0.6, 0.09, T) == 0.0
    assert variance_from_x2(0.0, 0.0, 0.6, 0.09, T, floor=False) < 0


def test_variance_round_trip(rng):
    nu = rng.uniform(1e-6, 1.0, 1000)
    t = rng.uniform(0, 0.9 * T, 1000)
    back = variance_from_x2(t, x2_from_variance(t, nu, 0.6, 0.09, T), 0.6, 0.09, T)
    np.testing.assert_allclose(back, nu, rtol=1e-12, atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 0.999), st.floats(0, 0.05))
def test_characteristics_psd_and_gamma(frac, x2):
    t = frac * T
    (a1, a2), beta = heston_characteristics(t, x2, GENERATING, T)
    assert a1 == a2 == -0.5 * beta.e11
    assert min_eigenvalue(beta.e11, beta.e12, beta.e22) >= -1e-14 * max(1.0, beta.e11)


def test_perfect_correlation_is_rank_one():
    for eta in (-1.0, 1.0):
        p = HestonParams(0.6, 0.09, 0.4, eta)
        _, b = heston_characteristics(0.01, 0.01, p, T)
        assert b.e11 * b.e22 - b.e12**2 == pytest.approx(0.0, abs=1e-18)


def test_terminal_degeneracy():
    _, b = heston_characteristics(T - 1e-12, 0.0, GENERATING, T)
    assert abs(b.e12) < 1e-10 and abs(b.e22) < 1e-20


def test_params_validation():
    with pytest.raises(ValueError):
        HestonParams(0.0, 0.09, 0.4, 0.0)
    with pytest.raises(ValueError):
        HestonParams(0.6, 0.09, 0.4, 1.5)
    assert not GENERATING.feller


def test_reference_spec_validation():
    with pytest.raises(ValueError):
        ReferenceSpec(ReferenceKind.CONSTANT, constants=(0.01, 0.1, 0.01))
    with pytest.raises(ValueError):
        ReferenceSpec(ReferenceKind.HESTON)
    with pytest.raises(ValueError):
        ReferenceSpec(ReferenceKind.HESTON, heston=GENERATING, constants=(1.0, 0.0, 1.0))


def test_constant_reference_on_scaled_state(coarse_problem):
    spec = ReferenceSpec(ReferenceKind.CONSTANT, constants=(0.09, -0.01, 0.04))
    surface = reference_beta(spec, coarse_problem.lattice)
    for s in surface.scaled_slices():
        np.testing.assert_allclose(s[0], 0.09, rtol=1e-15)
        np.testing.assert_allclose(s[1], -0.01, rtol=1e-15)
        np.testing.assert_allclose(s[2], 0.04, rtol=1e-15)


def test_heston_reference_matches_characteristics(coarse_problem):
    lat = coarse_problem.lattice
    surf = heston_surface(GENERATING, lat)
    k = lat.space.scale_k
    for n in (0, lat.time.n_steps // 2, lat.time.n_steps - 1):
        _, b = heston_characteristics(lat.time.nodes[n], lat.space.x2_axis(n) / k, GENERATING, T)
        np.testing.assert_array_equal(surf[n][0, 3], b.e11)
        np.testing.assert_array_equal(surf[n][1, 3], b.e12)
        np.testing.assert_array_equal(surf[n][2, 3], b.e22)


def test_barred_reference_vanishes_at_horizon():
    assert mean_reversion_factor(T, REFERENCE.kappa, T) == 0.0
    # along the long-run level nu = theta, b12 ~ A and b22 ~ A^2
    t = T * (1 - 1e-9)
    _, b = heston_characteristics(t, 0.5 * REFERENCE.theta * (T - t), REFERENCE, T)
    assert b.e11 == pytest.approx(REFERENCE.theta)
    assert abs(b.e12) < 1e-10 and abs(b.e22) < 1e-20


def test_external_reference_passes_through(coarse_problem):
    surf = DiffusionSurface.constant(coarse_problem.lattice, 0.1, 0.0, 1e-5)
    out = reference_beta(ReferenceSpec(ReferenceKind.EXTERNAL, surface=surf), coarse_problem.lattice)
    assert out is surf
