import math

import numpy as np

from spxvix_ot.heston import HestonParams
from spxvix_ot.lattice import days
from spxvix_ot.payoffs import Instrument, InstrumentKind, VixSpec
from spxvix_ot.conjugate import Sym2
from spxvix_ot.problem import GridConfig
from spxvix_ot.surfaces import DiffusionSurface

GENERATING = HestonParams(0.6, 0.09, 0.4, -0.5)
REFERENCE = HestonParams(0.9, 0.04, 0.6, -0.3)
X2_0 = 0.0098
X0 = (math.log(100.0), X2_0)
SPEC = VixSpec(days(49), days(79))
COARSE = GridConfig(n_x1=21, n_x2=17, dt_days=4.0, refine_factor=2, refine_steps=3)


def coarse_instruments(weight=1.0):
    t1, t0 = days(44), days(49)
    return [
        Instrument(InstrumentKind.SPX_CALL, t1, 4.0, strike=100.0, vega_weight=weight),
        Instrument(InstrumentKind.SPX_CALL, SPEC.big_t, 3.0, strike=105.0, vega_weight=weight),
        Instrument(InstrumentKind.VIX_FUTURE, t0, 25.0),
        Instrument(InstrumentKind.VIX_CALL, t0, 3.0, strike=25.0, vega_weight=weight),
    ]


def exact_vix_prices(params, x2_0, t0, big_t, strikes):
    """VIX future and call prices under Heston from the CIR transition law.

    At t0 the model VIX is 100*sqrt(2*X2/(T - t0)) with X2 affine in the
    variance, and the variance at t0 is a scaled noncentral chi-square.
    """
    from scipy import integrate, stats

    kappa, theta, omega = params.kappa, params.theta, params.omega
    a0 = (1 - math.exp(-kappa * big_t)) / kappa
    nu0 = (2 * x2_0 - theta * big_t) / a0 + theta
    c = omega**2 * (1 - math.exp(-kappa * t0)) / (4 * kappa)
    dof = 4 * kappa * theta / omega**2
    nc = nu0 * math.exp(-kappa * t0) / c
    law = stats.ncx2(dof, nc, scale=c)
    tau = big_t - t0
    a_t0 = (1 - math.exp(-kappa * tau)) / kappa

    def vix(nu):
        x2 = 0.5 * (a_t0 * (nu - theta) + theta * tau)
        return 100 * math.sqrt(max(2 * x2 / tau, 0.0))

    def expect(f):
        hi = law.ppf(1 - 1e-13)
        val, _ = integrate.quad(lambda v: f(vix(v)) * law.pdf(v), 0, hi, limit=400,
                                epsabs=1e-12, epsrel=1e-11)
        return val

    future = expect(lambda j: j)
    calls = [expect(lambda j, k=k: max(j - k, 0.0)) for k in strikes]
    return future, calls


def draw(rng, n):
    u = rng.uniform(-3, 3, size=(7, n))
    return (u[0], u[1]), Sym2(u[2], u[3], u[4]), Sym2(*rng.uniform(-3, 3, size=(3, n)))


def random_gamma_surface(lattice, rng, smooth=False):
    """Random PSD diffusion on the scaled state, drift fixed by Gamma."""
    k = lattice.space.scale_k

    def build(_, y2):
        shape = (len(lattice.space.x1_nodes), len(y2))
        l11 = rng.uniform(0.1, 0.4, shape)
        l21 = rng.uniform(-0.1, 0.1, shape)
        l22 = rng.uniform(0.0, 0.2, shape)
        return np.stack([l11**2, l11 * l21 / k, (l21**2 + l22**2) / k**2])

    return DiffusionSurface.from_builder(lattice, build)


def direct_window_mean(block, widths):
    """Mean over the truncated centred box around every entry, by brute force."""
    out = np.empty_like(block)
    halves = [w // 2 for w in widths]
    for idx in np.ndindex(block.shape[0], block.shape[2], block.shape[3]):
        t, i, j = idx
        sl = tuple(slice(max(0, c - h), c + h + 1) for c, h in zip(idx, halves))
        out[t, :, i, j] = block[sl[0], :, sl[1], sl[2]].mean(axis=(0, 2, 3))
    return out
