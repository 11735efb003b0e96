import math

import numpy as np
import pytest

from uip_pricer.closedform import LinearDynamicsParams
from uip_pricer.contracts import SwingSpec, swing_contract
from uip_pricer.grid import Grid
from uip_pricer.market import CarteaVillaplanaModel


def make_linear_params(k=0.01, theta=8.75, rho=0.5, gamma=0.01, horizon=1.0,
                       a=0.03, sigma_f=0.3, delta=0.4, sigma=0.55):
    return LinearDynamicsParams(a=a, k=k, sigma_f=sigma_f, delta=delta, theta=theta,
                                sigma=sigma, rho=rho, gamma=gamma, horizon=horizon)


def make_benchmark_contract(horizon=1.0):
    """Zero-strike swing with the one-sided overshoot penalty."""
    spec = SwingSpec(strike=0.0, u_max=1.0, m=0.0, big_m=0.5, penalty_scale=1000.0,
                     penalty_kind="upper_only")
    return swing_contract(spec, horizon)


def make_banded_contract(horizon=1.0):
    """Positive-strike swing with the two-sided volume-band penalty."""
    spec = SwingSpec(strike=math.exp(2.5), u_max=1.0, m=0.1, big_m=0.5,
                     penalty_scale=1000.0, penalty_kind="two_sided")
    return swing_contract(spec, horizon)


def make_cv_model(n_forwards=1, rho=0.35, horizon=1.0, mu=0.02):
    mats = (horizon,) if n_forwards == 1 else (horizon, horizon + 1.0)
    return CarteaVillaplanaModel(
        k_c=1.2, k_d=0.3, alpha_c=-0.6, alpha_d=0.8,
        sigma_c=lambda t: 0.4 + 0.1 * t, sigma_d=lambda t: 0.5 - 0.1 * t,
        rho=rho, eta=lambda t: 0.2, mu_f=lambda t: mu,
        maturities=mats, horizon=horizon,
    )


def wide_grid(n_x=200, n_z=100, n_t=640, n_stored=41):
    return Grid(horizon=1.0, n_t=n_t, x_bounds=((math.log(0.01), math.log(500.0)),),
                n_x=(n_x,), z_max=1.0, n_z=n_z, n_stored=n_stored)


def coarse_wide_grid():
    return wide_grid(n_x=100, n_z=50, n_t=320)


def narrow_grid(n_x=200, n_z=100, n_t=10000, n_stored=41):
    return Grid(horizon=1.0, n_t=n_t,
                x_bounds=((math.log(21.6), math.log(73.9)),),
                n_x=(n_x,), z_max=1.0, n_z=n_z, n_stored=n_stored)


def coarse_narrow_grid():
    return narrow_grid(n_x=60, n_z=20, n_t=960)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240803)
