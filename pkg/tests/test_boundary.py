import math

import numpy as np
import pytest
from scipy.integrate import quad

from conftest import make_banded_contract, make_benchmark_contract, make_linear_params
from uip_pricer.boundary import (BoundaryContext, BoundaryPolicy, apply_boundary,
                                 cap_exercise_values, deferred_exercise_values,
                                 full_rate_window_ce, ou_lognormal_mean, ou_moments)
from uip_pricer.errors import ConfigError


def ctx_for(model, contract, t=0.5, q=1.0, gamma=0.0, nx=8, nz=6):
    xs = np.linspace(-1.0, 1.0, nx)
    zs = np.linspace(0.0, 1.0, nz)
    return BoundaryContext(t=t, horizon=1.0, x_nodes=xs, z_nodes=zs,
                           model=model, contract=contract, q=q, gamma=gamma)


class TestFillPolicies:
    def test_constant_slice_unchanged_by_second_difference_zero(self):
        sl = np.full((6, 4), 3.7)
        out = apply_boundary(sl, BoundaryPolicy(), ctx_for(None, None, nx=6, nz=4))
        assert np.array_equal(out, sl)

    def test_second_difference_zero_is_linear_extrapolation(self):
        xs = np.linspace(0.0, 1.0, 6)
        sl = np.tile((2.0 + 5.0 * xs)[:, None], (1, 4))
        sl[0] = -99.0
        sl[-1] = 99.0
        out = apply_boundary(sl, BoundaryPolicy(),
                             ctx_for(None, None, nx=6, nz=4))
        assert np.allclose(out[0], 2.0)
        assert np.allclose(out[-1], 7.0)

    def test_linear_spot_exact_for_values_linear_in_spot(self):
        xs = np.linspace(0.0, 1.0, 6)
        sl = np.tile((1.5 + 4.0 * np.exp(xs))[:, None], (1, 3))
        truth = sl.copy()
        sl[0] = sl[-1] = 0.0
        ctx = BoundaryContext(t=0.5, horizon=1.0, x_nodes=xs,
                              z_nodes=np.linspace(0, 1, 3))
        out = apply_boundary(sl, BoundaryPolicy(x_min="linear_spot", x_max="linear_spot"),
                             ctx)
        assert np.allclose(out, truth, atol=1e-12)

    def test_one_sided_leaves_faces_to_the_kernel(self):
        sl = np.arange(24.0).reshape(6, 4)
        out = apply_boundary(sl, BoundaryPolicy(x_min="one_sided", x_max="one_sided"),
                             ctx_for(None, None, nx=6, nz=4))
        assert np.array_equal(out, sl)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError, match="unknown boundary kind"):
            BoundaryPolicy(x_min="whatever")


class TestOuMoments:
    def test_reduces_to_brownian_for_zero_reversion(self):
        m, v = ou_moments(1.2, 0.7, 0.3, 0.0, 0.5)
        assert m == pytest.approx(1.2 + 0.3 * 0.7)
        assert v == pytest.approx(0.25 * 0.7)

    def test_lognormal_mean_against_quadrature(self):
        # E[e^X] for the affine-drift OU via its transition density
        c0, c1, vol, x0, s = 3.5, -0.4, 0.55, 4.0, 0.6
        mean, var = ou_moments(x0, s, c0, c1, vol)
        density_mean = quad(
            lambda y: math.exp(y) * math.exp(-0.5 * (y - mean) ** 2 / var)
            / math.sqrt(2 * math.pi * var), mean - 12 * math.sqrt(var),
            mean + 12 * math.sqrt(var))[0]
        assert ou_lognormal_mean(x0, s, c0, c1, vol) == pytest.approx(density_mean, rel=1e-9)


class TestExpectationFaces:
    def setup_method(self):
        self.params = make_linear_params(k=0.0, theta=8.75)
        self.model = self.params.model()

    def test_deferred_rule_above_floor_is_penalty_only(self):
        contract = make_banded_contract()
        zs = np.array([0.1, 0.25, 0.5, 0.8])
        row = deferred_exercise_values(self.model, contract, 1.0, 0.5, -4.0, zs, 1.0)
        spot_term = ou_lognormal_mean(-4.0, 0.5, self.model.b_bar_affine.c0,
                                      self.model.b_bar_affine.c1, 0.55)
        expected = contract._clamped_penalty(float(spot_term), zs)
        assert np.allclose(row, expected)

    def test_deferred_rule_below_floor_matches_quadrature_oracle(self):
        contract = make_banded_contract()
        aff = self.model.b_bar_affine
        t, x0, z = 0.5, -4.0, 0.0
        tau = 0.1    # (m - z) / u_max
        oracle = quad(lambda s: ou_lognormal_mean(x0, s - t, aff.c0, aff.c1, 0.55)
                      - math.exp(2.5), 1.0 - tau, 1.0)[0]
        row = deferred_exercise_values(self.model, contract, 1.0, t, x0,
                                       np.array([z]), 1.0)
        assert row[0] == pytest.approx(oracle, rel=1e-9)

    def test_cap_rule_prefers_late_window_when_prices_rise(self):
        contract = make_benchmark_contract()
        zs = np.array([0.3])
        late = full_rate_window_ce(self.model, contract, 1.0, 0.0, 0.5, 6.0, zs,
                                   1.0, np.array([0.8]), np.array([0.2]))
        now = full_rate_window_ce(self.model, contract, 1.0, 0.0, 0.5, 6.0, zs,
                                  1.0, np.array([0.5]), np.array([0.2]))
        row = cap_exercise_values(self.model, contract, 1.0, 0.5, 6.0, zs, 1.0)
        assert late[0] > now[0]
        assert row[0] == pytest.approx(late[0], rel=1e-12)

    def test_window_variance_against_monte_carlo(self):
        contract = make_benchmark_contract()
        aff = self.model.b_bar_affine
        t, x0, tau = 0.5, 6.0, 0.5
        gamma_tilde = 0.0075
        plain = full_rate_window_ce(self.model, contract, 1.0, 0.0, t, x0,
                                    np.array([0.0]), 1.0, np.array([t]), np.array([tau]))
        ce = full_rate_window_ce(self.model, contract, 1.0, gamma_tilde, t, x0,
                                 np.array([0.0]), 1.0, np.array([t]), np.array([tau]))
        implied_var = 2.0 * (plain[0] - ce[0]) / gamma_tilde

        rng = np.random.default_rng(42)
        n, steps = 40000, 200
        dt = tau / steps
        x = np.full(n, x0)
        integral = np.zeros(n)
        for k in range(steps):
            integral += np.exp(x) * dt
            x = x + (aff.c0 + aff.c1 * x) * dt \
                + 0.55 * math.sqrt(dt) * rng.standard_normal(n)
        mc_var = integral.var(ddof=1)
        se = mc_var * math.sqrt(2.0 / (n - 1))
        assert implied_var == pytest.approx(mc_var, abs=4 * se)

    def test_expectation_needs_affine_drift(self):
        from uip_pricer.market import ConstantCorrelationModel
        model = ConstantCorrelationModel(
            mu_f=lambda t, x: 0.03, sigma_f_bar=lambda t, x: 0.3,
            b=lambda t, x: np.sin(np.asarray(x)), sigma=lambda t, x: 0.55,
            rho=0.5, spot_map=lambda t, x: np.exp(x), horizon=1.0)
        with pytest.raises(ConfigError, match="affine"):
            deferred_exercise_values(model, make_benchmark_contract(), 1.0, 0.5,
                                     -4.0, np.array([0.0]), 1.0)

    def test_expectation_needs_swing_form(self):
        from uip_pricer.contracts import StorageSpec, storage_contract
        spec = StorageSpec(k1=1.0, k2=0.1, k3=0.5, z_base=1.0, bleed=0.0,
                           penalty_scale=10.0, big_m=1.0)
        with pytest.raises(ConfigError, match="swing"):
            deferred_exercise_values(self.model, storage_contract(spec, 2.0), 1.0,
                                     0.5, -4.0, np.array([0.0]), 1.0)
