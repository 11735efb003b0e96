import math

import numpy as np
import pytest

from conftest import (coarse_narrow_grid, coarse_wide_grid, make_banded_contract,
                      make_benchmark_contract, make_cv_model, make_linear_params,
                      narrow_grid)
from uip_pricer.boundary import BoundaryPolicy
from uip_pricer.closedform import no_claim_value_cv, solve_riccati
from uip_pricer.contracts import ContractSpec, IntervalControl, SwingSpec, swing_contract
from uip_pricer.errors import CflError, ConfigError
from uip_pricer.grid import Grid
from uip_pricer.market import ConstantCorrelationModel
from uip_pricer.solver import (cfl_timestep, riccati_gradient, solve_dual_pde,
                               solve_log_value_pde, solve_no_claim_1d,
                               solve_risk_neutral_pde, solve_uip_pde,
                               uip_from_log_values)


def quiet_model(sigma=0.55, horizon=1.0):
    """Driftless model with constant volatility (pure-diffusion test bed)."""
    return ConstantCorrelationModel(
        mu_f=lambda t, x: 0.0 * np.asarray(x), sigma_f_bar=lambda t, x: 0.3 + 0.0 * np.asarray(x),
        b=lambda t, x: 0.0 * np.asarray(x), sigma=lambda t, x: sigma + 0.0 * np.asarray(x),
        rho=0.5, spot_map=lambda t, x: np.exp(x), horizon=horizon)


def null_contract(horizon=1.0, z_max=1.0):
    """L == 0, Phi == 0: the price of nothing."""
    return ContractSpec(
        payoff=lambda p, z, u: 0.0 * np.asarray(u),
        penalty=lambda p, z: 0.0 * np.asarray(z),
        control=IntervalControl(0.0, 1.0),
        z_domain=(0.0, z_max),
        payoff_slope=lambda p, z: 0.0 * np.asarray(p),
        kind="swing",
        volume_band=(0.0, z_max),
    )


class TestCfl:
    def test_pure_diffusion_bound(self):
        # 0.9 * dx^2 / sigma^2 with sigma = 0.55, dx = 0.05
        grid = Grid(horizon=1.0, n_t=100, x_bounds=((0.0, 5.0),), n_x=(100,),
                    z_max=1.0, n_z=10)
        dt = cfl_timestep(grid, quiet_model(), 0.01, 0.0)
        assert dt == pytest.approx(0.9 * 0.05**2 / 0.3025, rel=1e-12)

    def test_doubling_nodes_quarters_dt(self):
        g1 = Grid(horizon=1.0, n_t=100, x_bounds=((0.0, 5.0),), n_x=(100,),
                  z_max=1.0, n_z=10)
        g2 = Grid(horizon=1.0, n_t=100, x_bounds=((0.0, 5.0),), n_x=(200,),
                  z_max=1.0, n_z=10)
        d1 = cfl_timestep(g1, quiet_model(), 0.01, 0.0)
        d2 = cfl_timestep(g2, quiet_model(), 0.01, 0.0)
        assert d2 == pytest.approx(d1 / 4.0, rel=1e-12)

    def test_never_exceeds_requested_dt(self):
        grid = Grid(horizon=1.0, n_t=4, x_bounds=((0.0, 5.0),), n_x=(4,),
                    z_max=1.0, n_z=4)
        assert cfl_timestep(grid, quiet_model(), 0.01, 0.0) <= grid.dt

    def test_unstable_grid_suggests_minimum(self):
        params = make_linear_params()
        grid = Grid(horizon=1.0, n_t=10, x_bounds=((math.log(0.01), math.log(500)),),
                    n_x=(200,), z_max=1.0, n_z=100)
        with pytest.raises(CflError) as err:
            solve_uip_pde(params.model(), make_benchmark_contract(), 1.0, 0.01,
                          None, grid)
        assert err.value.n_min > 10
        assert "N >=" in str(err.value)


class TestDegenerateInputs:
    def test_zero_position_prices_to_zero(self):
        params = make_linear_params()
        grid = coarse_wide_grid()
        contract = make_benchmark_contract()
        for solver in (lambda: solve_uip_pde(params.model(), contract, 0.0, 0.01, None, grid),
                       lambda: solve_risk_neutral_pde(params.model(), contract, 0.0, grid),
                       lambda: solve_dual_pde(params.model(), contract, 0.0, 0.01, None, grid)):
            surf = solver()
            assert np.max(np.abs(surf.values)) == 0.0

    def test_null_contract_zero_through_all_four_routes(self):
        params = make_linear_params()
        model = params.model()
        grid = coarse_wide_grid()
        contract = null_contract()
        v = solve_uip_pde(model, contract, 1.0, 0.01, None, grid)
        rn = solve_risk_neutral_pde(model, contract, 1.0, grid)
        dual = solve_dual_pde(model, contract, 1.0, 0.01, None, grid)
        j_q = solve_log_value_pde(model, contract, 1.0, 0.01, grid)
        j_0 = solve_log_value_pde(model, contract, 0.0, 0.01, grid)
        via_log = uip_from_log_values(j_q, j_0)
        assert np.max(np.abs(v.values)) == 0.0
        assert np.max(np.abs(rn.values)) == 0.0
        assert np.max(np.abs(dual.values)) < 1e-12
        assert np.max(np.abs(via_log.values)) == 0.0

    def test_grid_must_cover_the_volume_cap(self):
        params = make_linear_params()
        grid = Grid(horizon=1.0, n_t=100, x_bounds=((3.0, 4.0),), n_x=(10,),
                    z_max=0.3, n_z=10)
        with pytest.raises(ConfigError, match="volume cap"):
            solve_uip_pde(params.model(), make_benchmark_contract(), 1.0, 0.01,
                          None, grid)

    def test_terminal_slice_is_exactly_q_phi(self):
        params = make_linear_params()
        grid = coarse_wide_grid()
        contract = make_banded_contract()
        q = 1.7
        surf = solve_uip_pde(params.model(), contract, q, 0.01, None, grid)
        zs = grid.z_nodes
        expected = q * np.asarray(contract._clamped_penalty(1.0, zs))
        terminal = surf.slice_at(1.0)
        assert np.array_equal(terminal, np.broadcast_to(expected, terminal.shape))


class TestLogValueRoute:
    def test_difference_identity_matches_uip_solver(self):
        # coarse version of the two-route identity, exact given the shared
        # gradient table
        params = make_linear_params()
        model = params.model()
        grid = coarse_narrow_grid()
        contract = make_benchmark_contract()
        table = solve_no_claim_1d(model, 0.01, grid)
        j_q = solve_log_value_pde(model, contract, 1.0, 0.01, grid)
        j_0 = solve_log_value_pde(model, contract, 0.0, 0.01, grid)
        v = solve_uip_pde(model, contract, 1.0, 0.01, table.as_callable(), grid)
        diff = uip_from_log_values(j_q, j_0).values - v.values
        assert np.max(np.abs(diff[:, 1:-1, :])) < 1e-9

    def test_no_claim_solve_is_z_free_and_matches_1d(self):
        params = make_linear_params()
        model = params.model()
        grid = coarse_narrow_grid()
        j_0 = solve_log_value_pde(model, null_contract(), 0.0, 0.01, grid)
        spread = j_0.values.max(axis=-1) - j_0.values.min(axis=-1)
        assert np.max(spread) == 0.0
        table = solve_no_claim_1d(model, 0.01, grid)
        stored = grid.stored_indices
        assert np.max(np.abs(j_0.values[:, :, 0] - table.values[stored])) < 1e-12

    def test_cv_one_forward_no_claim_matches_time_integral(self):
        cv = make_cv_model(n_forwards=1, mu=0.05)
        grid = Grid(horizon=1.0, n_t=5000, x_bounds=((-1.0, 1.0), (-1.0, 1.0)),
                    n_x=(4, 4), z_max=1.0, n_z=3, n_stored=11)
        j = solve_log_value_pde(cv, null_contract(), 0.0, 0.01, grid)
        for t in (0.0, 0.5, 0.9):
            sl = j.slice_at(t)
            assert np.max(sl) - np.min(sl) < 1e-12     # constant in (x, z)
            assert sl[0, 0, 0] == pytest.approx(no_claim_value_cv(cv, 0.01, t), abs=1e-4)


class TestDualRoute:
    def test_uncorrelated_small_contract_agrees_with_primal(self):
        # rho = 0 and state-free forward coefficients: identical continuous
        # equations; the residual is the primal-vs-exponential transform
        # stepping difference, O(dt * gamma * v_t^2)
        params = make_linear_params(k=0.0, rho=1e-12, theta=0.0, a=0.01, gamma=2e-4)
        model = params.model()
        spec = SwingSpec(strike=0.0, u_max=1.0, m=0.0, big_m=0.1,
                         penalty_scale=10.0, penalty_kind="upper_only")
        contract = swing_contract(spec, horizon=1.0)
        # the residual is dominated by the exercise switch landing between
        # z-nodes differently in the two routes, so it scales with dz
        grid = Grid(horizon=1.0, n_t=16000, x_bounds=((-1.0, 1.0),), n_x=(40,),
                    z_max=0.4, n_z=40, n_stored=11)
        v = solve_uip_pde(model, contract, 1.0, 2e-4, None, grid)
        dual = solve_dual_pde(model, contract, 1.0, 2e-4, None, grid)
        assert np.max(np.abs(v.values - dual.values)[:, 1:-1, :]) < 1e-6

    def test_dual_requires_constant_correlation_model(self):
        cv = make_cv_model(n_forwards=1)
        grid = Grid(horizon=1.0, n_t=200, x_bounds=((-1, 1), (-1, 1)), n_x=(4, 4),
                    z_max=1.0, n_z=3)
        with pytest.raises(ConfigError, match="constant-correlation"):
            solve_dual_pde(cv, null_contract(), 1.0, 0.01, None, grid)


class TestCompleteMarket:
    def test_two_forward_value_is_homogeneous_in_position(self):
        cv = make_cv_model(n_forwards=2, mu=0.02)
        spec = SwingSpec(strike=1.0, u_max=1.0, m=0.0, big_m=0.5,
                         penalty_scale=100.0, penalty_kind="upper_only")
        contract = swing_contract(spec, horizon=1.0)
        grid = Grid(horizon=1.0, n_t=800, x_bounds=((-1.5, 1.5), (-1.5, 1.5)),
                    n_x=(20, 20), z_max=1.0, n_z=10, n_stored=9)
        v1 = solve_risk_neutral_pde(cv, contract, 1.0, grid)
        v2 = solve_risk_neutral_pde(cv, contract, 2.0, grid)
        scale = np.abs(v2.values - 2.0 * v1.values)
        denom = np.maximum(np.abs(v2.values), 1.0)
        assert np.max(scale / denom) < 1e-12

    def test_uip_collapses_to_classical_price_when_spanned(self):
        cv = make_cv_model(n_forwards=2, mu=0.02)
        spec = SwingSpec(strike=1.0, u_max=1.0, m=0.0, big_m=0.5,
                         penalty_scale=100.0, penalty_kind="upper_only")
        contract = swing_contract(spec, horizon=1.0)
        grid = Grid(horizon=1.0, n_t=800, x_bounds=((-1.5, 1.5), (-1.5, 1.5)),
                    n_x=(20, 20), z_max=1.0, n_z=10, n_stored=9)
        v = solve_uip_pde(cv, contract, 1.0, 0.01, None, grid)
        rn = solve_risk_neutral_pde(cv, contract, 1.0, grid)
        assert np.max(np.abs(v.values - rn.values)) < 1e-12


@pytest.fixture(scope="module")
def surfaces():
    params = make_linear_params()
    model = params.model()
    grid = coarse_narrow_grid()
    contract = make_benchmark_contract()
    j0 = riccati_gradient(solve_riccati(params, steps=1000))
    v = solve_uip_pde(model, contract, 1.0, 0.01, j0, grid)
    rn = solve_risk_neutral_pde(model, contract, 1.0, grid)
    return v, rn


class TestBenchmarkShape:

    def test_price_decreasing_in_volume_increasing_in_log_spot(self, surfaces):
        v, _ = surfaces
        sl = v.slice_at(0.5)[1:-1, :]
        assert np.all(np.diff(sl, axis=1) <= 1e-9)
        assert np.all(np.diff(sl, axis=0) >= -1e-9)

    def test_classical_price_dominates_for_high_log_spot(self, surfaces):
        v, rn = surfaces
        k = int(np.argmin(np.abs(v.t_stored - 0.5)))
        diff = rn.values[k] - v.values[k]
        upper = diff[diff.shape[0] // 2:, :]
        assert np.min(upper) > -1e-6

    def test_position_scaled_price_no_worse_for_smaller_position(self, surfaces):
        params = make_linear_params()
        model = params.model()
        grid = coarse_narrow_grid()
        contract = make_benchmark_contract()
        j0 = riccati_gradient(solve_riccati(params, steps=1000))
        half = solve_uip_pde(model, contract, 0.5, 0.01, j0, grid)
        v, _ = surfaces
        per_unit_half = half.values / 0.5
        assert np.min(per_unit_half - v.values) > -1e-6


class TestExpectationBoundarySolve:
    def test_wide_domain_solve_with_expectation_faces(self):
        params = make_linear_params()
        model = params.model()
        grid = coarse_wide_grid()
        contract = make_benchmark_contract()
        j0 = riccati_gradient(solve_riccati(params, steps=1000))
        bc = BoundaryPolicy(x_min="expectation", x_max="expectation")
        surf = solve_uip_pde(model, contract, 1.0, 0.01, j0, grid, bc)
        assert np.all(np.isfinite(surf.values))
        assert surf.value_at(0.5, 5.0, 0.0) > 0.0

    def test_expectation_faces_rejected_for_log_value_and_dual(self):
        params = make_linear_params()
        grid = coarse_wide_grid()
        bc = BoundaryPolicy(x_max="expectation")
        with pytest.raises(ConfigError, match="expectation"):
            solve_log_value_pde(params.model(), make_benchmark_contract(), 1.0,
                                0.01, grid, bc)
