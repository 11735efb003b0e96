"""Acceptance suite: one test per criterion, one printed pass/fail line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the criterion lines.
Heavy solves are shared through module-scoped fixtures.

Criteria 1b and 2b reproduce published table values within 5%.  The shipped
configuration reproduces the published risk-aversion sensitivity profile and
the correlation ordering, but the published tables are mutually inconsistent
with any single affine-drift factor model (see the analysis in the project
notes); those two sub-criteria are therefore expected to fail partially and
report the measured deviations honestly.
"""

import math
import time

import numpy as np
import pytest

from conftest import (make_banded_contract, make_benchmark_contract, make_cv_model,
                      make_linear_params, narrow_grid, wide_grid)
from uip_pricer.boundary import BoundaryPolicy
from uip_pricer.closedform import solve_riccati
from uip_pricer.contracts import SwingSpec, swing_contract
from uip_pricer.grid import Grid
from uip_pricer.solver import (riccati_gradient, solve_dual_pde, solve_log_value_pde,
                               solve_no_claim_1d, solve_risk_neutral_pde,
                               solve_uip_pde, uip_from_log_values)
from uip_pricer.strategies import exercise_policy, hedge_strategy
from uip_pricer.verification import DPConfig, dp_value

TABLE1_PROBE = (0.5, 6.1903, 0.4178)
TABLE2_PROBE = (0.5, 6.0931, 0.0)
TABLE1_REFERENCE = {0.01: 54.8927, 0.02: 52.9527, 0.04: 48.3202,
                    0.06: 43.5541, 0.08: 39.9692, 0.10: 37.7116}
TABLE2_REFERENCE = {0.01: 283.6143, 0.25: 287.3581, 0.50: 300.0573,
                    0.75: 322.1527, 0.99: 350.3785}
SWEEP_BC = BoundaryPolicy(x_min="expectation", x_max="expectation")


def report(criterion, passed, detail=""):
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")


def sweep_probe(gamma, rho, grid, probe):
    params = make_linear_params(rho=rho, gamma=gamma)
    model = params.model()
    contract = make_benchmark_contract()
    j0 = riccati_gradient(solve_riccati(params, steps=2000))
    surf = solve_uip_pde(model, contract, 1.0, gamma, j0, grid, SWEEP_BC)
    return surf.value_at(*probe)


@pytest.fixture(scope="module")
def table1_values():
    grid = wide_grid(n_x=200, n_z=100, n_t=640)
    out = {}
    for gamma in TABLE1_REFERENCE:
        t0 = time.perf_counter()
        out[gamma] = (sweep_probe(gamma, 0.5, grid, TABLE1_PROBE),
                      time.perf_counter() - t0)
    return out


@pytest.fixture(scope="module")
def table1_refined():
    grid = wide_grid(n_x=400, n_z=100, n_t=2560)
    return {g: sweep_probe(g, 0.5, grid, TABLE1_PROBE) for g in TABLE1_REFERENCE}


@pytest.fixture(scope="module")
def table2_values():
    grid = wide_grid(n_x=200, n_z=100, n_t=640)
    return {r: sweep_probe(0.01, r, grid, TABLE2_PROBE) for r in TABLE2_REFERENCE}


@pytest.fixture(scope="module")
def table2_refined():
    grid = wide_grid(n_x=400, n_z=100, n_t=2560)
    return {r: sweep_probe(0.01, r, grid, TABLE2_PROBE) for r in TABLE2_REFERENCE}


@pytest.fixture(scope="module")
def benchmark_solves():
    """Narrow-domain benchmark solves shared by criteria 3 and 10."""
    params = make_linear_params()
    model = params.model()
    grid = narrow_grid(n_x=200, n_z=100, n_t=10000)
    contract = make_benchmark_contract()
    table = solve_no_claim_1d(model, 0.01, grid)
    j_claim = solve_log_value_pde(model, contract, 1.0, 0.01, grid)
    j_none = solve_log_value_pde(model, contract, 0.0, 0.01, grid)
    v = solve_uip_pde(model, contract, 1.0, 0.01, table.as_callable(), grid)
    return params, model, grid, contract, table, j_claim, j_none, v


class TestCriterion01Table1:
    def test_01a_strictly_decreasing_in_risk_aversion(self, table1_values):
        vals = [table1_values[g][0] for g in sorted(TABLE1_REFERENCE)]
        passed = all(a > b for a, b in zip(vals, vals[1:]))
        report("1a", passed, "UIP strictly decreasing across the gamma sweep: "
               + ", ".join(f"{v:.4f}" for v in vals))
        assert passed

    def test_01b_values_within_five_percent_of_reference(self, table1_values):
        errs = {g: table1_values[g][0] / ref - 1.0
                for g, ref in TABLE1_REFERENCE.items()}
        detail = ", ".join(f"gamma={g}: {100 * e:+.1f}%" for g, e in errs.items())
        passed = all(abs(e) <= 0.05 for e in errs.values())
        report("1b", passed, detail)
        assert passed, (
            "table-1 reproduction outside 5%: " + detail
            + " (published tables are mutually inconsistent with any affine-drift "
              "factor model; see notes)"
        )

    def test_01c_self_convergence_under_grid_doubling(self, table1_values,
                                                      table1_refined):
        rel = {g: abs(table1_values[g][0] / table1_refined[g] - 1.0)
               for g in TABLE1_REFERENCE}
        passed = all(r <= 0.01 for r in rel.values())
        report("1c", passed, ", ".join(f"gamma={g}: {100 * r:.2f}%"
                                       for g, r in rel.items()))
        assert passed

    def test_01d_runtime_under_five_minutes_per_gamma(self, table1_values):
        worst = max(w for _, w in table1_values.values())
        passed = worst < 300.0
        report("1d", passed, f"slowest gamma solve {worst:.1f}s (target < 300s)")
        assert passed


class TestCriterion02Table2:
    def test_02a_strictly_increasing_in_correlation(self, table2_values):
        vals = [table2_values[r] for r in sorted(TABLE2_REFERENCE)]
        passed = all(a < b for a, b in zip(vals, vals[1:]))
        report("2a", passed, "UIP strictly increasing across the rho sweep: "
               + ", ".join(f"{v:.4f}" for v in vals))
        assert passed

    def test_02b_values_within_five_percent_of_reference(self, table2_values):
        errs = {r: table2_values[r] / ref - 1.0 for r, ref in TABLE2_REFERENCE.items()}
        detail = ", ".join(f"rho={r}: {100 * e:+.1f}%" for r, e in errs.items())
        passed = all(abs(e) <= 0.05 for e in errs.values())
        report("2b", passed, detail)
        assert passed, (
            "table-2 reproduction outside 5%: " + detail
            + " (published tables are mutually inconsistent with any affine-drift "
              "factor model; see notes)"
        )

    def test_02c_self_convergence_under_grid_doubling(self, table2_values,
                                                      table2_refined):
        rel = {r: abs(table2_values[r] / table2_refined[r] - 1.0)
               for r in TABLE2_REFERENCE}
        passed = all(x <= 0.01 for x in rel.values())
        report("2c", passed, ", ".join(f"rho={r}: {100 * x:.2f}%"
                                       for r, x in rel.items()))
        assert passed


class TestCriterion03TwoRouteIdentity:
    def test_03_log_value_difference_matches_price_equation(self, benchmark_solves):
        *_, j_claim, j_none, v = benchmark_solves
        via_log = uip_from_log_values(j_claim, j_none)
        err = float(np.max(np.abs((via_log.values - v.values)[:, 1:-1, :])))
        passed = err <= 1e-3
        report("3", passed, f"max-abs interior difference {err:.2e} (tol 1e-3)")
        assert passed


class TestCriterion04DualEquivalence:
    def test_04_exponential_transform_route_agrees(self):
        params = make_linear_params(k=0.0)
        model = params.model()
        contract = make_benchmark_contract()
        grid = narrow_grid(n_x=200, n_z=500, n_t=10400)
        v = solve_uip_pde(model, contract, 1.0, 0.01, None, grid)
        dual = solve_dual_pde(model, contract, 1.0, 0.01, None, grid)
        rel = np.abs(v.values - dual.values)[:, 1:-1, :] \
            / np.maximum(np.abs(v.values[:, 1:-1, :]), 1.0)
        err = float(rel.max())
        passed = err <= 1e-3
        report("4", passed, f"max relative difference {err:.2e} (tol 1e-3, floor 1)")
        assert passed


class TestCriterion05ClosedFormOracle:
    def test_05a_no_claim_solve_matches_riccati_ansatz(self):
        params = make_linear_params(k=0.01)
        model = params.model()
        contract = make_benchmark_contract()
        sol = solve_riccati(params, steps=10_000)
        grid = Grid(horizon=1.0, n_t=20_000,
                    x_bounds=((math.log(0.01), math.log(500.0)),),
                    n_x=(200,), z_max=1.0, n_z=8, n_stored=41)
        bc = BoundaryPolicy(x_min="one_sided", x_max="one_sided")
        j = solve_log_value_pde(model, contract, 0.0, 0.01, grid, bc)
        xs = grid.x_nodes(0)
        err = max(float(np.max(np.abs(j.values[k][1:-1, 0] - sol.value(t, xs)[1:-1])))
                  for k, t in enumerate(j.t_stored))
        passed = err <= 1e-3
        report("5a", passed, f"q=0 solve vs quadratic ansatz, max-abs {err:.2e}")
        assert passed

    def test_05b_riccati_matches_independent_half_step_integrator(self):
        from test_closedform import ode_rhs_for, rk4_backward
        params = make_linear_params(k=0.01)
        sol = solve_riccati(params, steps=10_000)
        _, oracle = rk4_backward(ode_rhs_for(params),
                                 np.array([math.log(0.01) / 0.01, 0.0, 0.0]),
                                 1.0, 20_000)
        tab = np.column_stack([sol.const_tab, sol.lin_tab, sol.quad_tab])
        err = float(np.max(np.abs(tab - oracle[::2])))
        passed = err <= 1e-8
        report("5b", passed, f"fixed-step vs half-step integrator, max-abs {err:.2e}")
        assert passed


class TestCriterion06CompleteMarketHomogeneity:
    def test_06_two_forward_value_scales_linearly_in_position(self):
        cv = make_cv_model(n_forwards=2, mu=0.02)
        spec = SwingSpec(strike=1.0, u_max=1.0, m=0.0, big_m=0.5,
                         penalty_scale=100.0, penalty_kind="upper_only")
        contract = swing_contract(spec, horizon=1.0)
        grid = Grid(horizon=1.0, n_t=800, x_bounds=((-1.5, 1.5), (-1.5, 1.5)),
                    n_x=(24, 24), z_max=1.0, n_z=12, n_stored=9)
        v1 = solve_risk_neutral_pde(cv, contract, 1.0, grid)
        v2 = solve_risk_neutral_pde(cv, contract, 2.0, grid)
        rel = float(np.max(np.abs(v2.values - 2.0 * v1.values)
                           / np.maximum(np.abs(v2.values), 1.0)))
        passed = rel <= 1e-6
        report("6", passed, f"v(q=2) vs 2 v(q=1), max relative {rel:.2e}")
        assert passed


class TestCriterion07RankOneCovariance:
    def test_07_eigenvalues_match_closed_form_and_stay_bounded(self):
        cv = make_cv_model(n_forwards=1)
        gm = cv.as_market_model()
        from uip_pricer.market import unspanned_cov
        ts = np.linspace(0.0, 1.0, 100)
        lam2 = np.array([cv.unspanned_eigenvalue(t) for t in ts])
        worst_gap = 0.0
        worst_null = 0.0
        for t, expected in zip(ts, lam2):
            eigs = np.linalg.eigvalsh(unspanned_cov(gm, t, [0.2, -0.1]))
            worst_null = max(worst_null, abs(eigs[0]) / expected)
            worst_gap = max(worst_gap, abs(eigs[1] - expected))
        delta = max(lam2.max(), 1.0 / lam2.min()) * (1.0 + 1e-12)
        inside = np.all((lam2 >= 1.0 / delta) & (lam2 <= delta))
        passed = worst_null < 1e-10 and worst_gap <= 1e-10 and bool(inside)
        report("7", passed,
               f"null eig ratio {worst_null:.1e}, closed-form gap {worst_gap:.1e}, "
               f"lam2 within [1/delta, delta] for delta={delta:.3f}")
        assert passed


class TestCriterion08DpOracle:
    def test_08_lattice_price_within_five_percent(self):
        params = make_linear_params(k=0.0, horizon=0.25)
        model = params.model()
        spec = SwingSpec(strike=0.0, u_max=1.0, m=0.0, big_m=0.125,
                         penalty_scale=1000.0, penalty_kind="upper_only")
        contract = swing_contract(spec, horizon=0.25)
        grid = Grid(horizon=0.25, n_t=400, x_bounds=((1.5, 5.5),), n_x=(100,),
                    z_max=0.25, n_z=50, n_stored=41)
        v_pde = solve_uip_pde(model, contract, 1.0, 0.01, None, grid).value_at(0.0, 3.5, 0.0)
        res = dp_value(model, contract, 1.0, 0.01,
                       DPConfig(n_steps=8, n_x=41, n_z=17, n_u=3, n_pi=21),
                       x0=3.5, z0=0.0)
        rel = abs(res.uip - v_pde) / v_pde
        passed = rel <= 0.05
        report("8", passed, f"DP {res.uip:.4f} vs PDE {v_pde:.4f} ({100 * rel:.2f}%)")
        assert passed


@pytest.fixture(scope="module")
def strategy_fields():
    params = make_linear_params()
    model = params.model()
    grid = wide_grid(n_x=200, n_z=100, n_t=640)
    contract = make_banded_contract()
    j0 = riccati_gradient(solve_riccati(params, steps=2000))
    bc = BoundaryPolicy(x_max="expectation")
    v = solve_uip_pde(model, contract, 1.0, 0.01, j0, grid, bc)
    u = exercise_policy(v, contract, 1.0, model)
    h = hedge_strategy(v, model)
    return grid, v, u, h


class TestCriterion09StrategyStructure:

    def test_09a_exercise_is_bang_bang(self, strategy_fields):
        _, _, u, _ = strategy_fields
        values = set(np.unique(u).tolist())
        passed = values <= {0.0, 1.0}
        report("9a", passed, f"exercise rates take values {sorted(values)}")
        assert passed

    def test_09b_hedge_is_short_at_midlife(self, strategy_fields):
        _, v, _, h = strategy_fields
        k = int(np.argmin(np.abs(v.t_stored - 0.5)))
        worst = float(h[k].max())
        passed = worst <= 1e-9
        report("9b", passed, f"max hedge position at t=0.5 is {worst:.2e} (tol 1e-9)")
        assert passed

    def test_09c_hedge_vanishes_at_and_above_the_cap(self, strategy_fields):
        grid, v, _, h = strategy_fields
        k = int(np.argmin(np.abs(v.t_stored - 0.5)))
        sel = grid.z_nodes >= 0.5
        worst = float(np.max(np.abs(h[k][:, sel])))
        passed = worst <= 1e-9
        report("9c", passed, f"max |hedge| for z >= cap is {worst:.2e}")
        assert passed


class TestCriterion10Battery:
    def test_10a_zero_position_prices_to_zero(self):
        params = make_linear_params()
        grid = wide_grid(n_x=100, n_z=50, n_t=320)
        contract = make_benchmark_contract()
        surf = solve_uip_pde(params.model(), contract, 0.0, 0.01, None, grid)
        worst = float(np.max(np.abs(surf.values)))
        passed = worst == 0.0
        report("10a", passed, f"q=0 surface max-abs {worst:.1e}")
        assert passed

    def test_10b_terminal_slice_is_exactly_q_phi(self, benchmark_solves):
        _, _, grid, contract, _, _, _, v = benchmark_solves
        expected = 1.0 * np.asarray(contract._clamped_penalty(1.0, grid.z_nodes))
        terminal = v.slice_at(1.0)
        passed = bool(np.array_equal(terminal, np.broadcast_to(expected, terminal.shape)))
        report("10b", passed, "terminal slice equals q Phi bit-exactly"
               if passed else "terminal slice differs from q Phi")
        assert passed

    def test_10c_probe_orderings_are_strict(self, table1_values, table2_values):
        t1 = [table1_values[g][0] for g in sorted(TABLE1_REFERENCE)]
        t2 = [table2_values[r] for r in sorted(TABLE2_REFERENCE)]
        passed = all(a > b for a, b in zip(t1, t1[1:])) \
            and all(a < b for a, b in zip(t2, t2[1:]))
        report("10c", passed, "decreasing in gamma and increasing in rho at the probes")
        assert passed

    def test_10d_per_unit_price_nonincreasing_in_position(self, benchmark_solves):
        params, model, grid, contract, table, _, _, v1 = benchmark_solves
        j0 = table.as_callable()
        v_half = solve_uip_pde(model, contract, 0.5, 0.01, j0, grid)
        v_two = solve_uip_pde(model, contract, 2.0, 0.01, j0, grid)
        worst = 0.0
        for small, big in ((v_half.values / 0.5, v1.values),
                           (v1.values, v_two.values / 2.0)):
            worst = max(worst, float(np.max(big - small)))
        passed = worst <= 1e-6
        report("10d", passed,
               f"per-unit price increase across q in {{0.5, 1, 2}} at most {worst:.2e}")
        assert passed
