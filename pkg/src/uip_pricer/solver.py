"""Backward finite-difference solvers for the pricing PDEs.

Four equations share one explicit time-stepping kernel (all posed backward
from a terminal condition at T, stepped with dt = T/N on the requested grid):

* indifference-price equation ("uip"): drift b_bar, exercise Hamiltonian,
  quadratic gradient penalty -(gamma/2) v_x' B v_x and the cross term
  -gamma (J0_x)' B v_x sourced by the no-claim gradient; terminal q Phi.
* log-value equation ("log_value"): adds the investment value rate and uses
  the full quadratic -(gamma/2) J_x' B J_x; terminal log(gamma)/gamma + q Phi.
* risk-neutral / complete-market equation ("risk_neutral"): linear transport
  plus the Hamiltonian, no quadratic term; terminal q Phi.
* exponential-transform dual ("dual", constant-correlation models): solves
  for w = -exp(-gamma_tilde v) under the perturbed risk-neutral drift with a
  multiplicative source, then maps stored slices back to prices.  This is a
  numerically distinct route from "uip" on purpose (verification layer).

Discretization follows the reference scheme: explicit in time, central x
differences at the known time level (one-sided at faces), one-sided upwind z
differences taken from the known level, diffusion by the standard 3-point
(or 9-point, two factors) stencil.  Unstable time grids are rejected up
front with the minimal admissible N.

Within a time step every node update depends only on the previous level, so
steps are node-parallel; steps themselves are strictly sequential.  Solver
state never escapes a call, so independent solves can run concurrently.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .boundary import BoundaryContext, BoundaryPolicy, fill_faces
from .contracts import ContractSpec, IntervalControl, hamiltonian_field
from .errors import BlowupError, CflError, ConfigError
from .grid import Grid, Surface
from .market import CarteaVillaplanaModel, ConstantCorrelationModel, MarketModel
from .market import effective_drift as generic_effective_drift
from .market import sharpe_term as generic_sharpe_term
from .market import unspanned_cov as generic_unspanned_cov

CFL_SAFETY = 0.9
_CHECK_EVERY = 100


# ---------------------------------------------------------------------------
# No-claim gradient providers
# ---------------------------------------------------------------------------

def zero_gradient(t, x):
    return np.zeros_like(np.asarray(x, dtype=float))


def riccati_gradient(sol):
    """Closed-form no-claim gradient callable from a Riccati solution."""
    return lambda t, x: sol.gradient(t, x)


@dataclass
class NoClaimTable:
    """Numeric no-claim log-value on the grid's (t, x) axes with its gradient.

    The gradient table is built with the same stencils the (x, z) solvers use
    (central interior, first-order one-sided at faces), so feeding it back
    into the price equation reproduces the log-value difference identically.
    """

    t_nodes: np.ndarray
    x_nodes: np.ndarray
    values: np.ndarray      # (N+1, nx+1)
    grads: np.ndarray       # (N+1, nx+1)

    def gradient(self, t, x):
        n = int(round(t / (self.t_nodes[1] - self.t_nodes[0])))
        if not (0 <= n < len(self.t_nodes)) or abs(self.t_nodes[n] - t) > 1e-9:
            raise KeyError(f"t={t} is not a level of the no-claim table")
        x = np.asarray(x, dtype=float)
        if x.shape == self.x_nodes.shape and np.allclose(x, self.x_nodes):
            return self.grads[n]
        return np.interp(x, self.x_nodes, self.grads[n])

    def as_callable(self):
        return self.gradient


def _fill_faces_dual(w, bc, spot_ratio):
    """Face fill for the exponential transform: the primal rule applied to
    log(-w), which keeps w negative (linear extrapolation of w itself can
    cross zero where the price gradient is steep)."""
    if bc.x_min == "second_derivative_zero":
        w[0] = w[1] ** 2 / w[2]
    elif bc.x_min == "linear_spot":
        w[0] = -((-w[1]) * ((-w[1]) / (-w[2])) ** (1.0 / spot_ratio))
    if bc.x_max == "second_derivative_zero":
        w[-1] = w[-2] ** 2 / w[-3]
    elif bc.x_max == "linear_spot":
        w[-1] = -((-w[-2]) * ((-w[-2]) / (-w[-3])) ** spot_ratio)
    return w


def _grad_x(v, dx):
    """d/dx along axis 0: central interior, second-order one-sided faces.

    Second-order face stencils matter when faces carry their own PDE update
    ("one_sided" policy): a first-order face gradient times a strong inflow
    drift injects an O(dx) error that advects deep into the domain.
    """
    g = np.empty_like(v)
    g[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    g[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
    g[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    return g


def _second_x(v, dx, one_sided_faces):
    s = np.zeros_like(v)
    s[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dx**2
    if one_sided_faces[0]:
        s[0] = (v[0] - 2.0 * v[1] + v[2]) / dx**2
    if one_sided_faces[1]:
        s[-1] = (v[-1] - 2.0 * v[-2] + v[-3]) / dx**2
    return s


# ---------------------------------------------------------------------------
# Coefficient adapters
# ---------------------------------------------------------------------------

class _Coeffs1F:
    """Vectorized coefficient rows over the x-axis for one-factor models."""

    def __init__(self, model, gamma):
        self.model = model
        self.gamma = gamma
        self.generic = not isinstance(model, ConstantCorrelationModel)
        if self.generic:
            if not isinstance(model, MarketModel) or model.factors.dim_factors != 1:
                raise ConfigError(
                    "one-factor solves need a ConstantCorrelationModel or a "
                    "one-factor MarketModel"
                )

    def rows(self, t, xs):
        if not self.generic:
            m = self.model
            return {
                "drift": np.broadcast_to(np.asarray(m.effective_drift(t, xs), dtype=float), xs.shape).copy(),
                "diff": np.broadcast_to(np.asarray(m.diffusion(t, xs), dtype=float), xs.shape).copy(),
                "quad_cov": np.broadcast_to(np.asarray(m.unspanned_cov(t, xs), dtype=float), xs.shape).copy(),
                "sharpe": np.broadcast_to(np.asarray(m.sharpe(t, xs, self.gamma), dtype=float), xs.shape).copy(),
                "spot": np.broadcast_to(np.asarray(m.spot_map(t, xs), dtype=float), xs.shape).copy(),
            }
        drift = np.empty_like(xs)
        diff = np.empty_like(xs)
        quad = np.empty_like(xs)
        shp = np.empty_like(xs)
        spot = np.empty_like(xs)
        for i, x in enumerate(xs):
            drift[i] = generic_effective_drift(self.model, t, [x])[0]
            sig_t = np.atleast_2d(self.model.factors.vol_transpose(t, np.array([x])))
            diff[i] = float(sig_t @ sig_t.T)
            quad[i] = float(generic_unspanned_cov(self.model, t, [x]))
            shp[i] = generic_sharpe_term(self.model, t, [x], self.gamma)
            spot[i] = self.model.spot_map(t, np.array([x]))
        return {"drift": drift, "diff": diff, "quad_cov": quad, "sharpe": shp, "spot": spot}


# ---------------------------------------------------------------------------
# Stability bound
# ---------------------------------------------------------------------------

def _payoff_scale(contract, p_row, z_nodes):
    if contract is None:
        return 0.0
    zs = np.asarray(z_nodes, dtype=float)
    lo, hi = contract.control.bounds(zs)
    scale = 0.0
    for u in (lo, hi):
        u_arr = np.broadcast_to(np.asarray(u, dtype=float), zs.shape)
        val = contract._clamped_payoff(np.max(np.abs(p_row)), zs, u_arr)
        scale = max(scale, float(np.max(np.abs(val))))
    return scale


def _control_speed(contract, z_nodes):
    if contract is None:
        return 0.0
    lo, hi = contract.control.bounds(np.asarray(z_nodes, dtype=float))
    return float(max(np.max(np.abs(lo)), np.max(np.abs(hi))))


def _gradient_scale(contract, q, p_row, grid):
    """Crude a-priori bound on |v_x|: volume headroom times the spot x-slope."""
    if contract is None or q == 0.0:
        return 0.0
    headroom = grid.z_max
    if contract.volume_band is not None:
        headroom = min(headroom, contract.volume_band[1])
    dpdx = float(np.max(np.abs(np.diff(p_row)))) / grid.dx(0)
    return q * headroom * dpdx


def _stable_dt(grid: Grid, model, gamma, q, contract, j0_grad, kind, grad_scale=None):
    """0.9 / max over sampled nodes of (diffusion + advection + reaction) rate."""
    t_samples = np.linspace(0.0, grid.horizon, 5)
    worst = 0.0
    if grid.dim == 1:
        xs = grid.x_nodes(0)
        dx = grid.dx(0)
        coeffs = _Coeffs1F(model, gamma)
        p_term = coeffs.rows(grid.horizon, xs)["spot"]
        g_est = _gradient_scale(contract, q, p_term, grid) if grad_scale is None else grad_scale
        for t in t_samples:
            rows = coeffs.rows(t, xs)
            j0x = np.abs(j0_grad(t, xs)) if j0_grad is not None else 0.0
            drift = np.abs(rows["drift"])
            if kind in ("uip", "log_value", "dual"):
                drift = drift + gamma * rows["quad_cov"] * (g_est + j0x)
            rate = 0.0
            if kind == "dual":
                gamma_t = gamma * (1.0 - model.rho**2)
                rate = gamma_t * q * _payoff_scale(contract, rows["spot"], grid.z_nodes)
            denom = rows["diff"] / dx**2 + drift / dx \
                + _control_speed(contract, grid.z_nodes) / grid.dz + rate
            worst = max(worst, float(np.max(denom)))
    else:
        for t in t_samples:
            a_mat, corr, _, _ = _cv_time_coeffs(model, t, gamma)
            dx1, dx2 = grid.dx(0), grid.dx(1)
            denom = (
                a_mat[0, 0] / dx1**2 + a_mat[1, 1] / dx2**2
                + 2.0 * abs(a_mat[0, 1]) / (dx1 * dx2)
            )
            x1 = grid.x_nodes(0)
            x2 = grid.x_nodes(1)
            b1 = np.abs(-model.k_c * x1).max() + abs(corr[0])
            b2 = np.abs(-model.k_d * x2).max() + abs(corr[1])
            denom += b1 / dx1 + b2 / dx2 + _control_speed(contract, grid.z_nodes) / grid.dz
            worst = max(worst, float(denom))
    if worst <= 0.0:
        raise ConfigError("zero diffusion and transport everywhere; nothing to step")
    return CFL_SAFETY / worst


def cfl_timestep(grid: Grid, model, gamma, q, contract=None, j0_grad=None,
                 kind="uip", grad_scale=None):
    """Largest stable time step for the explicit scheme, clamped to T/N.

    Denominator per node: tr(Sigma*Sigma)/dx^2 + |effective advection|/dx +
    |control speed|/dz + zero-order reaction rate; the quadratic-gradient
    nonlinearity enters as an advection speed gamma*B*|v_x|-estimate
    (``grad_scale`` overrides the built-in estimate).
    """
    dt = _stable_dt(grid, model, gamma, q, contract, j0_grad, kind, grad_scale)
    return min(dt, grid.horizon / grid.n_t)


def _require_stable(grid, model, gamma, q, contract, j0_grad, kind):
    dt_stable = _stable_dt(grid, model, gamma, q, contract, j0_grad, kind)
    if grid.dt > dt_stable * (1.0 + 1e-12):
        raise CflError(grid.n_t, math.ceil(grid.horizon / dt_stable), dt_stable)


def _check_contract_grid(contract, grid):
    if contract.volume_band is not None and grid.z_max < contract.volume_band[1] - 1e-12:
        raise ConfigError(
            f"grid z_max={grid.z_max} below the contract volume cap M={contract.volume_band[1]}"
        )


# ---------------------------------------------------------------------------
# Hamiltonian evaluation over a slice
# ---------------------------------------------------------------------------

def _hamiltonian_slice(contract, v, dz, p_field, z_nodes, q, weight=None,
                       want_policy=False):
    """H(x, z) = sup_u [u v_z + q w L] with upwind one-sided z differences.

    ``p_field`` broadcasts against v without its z axis.  The top z node only
    sees the non-increasing control branch (no forward neighbor exists).
    """
    up_only = isinstance(contract.control, IntervalControl) and contract.control.lo >= 0.0
    vz_f = (v[..., 1:] - v[..., :-1]) / dz
    h_val = np.empty_like(v)
    u_fld = np.empty_like(v) if want_policy else None
    p_b = p_field[..., None]

    def w_at(sl):
        return None if weight is None else weight[..., sl]

    if up_only:
        val, u = hamiltonian_field(contract, vz_f, p_b, z_nodes[:-1], q, weight=w_at(slice(0, -1)))
        h_val[..., :-1] = val
        val, u_last = hamiltonian_field(
            contract, np.zeros_like(v[..., -1]), p_field, z_nodes[-1], q,
            weight=None if weight is None else weight[..., -1], allow_up=False,
        )
        h_val[..., -1] = val
        if want_policy:
            u_fld[..., :-1] = u
            u_fld[..., -1] = u_last
        return h_val, u_fld

    vz_b = vz_f                      # backward diff at node j is forward diff at j-1
    mid = slice(1, -1)
    val, u = hamiltonian_field(
        contract, vz_f[..., 1:], p_b, z_nodes[mid], q,
        weight=w_at(mid), v_z_down=vz_b[..., :-1],
    )
    h_val[..., mid] = val
    val0, u0 = hamiltonian_field(
        contract, vz_f[..., 0], p_field, z_nodes[0], q,
        weight=None if weight is None else weight[..., 0], allow_down=False,
    )
    h_val[..., 0] = val0
    val1, u1 = hamiltonian_field(
        contract, np.zeros_like(v[..., -1]), p_field, z_nodes[-1], q,
        weight=None if weight is None else weight[..., -1],
        v_z_down=vz_b[..., -1], allow_up=False,
    )
    h_val[..., -1] = val1
    if want_policy:
        u_fld[..., mid] = u
        u_fld[..., 0] = u0
        u_fld[..., -1] = u1
    return h_val, u_fld


# ---------------------------------------------------------------------------
# One-factor kernel
# ---------------------------------------------------------------------------

def _solve_1f(model, contract, q, gamma, j0_grad, grid, bc, kind):
    _check_contract_grid(contract, grid)
    if abs(grid.horizon - model.horizon) > 1e-12:
        raise ConfigError(f"grid horizon {grid.horizon} != model horizon {model.horizon}")
    coeffs = _Coeffs1F(model, gamma)
    bc = bc or BoundaryPolicy()
    j0 = j0_grad if j0_grad is not None else zero_gradient
    _require_stable(grid, model, gamma, q, contract, j0_grad, kind)

    xs = grid.x_nodes(0)
    zs = grid.z_nodes
    dx, dz, dt = grid.dx(0), grid.dz, grid.dt
    one_sided = (bc.x_min == "one_sided", bc.x_max == "one_sided")

    gamma_t = None
    if kind == "dual":
        if not isinstance(model, ConstantCorrelationModel):
            raise ConfigError("dual solve requires a constant-correlation model")
        gamma_t = gamma * (1.0 - model.rho**2)
        if gamma_t <= 0.0:
            raise ConfigError("dual solve needs gamma * (1 - rho^2) > 0")

    p_term = coeffs.rows(grid.horizon, xs)["spot"]
    phi = q * np.asarray(contract._clamped_penalty(p_term[:, None], zs[None, :]), dtype=float)
    phi = np.broadcast_to(phi, (len(xs), len(zs))).copy()
    if kind == "log_value":
        v = math.log(gamma) / gamma + phi
    elif kind == "dual":
        v = -np.exp(-gamma_t * phi)
    else:
        v = phi

    stored = grid.stored_indices
    pos = {int(n): k for k, n in enumerate(stored)}
    out = np.empty((len(stored), len(xs), len(zs)))
    if grid.n_t in pos:
        out[pos[grid.n_t]] = v

    if kind in ("dual", "log_value") and "expectation" in (bc.x_min, bc.x_max):
        raise ConfigError(f"expectation boundary is not available for the {kind} solve")
    bc_gamma = 0.0 if kind == "risk_neutral" else gamma
    ctx_args = dict(horizon=grid.horizon, x_nodes=xs, z_nodes=zs, model=model,
                    contract=contract, q=q, gamma=bc_gamma)
    spot_ratio = math.exp(dx) if bc.needs_spot_ratio() else None

    for n in range(grid.n_t - 1, -1, -1):
        t_next = (n + 1) * dt
        rows = coeffs.rows(t_next, xs)
        vx = _grad_x(v, dx)
        vxx = _second_x(v, dx, one_sided)

        drift = rows["drift"]
        if kind == "dual":
            j0x = np.asarray(j0(t_next, xs), dtype=float)
            drift = drift - gamma * rows["quad_cov"] * j0x
            weight = -gamma_t * v
            h_val, _ = _hamiltonian_slice(contract, v, dz, rows["spot"], zs, q, weight=weight)
        else:
            h_val, _ = _hamiltonian_slice(contract, v, dz, rows["spot"], zs, q)

        rhs = drift[:, None] * vx + 0.5 * rows["diff"][:, None] * vxx + h_val
        if kind == "log_value":
            rhs += rows["sharpe"][:, None]
            rhs -= 0.5 * gamma * rows["quad_cov"][:, None] * vx**2
        elif kind == "uip":
            j0x = np.asarray(j0(t_next, xs), dtype=float)
            b_row = rows["quad_cov"][:, None]
            rhs -= 0.5 * gamma * b_row * vx**2
            rhs -= gamma * b_row * j0x[:, None] * vx

        v = v + dt * rhs
        if kind == "dual":
            _fill_faces_dual(v, bc, spot_ratio)
        else:
            ctx = BoundaryContext(t=n * dt, **ctx_args)
            fill_faces(v, bc, ctx, axis=0, spot_ratio=spot_ratio)

        if n % _CHECK_EVERY == 0 or n in pos:
            if not np.all(np.isfinite(v)):
                raise BlowupError(n * dt, f"({kind} solve)")
        if kind == "dual" and (n % _CHECK_EVERY == 0 or n in pos):
            if np.any(v >= 0.0):
                raise BlowupError(n * dt, "(dual transform lost negativity)")
        if n in pos:
            out[pos[n]] = v

    if kind == "dual":
        out = -np.log(-out) / gamma_t
    meta = {"kind": kind, "q": q, "gamma": gamma,
            "bc": (bc.x_min, bc.x_max), "n_t": grid.n_t}
    return Surface(grid=grid, t_stored=stored * dt, values=out, meta=meta)


# ---------------------------------------------------------------------------
# Two-factor (Cartea-Villaplana) kernel
# ---------------------------------------------------------------------------

def _cv_time_coeffs(model: CarteaVillaplanaModel, t, gamma):
    sig_t = model.factor_vol_transpose(t)
    sigma_f = model.forward_vol_matrix(t)
    cov = sigma_f.T @ sigma_f
    mu = np.full(model.n_forwards, float(model.mu_f(t)))
    sol = np.linalg.solve(cov, mu)
    corr = sig_t @ (sigma_f @ sol)                  # drift adjustment (2,)
    a_mat = sig_t @ sig_t.T
    g = sig_t @ sigma_f
    b_mat = a_mat - g @ np.linalg.solve(cov, g.T)
    b_mat = 0.5 * (b_mat + b_mat.T)
    sharpe = float(mu @ sol) / (2.0 * gamma)
    return a_mat, corr, b_mat, sharpe


def _solve_2f(model: CarteaVillaplanaModel, contract, q, gamma, grid, bc, kind):
    _check_contract_grid(contract, grid)
    if abs(grid.horizon - model.horizon) > 1e-12:
        raise ConfigError(f"grid horizon {grid.horizon} != model horizon {model.horizon}")
    if kind == "dual":
        raise ConfigError("dual solve requires a constant-correlation model")
    bc = bc or BoundaryPolicy()
    if "expectation" in (bc.x_min, bc.x_max):
        raise ConfigError("expectation boundary is not available for two-factor models")
    _require_stable(grid, model, gamma, q, contract, None, kind)

    x1 = grid.x_nodes(0)
    x2 = grid.x_nodes(1)
    zs = grid.z_nodes
    dx1, dx2, dz, dt = grid.dx(0), grid.dx(1), grid.dz, grid.dt

    mesh = np.stack(np.meshgrid(x1, x2, indexing="ij"), axis=-1)
    p_term = model.spot_map(grid.horizon, mesh)
    phi = q * np.asarray(contract._clamped_penalty(p_term[..., None], zs), dtype=float)
    phi = np.broadcast_to(phi, (len(x1), len(x2), len(zs))).copy()
    v = math.log(gamma) / gamma + phi if kind == "log_value" else phi

    stored = grid.stored_indices
    pos = {int(n): k for k, n in enumerate(stored)}
    out = np.empty((len(stored),) + v.shape)
    if grid.n_t in pos:
        out[pos[grid.n_t]] = v

    for n in range(grid.n_t - 1, -1, -1):
        t_next = (n + 1) * dt
        a_mat, corr, b_mat, sharpe = _cv_time_coeffs(model, t_next, gamma)
        p_field = model.spot_map(t_next, mesh)

        v1 = np.empty_like(v)
        v1[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx1)
        v1[0] = (v[1] - v[0]) / dx1
        v1[-1] = (v[-1] - v[-2]) / dx1
        v2 = np.empty_like(v)
        v2[:, 1:-1] = (v[:, 2:] - v[:, :-2]) / (2.0 * dx2)
        v2[:, 0] = (v[:, 1] - v[:, 0]) / dx2
        v2[:, -1] = (v[:, -1] - v[:, -2]) / dx2

        v11 = np.zeros_like(v)
        v11[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dx1**2
        v22 = np.zeros_like(v)
        v22[:, 1:-1] = (v[:, 2:] - 2.0 * v[:, 1:-1] + v[:, :-2]) / dx2**2
        v12 = np.zeros_like(v)
        v12[1:-1, 1:-1] = (
            v[2:, 2:] - v[2:, :-2] - v[:-2, 2:] + v[:-2, :-2]
        ) / (4.0 * dx1 * dx2)

        drift1 = (-model.k_c * x1 - corr[0])[:, None, None]
        drift2 = (-model.k_d * x2 - corr[1])[None, :, None]
        h_val, _ = _hamiltonian_slice(contract, v, dz, p_field, zs, q)

        rhs = (
            drift1 * v1 + drift2 * v2
            + 0.5 * (a_mat[0, 0] * v11 + a_mat[1, 1] * v22) + a_mat[0, 1] * v12
            + h_val
        )
        if kind == "log_value":
            rhs += sharpe
        if kind in ("uip", "log_value") and np.max(np.abs(b_mat)) > 0.0:
            rhs -= 0.5 * gamma * (
                b_mat[0, 0] * v1**2 + 2.0 * b_mat[0, 1] * v1 * v2 + b_mat[1, 1] * v2**2
            )

        v = v + dt * rhs
        for axis in range(2):
            ratio = math.exp(grid.dx(axis)) if bc.needs_spot_ratio() else None
            fill_faces(v, bc, None, axis=axis, spot_ratio=ratio)

        if n % _CHECK_EVERY == 0 or n in pos:
            if not np.all(np.isfinite(v)):
                raise BlowupError(n * dt, f"({kind} solve, two factors)")
        if n in pos:
            out[pos[n]] = v

    meta = {"kind": kind, "q": q, "gamma": gamma,
            "bc": (bc.x_min, bc.x_max), "n_t": grid.n_t}
    return Surface(grid=grid, t_stored=stored * dt, values=out, meta=meta)


# ---------------------------------------------------------------------------
# Public solver entry points
# ---------------------------------------------------------------------------

def _dispatch(model, contract, q, gamma, j0_grad, grid, bc, kind):
    if grid.dim == 2:
        if not isinstance(model, CarteaVillaplanaModel):
            raise ConfigError("two-factor solves are implemented for the Cartea-Villaplana family")
        if j0_grad is not None:
            raise ConfigError("two-factor solves assume a state-independent no-claim value")
        return _solve_2f(model, contract, q, gamma, grid, bc, kind)
    return _solve_1f(model, contract, q, gamma, j0_grad, grid, bc, kind)


def solve_uip_pde(model, contract: ContractSpec, q, gamma, j0_grad, grid: Grid,
                  bc: Optional[BoundaryPolicy] = None) -> Surface:
    """Indifference-price surface v(t, x, z; q); terminal slice is q Phi.

    ``j0_grad`` supplies the no-claim gradient as ``f(t, x_nodes) -> row``
    (None means identically zero, exact for state-independent forward
    coefficients); use :func:`riccati_gradient` or a :class:`NoClaimTable`.
    """
    return _dispatch(model, contract, q, gamma, j0_grad, grid, bc, "uip")


def solve_log_value_pde(model, contract: ContractSpec, q, gamma, grid: Grid,
                        bc: Optional[BoundaryPolicy] = None) -> Surface:
    """Log-value surface with terminal log(gamma)/gamma + q Phi."""
    return _dispatch(model, contract, q, gamma, None, grid, bc, "log_value")


def solve_risk_neutral_pde(model, contract: ContractSpec, q, grid: Grid,
                           bc: Optional[BoundaryPolicy] = None) -> Surface:
    """Classical risk-neutral price under the risk-adjusted drift (linear PDE).

    In a complete market the risk-adjusted drift coincides with
    b - Sigma* (sigma_F*)^{-1} mu_F and this equation is exact; otherwise it
    is the benchmark the indifference price is compared against.
    """
    return _dispatch(model, contract, q, 1.0, None, grid, bc, "risk_neutral")


def solve_dual_pde(model: ConstantCorrelationModel, contract: ContractSpec, q, gamma,
                   j0_grad, grid: Grid, bc: Optional[BoundaryPolicy] = None) -> Surface:
    """Price via the exponential transform under the perturbed entropy measure.

    Integrates w = -exp(-gamma_tilde v) with drift
    b - rho sigma mu_F / sigma_f_bar - gamma_tilde sigma^2 J0_x and the
    multiplicative exercise source, then maps stored slices back to prices.
    Distinct numerical route from :func:`solve_uip_pde` by construction.
    """
    return _dispatch(model, contract, q, gamma, j0_grad, grid, bc, "dual")


def solve_no_claim_1d(model, gamma, grid: Grid,
                      bc: Optional[BoundaryPolicy] = None) -> NoClaimTable:
    """No-claim log-value on the grid's (t, x) axes (z plays no role).

    Same scheme as the (x, z) solvers restricted to the pure investment
    problem; returns every time level plus the matching gradient table.
    """
    if grid.dim != 1:
        raise ConfigError("the no-claim table solver is one-factor only")
    coeffs = _Coeffs1F(model, gamma)
    bc = bc or BoundaryPolicy()
    if bc.x_min == "expectation":
        raise ConfigError("expectation boundary does not apply to the no-claim problem")
    _require_stable(grid, model, gamma, 0.0, None, None, "log_value")

    xs = grid.x_nodes(0)
    dx, dt = grid.dx(0), grid.dt
    one_sided = (bc.x_min == "one_sided", bc.x_max == "one_sided")

    n_t = grid.n_t
    values = np.empty((n_t + 1, len(xs)))
    values[n_t] = math.log(gamma) / gamma
    v = values[n_t].copy()
    for n in range(n_t - 1, -1, -1):
        t_next = (n + 1) * dt
        rows = coeffs.rows(t_next, xs)
        vx = _grad_x(v[:, None], dx)[:, 0]
        vxx = _second_x(v[:, None], dx, one_sided)[:, 0]
        rhs = rows["sharpe"] + rows["drift"] * vx + 0.5 * rows["diff"] * vxx \
            - 0.5 * gamma * rows["quad_cov"] * vx**2
        v = v + dt * rhs
        fill_faces(v[:, None], bc, None, axis=0,
                   spot_ratio=math.exp(dx) if bc.needs_spot_ratio() else None)
        if not np.all(np.isfinite(v)):
            raise BlowupError(n * dt, "(no-claim solve)")
        values[n] = v

    grads = np.empty_like(values)
    for n in range(n_t + 1):
        grads[n] = _grad_x(values[n][:, None], dx)[:, 0]
    return NoClaimTable(t_nodes=grid.t_nodes, x_nodes=xs, values=values, grads=grads)


def uip_from_log_values(j_claim: Surface, j_none: Surface) -> Surface:
    """Price surface as the difference of the two log-value solves."""
    if j_claim.values.shape != j_none.values.shape:
        raise ValueError("log-value surfaces live on different grids")
    if not np.allclose(j_claim.t_stored, j_none.t_stored):
        raise ValueError("log-value surfaces store different time levels")
    meta = dict(j_claim.meta)
    meta["kind"] = "uip_via_log_value"
    return Surface(grid=j_claim.grid, t_stored=j_claim.t_stored.copy(),
                   values=j_claim.values - j_none.values, meta=meta)
