"""Exercise policy, hedge and investment extraction from solved surfaces.

All extraction is post-hoc from stored slices: the stepped policy at
interior times uses the same Hamiltonian, so re-deriving it from the
converged surface is grid-consistent and re-runnable.  Node-wise maps over
immutable surfaces, safe to parallelize.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .contracts import ContractSpec
from .errors import ConfigError
from .grid import Surface
from .market import CarteaVillaplanaModel, ConstantCorrelationModel
from .solver import _hamiltonian_slice


@dataclass
class StrategyBundle:
    """Exercise rates, hedge positions and investment positions over stored slices.

    ``hedge`` and ``investment`` carry one value per forward contract in the
    last axis (squeezed to scalars for single-forward models).
    """

    t_stored: np.ndarray
    x_nodes: tuple
    z_nodes: np.ndarray
    exercise: np.ndarray
    hedge: np.ndarray = None
    investment: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def exercise_lookup(self, t, x, z):
        """Nearest-node exercise rates, vectorized over path batches.

        Nearest-node (no interpolation): interpolating a bang-bang field
        would create inadmissible fractional controls.
        """
        t_idx = int(np.argmin(np.abs(self.t_stored - t)))
        xs = self.x_nodes[0]
        xi = np.clip(np.rint((np.asarray(x) - xs[0]) / (xs[1] - xs[0])).astype(int),
                     0, len(xs) - 1)
        zs = self.z_nodes
        zi = np.clip(np.rint((np.asarray(z) - zs[0]) / (zs[1] - zs[0])).astype(int),
                     0, len(zs) - 1)
        return self.exercise[t_idx][xi, zi]


def _grad_x_second_order(values, dx, axis=0):
    """Central interior, second-order one-sided at the faces (np.gradient)."""
    return np.gradient(values, dx, axis=axis, edge_order=2)


def exercise_policy(v: Surface, contract: ContractSpec, q, model) -> np.ndarray:
    """Feedback exercise rates on every stored slice of a price surface.

    Maximizes u * v_z + q L at each node with the same one-sided z
    differences the solver used; for payoffs linear in u this is the
    bang-bang indicator policy.  ``model`` supplies the spot map.
    """
    dz = v.grid.dz
    zs = v.grid.z_nodes
    out = np.empty_like(v.values)
    for k, t in enumerate(v.t_stored):
        sl = v.values[k]
        p_field = _spot_field(v.grid, model, t)
        _, u_fld = _hamiltonian_slice(contract, sl, dz, p_field, zs, q, want_policy=True)
        out[k] = u_fld
    return out


def _spot_field(grid, model, t):
    if grid.dim == 1:
        return np.asarray(model.spot_map(t, grid.x_nodes(0)), dtype=float)
    mesh = np.stack(np.meshgrid(grid.x_nodes(0), grid.x_nodes(1), indexing="ij"), axis=-1)
    return np.asarray(model.spot_map(t, mesh), dtype=float)


def _hedge_load(model, t):
    """-(sigma_F* sigma_F)^{-1} sigma_F* Sigma at time t; maps v_x to positions."""
    if isinstance(model, ConstantCorrelationModel):
        raise TypeError("use the scalar fast path for constant-correlation models")
    sig_t = model.factor_vol_transpose(t)
    sigma_f = model.forward_vol_matrix(t)
    cov = sigma_f.T @ sigma_f
    return -np.linalg.solve(cov, sigma_f.T @ sig_t.T)     # (n, m)


def hedge_strategy(v: Surface, model, grid=None) -> np.ndarray:
    """Hedge positions -(sigma_F* sigma_F)^{-1} sigma_F* Sigma v_x per node.

    Returns (n_stored, nx, nz) for one-factor/one-forward models and
    (n_stored, nx1, nx2, nz, n_forwards) for the two-factor family.
    Gradients use second-order one-sided stencils at the faces so hedge
    surfaces extend to the domain edges.
    """
    grid = grid or v.grid
    if grid.dim == 1:
        if not isinstance(model, ConstantCorrelationModel):
            raise ConfigError("one-factor hedges need a constant-correlation model")
        xs = grid.x_nodes(0)
        out = np.empty_like(v.values)
        for k, t in enumerate(v.t_stored):
            vx = _grad_x_second_order(v.values[k], grid.dx(0), axis=0)
            load = -model.rho * model.sigma(t, xs) / model.sigma_f_bar(t, xs)
            out[k] = load[:, None] * vx
        return out
    if not isinstance(model, CarteaVillaplanaModel):
        raise ConfigError("two-factor hedges need a Cartea-Villaplana model")
    shape = v.values.shape + (model.n_forwards,)
    out = np.empty(shape)
    for k, t in enumerate(v.t_stored):
        v1 = _grad_x_second_order(v.values[k], grid.dx(0), axis=0)
        v2 = _grad_x_second_order(v.values[k], grid.dx(1), axis=1)
        load = _hedge_load(model, t)                      # (n, 2)
        out[k] = np.stack([load[i, 0] * v1 + load[i, 1] * v2
                           for i in range(model.n_forwards)], axis=-1)
    return out


def investment_strategy(j: Surface, model, gamma, grid=None) -> np.ndarray:
    """Optimal investment (sigma_F* sigma_F)^{-1} (mu_F / gamma - sigma_F* Sigma J_x)."""
    grid = grid or j.grid
    if grid.dim == 1:
        if not isinstance(model, ConstantCorrelationModel):
            raise ConfigError("one-factor investment needs a constant-correlation model")
        xs = grid.x_nodes(0)
        out = np.empty_like(j.values)
        for k, t in enumerate(j.t_stored):
            jx = _grad_x_second_order(j.values[k], grid.dx(0), axis=0)
            sf = model.sigma_f_bar(t, xs)
            myopic = model.mu_f(t, xs) / (gamma * sf**2)
            load = model.rho * model.sigma(t, xs) / sf
            out[k] = myopic[:, None] - load[:, None] * jx
        return out
    if not isinstance(model, CarteaVillaplanaModel):
        raise ConfigError("two-factor investment needs a Cartea-Villaplana model")
    shape = j.values.shape + (model.n_forwards,)
    out = np.empty(shape)
    for k, t in enumerate(j.t_stored):
        j1 = _grad_x_second_order(j.values[k], grid.dx(0), axis=0)
        j2 = _grad_x_second_order(j.values[k], grid.dx(1), axis=1)
        sigma_f = model.forward_vol_matrix(t)
        cov = sigma_f.T @ sigma_f
        mu = np.full(model.n_forwards, float(model.mu_f(t)))
        myopic = np.linalg.solve(cov, mu) / gamma
        load = _hedge_load(model, t)                      # already includes the minus
        for i in range(model.n_forwards):
            out[k][..., i] = myopic[i] + load[i, 0] * j1 + load[i, 1] * j2
    return out


def cv_hedge_matrix(model: CarteaVillaplanaModel, t) -> np.ndarray:
    """(sigma_F* sigma_F)^{-1} sigma_F* Sigma for the complete two-forward family.

    Explicit form: with E_c(i) = e^{+k_c (T_i - t)} (the hedge position undoes
    the forward's exponential damping) and d = (T_1 - T_2)(k_c - k_d),

        [[ E_c(1) / (alpha_c (1 - e^{ d})),  E_d(1) / (alpha_d (1 - e^{-d})) ],
         [ E_c(2) / (alpha_c (1 - e^{-d})),  E_d(2) / (alpha_d (1 - e^{ d})) ]]

    Correlation-free: the loading matrices cancel in the product.
    """
    if model.n_forwards != 2:
        raise ConfigError("the explicit hedge matrix needs two traded forwards")
    t1, t2 = model.maturities
    d = (t1 - t2) * (model.k_c - model.k_d)
    denom_pos = 1.0 - math.exp(d)
    denom_neg = 1.0 - math.exp(-d)
    if abs(denom_pos) < 1e-14 or abs(denom_neg) < 1e-14:
        raise ConfigError(
            "hedge matrix degenerate: equal maturities with equal mean-reversion rates"
        )
    e_c = [math.exp(model.k_c * (ti - t)) for ti in (t1, t2)]
    e_d = [math.exp(model.k_d * (ti - t)) for ti in (t1, t2)]
    return np.array(
        [
            [e_c[0] / (model.alpha_c * denom_pos), e_d[0] / (model.alpha_d * denom_neg)],
            [e_c[1] / (model.alpha_c * denom_neg), e_d[1] / (model.alpha_d * denom_pos)],
        ]
    )


def extract_strategies(v: Surface, contract, q, model, j: Surface = None,
                       gamma=None) -> StrategyBundle:
    """Bundle exercise + hedge (+ investment when a log-value surface is given)."""
    exercise = exercise_policy(v, contract, q, model)
    hedge = hedge_strategy(v, model)
    investment = None
    if j is not None and gamma is not None:
        investment = investment_strategy(j, model, gamma)
    return StrategyBundle(
        t_stored=v.t_stored.copy(),
        x_nodes=tuple(v.grid.x_nodes(a) for a in range(v.grid.dim)),
        z_nodes=v.grid.z_nodes,
        exercise=exercise,
        hedge=hedge,
        investment=investment,
        meta={"q": q, "kind": v.meta.get("kind")},
    )


def switching_boundary(exercise: np.ndarray, x_nodes, z_nodes, u_max) -> np.ndarray:
    """Per-x threshold: largest z still exercised at full rate (nan if none).

    Summarizes the two-region policy structure of one stored slice.
    """
    nx = exercise.shape[0]
    out = np.full(nx, np.nan)
    for i in range(nx):
        on = np.nonzero(exercise[i] >= 0.5 * u_max)[0]
        if on.size:
            out[i] = z_nodes[on.max()]
    return out
