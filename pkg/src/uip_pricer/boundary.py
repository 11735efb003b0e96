"""Boundary treatment for the backward finite-difference solvers.

Four face policies:

* ``second_derivative_zero`` (default): fill the face by linear extrapolation
  from the two inner nodes, i.e. impose a vanishing second difference.
* ``linear_spot``: vanishing second derivative in spot units (v linear in
  p = e^x); with equispaced log nodes this is extrapolation with ratio
  exp(dx).  Natural for exponential-spot contracts whose value grows like
  the remaining volume times the spot near the upper face.
* ``one_sided``: no fill; the solver updates the face nodes with the PDE using
  one-sided first and shifted second differences.
* ``expectation`` (x_min of the 1-factor exponential-spot models only):
  Dirichlet values from the value of deferring exercise as long as possible,
  buying only over the final window needed to reach the lower volume bound.
  The expectation is closed-form through the lognormal moments of the affine
  (OU) factor under the risk-adjusted drift.
"""

import math
from dataclasses import dataclass

import numpy as np

from .contracts import ContractSpec
from .errors import ConfigError
from .market import ConstantCorrelationModel

FACE_KINDS = ("second_derivative_zero", "linear_spot", "one_sided", "expectation")


@dataclass(frozen=True)
class BoundaryPolicy:
    """Per-face treatment.

    ``expectation`` on the x_min face prices the defer-as-long-as-possible
    strategy (buy only the final window forced by the lower volume bound); on
    the x_max face it prices immediate full-rate exercise until the volume cap
    is reached.  Both are explicit lognormal-OU expectations.
    """

    x_min: str = "second_derivative_zero"
    x_max: str = "second_derivative_zero"

    def __post_init__(self):
        for name, kind in (("x_min", self.x_min), ("x_max", self.x_max)):
            if kind not in FACE_KINDS:
                raise ConfigError(f"unknown boundary kind {kind!r} for face {name}")

    def needs_spot_ratio(self):
        return "linear_spot" in (self.x_min, self.x_max)


@dataclass(frozen=True)
class BoundaryContext:
    """What a boundary fill needs to know about the solve it serves.

    ``gamma`` is the risk aversion of the owning solve; expectation faces use
    the correlation-modified gamma_tilde = gamma (1 - rho^2) for their
    certainty-equivalent correction (0 means plain expectation).
    """

    t: float
    horizon: float
    x_nodes: np.ndarray
    z_nodes: np.ndarray
    model: object = None
    contract: ContractSpec = None
    q: float = 1.0
    gamma: float = 0.0

    def spot_ratio(self):
        return math.exp(float(self.x_nodes[1] - self.x_nodes[0]))

    def gamma_tilde(self):
        if self.gamma == 0.0 or self.model is None:
            return 0.0
        return self.gamma * (1.0 - self.model.rho**2)


def ou_moments(x0, s, c0, c1, vol):
    """Mean and variance of X_s for dX = (c0 + c1 X) dt + vol dW, X_0 = x0.

    Vectorized in ``s`` (elapsed time >= 0).
    """
    s = np.asarray(s, dtype=float)
    if abs(c1) > 1e-14:
        e = np.exp(c1 * s)
        mean = x0 * e + (c0 / c1) * (e - 1.0)
        var = vol**2 * (np.exp(2.0 * c1 * s) - 1.0) / (2.0 * c1)
    else:
        mean = x0 + c0 * s
        var = vol**2 * s
    return mean, var


def ou_lognormal_mean(x0, s, c0, c1, vol):
    """E[exp(X_s)] for the affine-drift diffusion above; vectorized in s."""
    mean, var = ou_moments(x0, s, c0, c1, vol)
    return np.exp(mean + 0.5 * var)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _check_expectation_inputs(model, contract):
    if not isinstance(model, ConstantCorrelationModel) or model.b_bar_affine is None:
        raise ConfigError(
            "expectation boundary needs a constant-correlation model with affine drift "
            "(no closed-form factor moments otherwise)"
        )
    if contract.kind != "swing" or contract.payoff_slope is None:
        raise ConfigError("expectation boundary implemented for unclamped swing contracts")
    if contract.volume_band is None:
        raise ConfigError("expectation boundary needs the contract volume band")


def full_rate_window_ce(model, contract, q, gamma_tilde, t, x0, z_nodes, horizon,
                        start, tau):
    """Certainty equivalent of buying at full rate over [start, start + tau].

    C = q u_max int (e^{X_s} - K) ds + q Phi(Z_T) with the affine-drift OU
    factor started at (t, x0).  Mean and variance of the window integral are
    closed-form (lognormal moments plus the OU covariance
    Cov(X_s, X_r) = Var(X_min) e^{c1 |s - r|}), giving the small-risk
    expansion  E[C] - (gamma_tilde / 2) Var[C];  gamma_tilde = 0 reduces to
    the plain expectation.  ``start`` and ``tau`` are per-z arrays.
    """
    strike = -float(contract.payoff_slope(0.0, 0.0))
    u_max = contract.control.hi
    aff = model.b_bar_affine
    vol = float(model.sigma(t, x0))

    start = np.asarray(start, dtype=float)
    tau = np.asarray(tau, dtype=float)
    half = 0.5 * tau
    s = (start + half)[:, None] + half[:, None] * _GL_NODES[None, :]   # (nz, ng)
    w = half[:, None] * _GL_WEIGHTS[None, :]
    mean, var = ou_moments(x0, s - t, aff.c0, aff.c1, vol)
    spot_mean = np.exp(mean + 0.5 * var)
    e_window = np.sum(w * (spot_mean - strike), axis=1)

    var_window = 0.0
    if gamma_tilde > 0.0:
        c1 = aff.c1
        v_min = np.minimum(var[:, :, None], var[:, None, :])
        damp = np.exp(c1 * np.abs(s[:, :, None] - s[:, None, :]))
        cov_x = v_min * damp
        pair = spot_mean[:, :, None] * spot_mean[:, None, :] * np.expm1(cov_x)
        var_window = np.sum(w[:, :, None] * w[:, None, :] * pair, axis=(1, 2))

    z_term = np.asarray(z_nodes, dtype=float) + u_max * tau
    spot_term = ou_lognormal_mean(x0, horizon - t, aff.c0, aff.c1, vol)
    penalty = contract._clamped_penalty(float(spot_term), z_term)
    return q * (u_max * e_window + penalty) \
        - 0.5 * gamma_tilde * q**2 * u_max**2 * var_window


def deferred_exercise_values(model: ConstantCorrelationModel, contract: ContractSpec,
                             q, t, x0, z_nodes, horizon, gamma_tilde=0.0):
    """x_min Dirichlet row: wait as long as possible, then buy the forced floor.

    Buys nothing on (t, T - tau] and at the maximal rate on the final window
    of length tau = min((m - z)^+ / u_max, T - t), exactly reaching the lower
    volume bound; the volume penalty is price independent so its expectation
    is exact.
    """
    _check_expectation_inputs(model, contract)
    u_max = contract.control.hi
    m_lo = contract.volume_band[0]
    z = np.asarray(z_nodes, dtype=float)
    tau = np.minimum(np.maximum(m_lo - z, 0.0) / u_max, horizon - t)
    return full_rate_window_ce(model, contract, q, gamma_tilde, t, x0, z,
                               horizon, horizon - tau, tau)


def cap_exercise_values(model: ConstantCorrelationModel, contract: ContractSpec,
                        q, t, x0, z_nodes, horizon, gamma_tilde=0.0):
    """x_max Dirichlet row: fill the volume cap at full rate, now or late.

    Prices the better of the two committed strategies that buy the remaining
    cap (M - z)^+ at the maximal rate, either immediately or back-loaded at
    the horizon, with the variance-based certainty-equivalent correction.
    Mean-reverting-up spots favour the late window, decaying spots the early
    one; the max keeps the rule sensible on both sides of the long-run level.
    """
    _check_expectation_inputs(model, contract)
    u_max = contract.control.hi
    cap = contract.volume_band[1]
    z = np.asarray(z_nodes, dtype=float)
    tau = np.minimum(np.maximum(cap - z, 0.0) / u_max, horizon - t)
    now = full_rate_window_ce(model, contract, q, gamma_tilde, t, x0, z,
                              horizon, np.full_like(tau, t), tau)
    late = full_rate_window_ce(model, contract, q, gamma_tilde, t, x0, z,
                               horizon, horizon - tau, tau)
    return np.maximum(now, late)


def fill_faces(values, policy: BoundaryPolicy, ctx: BoundaryContext = None, axis=0,
               spot_ratio=None):
    """Fill the two faces of ``values`` along ``axis`` in place, per policy.

    ``spot_ratio`` is exp(dx) along the axis, needed by ``linear_spot``:
    extrapolation v_face = v_1 + r^{+-1} (v_1 - v_2) keeps v linear in e^x.
    """
    v = np.moveaxis(values, axis, 0)
    if policy.x_min == "second_derivative_zero":
        v[0] = 2.0 * v[1] - v[2]
    elif policy.x_min == "linear_spot":
        v[0] = v[1] + (v[1] - v[2]) / spot_ratio
    elif policy.x_min == "expectation":
        v[0] = deferred_exercise_values(
            ctx.model, ctx.contract, ctx.q, ctx.t, float(ctx.x_nodes[0]),
            ctx.z_nodes, ctx.horizon, ctx.gamma_tilde(),
        )
    if policy.x_max == "second_derivative_zero":
        v[-1] = 2.0 * v[-2] - v[-3]
    elif policy.x_max == "linear_spot":
        v[-1] = v[-2] + spot_ratio * (v[-2] - v[-3])
    elif policy.x_max == "expectation":
        v[-1] = cap_exercise_values(
            ctx.model, ctx.contract, ctx.q, ctx.t, float(ctx.x_nodes[-1]),
            ctx.z_nodes, ctx.horizon, ctx.gamma_tilde(),
        )
    return values


def apply_boundary(slice_values, policy: BoundaryPolicy, ctx: BoundaryContext):
    """Return a copy of a time slice with its factor faces filled per policy.

    ``one_sided`` faces are left untouched: those nodes carry their own PDE
    update inside the stepping kernel.
    """
    out = np.array(slice_values, dtype=float, copy=True)
    ratio = ctx.spot_ratio() if policy.needs_spot_ratio() else None
    for axis in range(out.ndim - 1):
        fill_faces(out, policy, ctx, axis=axis, spot_ratio=ratio)
    return out
