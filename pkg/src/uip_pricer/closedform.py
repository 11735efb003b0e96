"""Closed-form no-claim log-value: Riccati ansatz and deterministic time integrals.

For the linear-dynamics model (affine forward drift a - k x, OU factor) the
no-claim log-value is the quadratic

    J0(t, x) = const(t) + lin(t) x + quad(t) x^2,

whose coefficients solve a terminal-value ODE system: a Riccati equation in
the quadratic coefficient, then a linear equation in the linear coefficient,
then a quadrature for the constant.  For the Cartea-Villaplana families the
coefficients are time-only and J0 reduces to an explicit time integral.
"""

from dataclasses import dataclass

import math

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import RiccatiBlowupError
from .market import AffineDrift, CarteaVillaplanaModel, ConstantCorrelationModel

RICCATI_BLOWUP = 1e12


@dataclass(frozen=True)
class LinearDynamicsParams:
    """Constant-coefficient two-asset model with affine forward drift.

        dF/F = (a - k X) dt + sigma_f dW1
        dX   = delta (theta - X) dt + sigma (rho dW1 + sqrt(1-rho^2) dW2)

    Spot is exp(X).  ``gamma`` is the risk aversion the no-claim problem is
    solved for; ``horizon`` the terminal time.
    """

    a: float
    k: float
    sigma_f: float
    delta: float
    theta: float
    sigma: float
    rho: float
    gamma: float
    horizon: float

    def __post_init__(self):
        if self.sigma_f <= 0 or self.sigma <= 0:
            raise ValueError("volatilities must be positive")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("correlation must lie in (-1, 1)")
        if self.gamma <= 0:
            raise ValueError("risk aversion must be positive")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    def model(self) -> ConstantCorrelationModel:
        a, k = self.a, self.k
        delta, theta = self.delta, self.theta
        sig, sig_f = self.sigma, self.sigma_f
        rho = self.rho
        b_bar = AffineDrift(
            delta * theta - rho * sig * a / sig_f,
            rho * sig * k / sig_f - delta,
        )
        return ConstantCorrelationModel(
            mu_f=lambda t, x: a - k * np.asarray(x, dtype=float),
            sigma_f_bar=lambda t, x: sig_f * np.ones_like(np.asarray(x, dtype=float)),
            b=lambda t, x: delta * (theta - np.asarray(x, dtype=float)),
            sigma=lambda t, x: sig * np.ones_like(np.asarray(x, dtype=float)),
            rho=rho,
            spot_map=lambda t, x: np.exp(np.asarray(x, dtype=float)),
            horizon=self.horizon,
            b_affine=AffineDrift(delta * theta, -delta),
            b_bar_affine=b_bar,
        )


@dataclass(frozen=True)
class RiccatiSolution:
    """Tabulated quadratic-ansatz coefficients with cubic interpolation.

    Terminal values: const(T) = log(gamma)/gamma, lin(T) = quad(T) = 0.
    """

    params: LinearDynamicsParams
    t_nodes: np.ndarray
    const_tab: np.ndarray
    lin_tab: np.ndarray
    quad_tab: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "_const", CubicSpline(self.t_nodes, self.const_tab))
        object.__setattr__(self, "_lin", CubicSpline(self.t_nodes, self.lin_tab))
        object.__setattr__(self, "_quad", CubicSpline(self.t_nodes, self.quad_tab))

    def coefficients(self, t):
        return float(self._const(t)), float(self._lin(t)), float(self._quad(t))

    def value(self, t, x):
        c, l, g = self.coefficients(t)
        x = np.asarray(x, dtype=float)
        return c + l * x + g * x**2

    def gradient(self, t, x):
        _, l, g = self.coefficients(t)
        return l + 2.0 * g * np.asarray(x, dtype=float)


def _ode_rhs(params: LinearDynamicsParams):
    """Right-hand sides d/dt (const, lin, quad) of the terminal-value system."""
    a, k = params.a, params.k
    sf2 = params.sigma_f**2
    gamma = params.gamma
    sig = params.sigma
    rho = params.rho
    delta, theta = params.delta, params.theta
    mix = rho * sig / params.sigma_f           # rho sigma / sigma_f
    nl = gamma * sig**2 * (1.0 - rho**2)       # quadratic-coupling coefficient

    def rhs(t, y):
        c, l, g = y
        dc = -(a**2 / (2.0 * gamma * sf2) + (delta * theta - mix * a) * l
               - 0.5 * nl * l**2 + sig**2 * g)
        dl = -((mix * k - delta - 2.0 * nl * g) * l - a * k / (gamma * sf2)
               + 2.0 * (delta * theta - mix * a) * g)
        dg = -(k**2 / (2.0 * gamma * sf2) + 2.0 * (mix * k - delta) * g - 2.0 * nl * g**2)
        return np.array([dc, dl, dg])

    return rhs


def solve_riccati(params: LinearDynamicsParams, steps=10_000) -> RiccatiSolution:
    """Integrate the coefficient ODEs backward from T with fixed-step RK4.

    The quadratic coefficient solves a Riccati equation (integrated first),
    the linear coefficient a linear equation, the constant a quadrature; the
    coupled system is integrated jointly, which respects that ordering.
    Fixed-step classical RK4 keeps results deterministic.  Raises
    RiccatiBlowupError if the quadratic coefficient explodes before t = 0.
    """
    if steps < 2:
        raise ValueError("need at least 2 integration steps")
    t_end = params.horizon
    h = t_end / steps
    rhs = _ode_rhs(params)
    ts = np.linspace(0.0, t_end, steps + 1)
    out = np.empty((steps + 1, 3))
    out[steps] = (math.log(params.gamma) / params.gamma, 0.0, 0.0)
    y = out[steps].copy()
    for i in range(steps, 0, -1):
        t = ts[i]
        k1 = rhs(t, y)
        k2 = rhs(t - 0.5 * h, y - 0.5 * h * k1)
        k3 = rhs(t - 0.5 * h, y - 0.5 * h * k2)
        k4 = rhs(t - h, y - h * k3)
        y = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y)) or abs(y[2]) > RICCATI_BLOWUP:
            raise RiccatiBlowupError(ts[i - 1])
        out[i - 1] = y
    return RiccatiSolution(params, ts, out[:, 0].copy(), out[:, 1].copy(), out[:, 2].copy())


def no_claim_value(sol: RiccatiSolution, t, x):
    """Quadratic-ansatz no-claim log-value at (t, x)."""
    return sol.value(t, x)


def no_claim_gradient(sol: RiccatiSolution, t, x):
    """x-gradient lin(t) + 2 quad(t) x of the no-claim log-value."""
    return sol.gradient(t, x)


def no_claim_value_cv(model: CarteaVillaplanaModel, gamma, t):
    """No-claim log-value of the Cartea-Villaplana families (time-only).

    One forward: log(gamma)/gamma + int_t^T mu_F^2(s) / (2 gamma |sigma_F(s)|^2) ds.
    Two forwards: the matrix version with (sigma_F* sigma_F)^{-1}(s).
    Uses adaptive quadrature; the integrand is smooth and deterministic.
    """
    from scipy.integrate import quad  # local import keeps scipy optional at import time

    t_end = model.horizon
    if not 0.0 <= t <= t_end:
        raise ValueError("t must lie in [0, horizon]")
    base = math.log(gamma) / gamma
    if t == t_end:
        return base

    if model.n_forwards == 1:
        def integrand(s):
            cov = model.forward_cov(s)
            if cov <= 0.0:
                raise ZeroDivisionError(f"|sigma_F|^2 vanishes at s={s}")
            return model.mu_f(s) ** 2 / (2.0 * gamma * cov)
    else:
        def integrand(s):
            sf = model.forward_vol_matrix(s)
            cov = sf.T @ sf
            mu = np.full(model.n_forwards, float(model.mu_f(s)))
            return float(mu @ np.linalg.solve(cov, mu)) / (2.0 * gamma)

    val, _ = quad(integrand, t, t_end, limit=200)
    return base + val
