"""Independent oracles: discrete-time dynamic programming and Monte Carlo.

The DP oracle prices tiny instances of the full joint (exercise, investment)
problem by backward induction over a trinomial-per-noise lattice, entirely
independent of the PDE machinery.  The Monte Carlo layer simulates the factor
under the objective measure or under the perturbed entropy measure and turns
any feedback exercise policy into a lower bound on the indifference price.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .contracts import ContractSpec
from .errors import CapError, ConfigError
from .market import ConstantCorrelationModel

# 3-point quadrature for a standard normal increment: matches mean, variance
# (and kurtosis); probabilities are fixed and always valid.
_TRI_POINTS = np.array([-math.sqrt(3.0), 0.0, math.sqrt(3.0)])
_TRI_PROBS = np.array([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0])


@dataclass(frozen=True)
class DPConfig:
    """Desk-scale caps for the brute-force lattice pricer."""

    n_steps: int = 8
    n_x: int = 41
    n_z: int = 17
    n_u: int = 3
    n_pi: int = 21
    x_halfwidth: Optional[float] = None   # defaults to 4 sigma sqrt(T) + drift allowance
    pi_halfwidth_mult: float = 5.0        # times the frictionless Merton magnitude

    def __post_init__(self):
        if self.n_steps > 16:
            raise CapError(f"DP oracle capped at 16 time steps (got {self.n_steps})")
        if self.n_z > 32:
            raise CapError(f"DP oracle capped at 32 volume levels (got {self.n_z})")
        if self.n_u > 5:
            raise CapError(f"DP oracle capped at 5 exercise choices (got {self.n_u})")
        if self.n_pi > 21:
            raise CapError(f"DP oracle capped at 21 investment choices (got {self.n_pi})")
        if min(self.n_steps, self.n_x, self.n_z, self.n_u, self.n_pi) < 2:
            raise CapError("DP oracle needs at least 2 points per axis")


@dataclass
class DPResult:
    value: float              # expected utility with the claim
    value_no_claim: float
    uip: float
    log_value: float
    log_value_no_claim: float


@dataclass
class PathSet:
    """Simulated factor paths with their provenance.

    ``measure`` is "objective" or "q0"; paths are reproducible from the seed.
    """

    times: np.ndarray
    paths: np.ndarray         # (n_paths, n_steps + 1)
    measure: str
    seed: int
    meta: dict = field(default_factory=dict)

    def to_csv(self, buf):
        buf.write("path,t,x\n")
        for i in range(self.paths.shape[0]):
            for t, x in zip(self.times, self.paths[i]):
                buf.write(f"{i},{t:.17g},{x:.17g}\n")


def girsanov_drift(model: ConstantCorrelationModel, gamma, j0_grad=None):
    """Factor drift under the perturbed entropy measure.

    b_tilde(t, x) = b - rho sigma mu_F / sigma_f_bar - gamma_tilde sigma^2 J0_x
    with gamma_tilde = gamma (1 - rho^2); ``j0_grad`` as in the solvers
    (None means identically zero).
    """
    gamma_tilde = gamma * (1.0 - model.rho**2)

    def drift(t, x):
        x = np.asarray(x, dtype=float)
        out = model.b(t, x) - model.rho * model.sigma(t, x) * model.mu_f(t, x) \
            / model.sigma_f_bar(t, x)
        if j0_grad is not None and gamma_tilde != 0.0:
            out = out - gamma_tilde * model.sigma(t, x) ** 2 * j0_grad(t, x)
        return out

    return drift


def simulate(model: ConstantCorrelationModel, measure, gamma, j0_grad, horizon,
             steps, n_paths, seed, x0, block_size=4096) -> PathSet:
    """Euler-Maruyama factor paths under the objective or Q0 drift.

    Paths are generated block-by-block from seeds spawned off ``seed``, so the
    result is deterministic regardless of how the blocks are executed.
    """
    if measure not in ("objective", "q0"):
        raise ConfigError(f"unknown measure {measure!r}")
    if measure == "q0":
        drift = girsanov_drift(model, gamma, j0_grad)
    else:
        drift = model.b

    dt = horizon / steps
    times = np.linspace(0.0, horizon, steps + 1)
    paths = np.empty((n_paths, steps + 1))
    seeds = np.random.SeedSequence(seed).spawn(math.ceil(n_paths / block_size))
    start = 0
    for ss in seeds:
        stop = min(start + block_size, n_paths)
        rng = np.random.default_rng(ss)
        shocks = rng.standard_normal((stop - start, steps))
        x = np.full(stop - start, float(x0))
        paths[start:stop, 0] = x
        for k in range(steps):
            t = times[k]
            x = x + np.asarray(drift(t, x), dtype=float) * dt \
                + np.asarray(model.sigma(t, x), dtype=float) * math.sqrt(dt) * shocks[:, k]
            paths[start:stop, k + 1] = x
        start = stop
    return PathSet(times=times, paths=paths, measure=measure, seed=seed,
                   meta={"x0": x0, "steps": steps})


@dataclass
class DualBound:
    value: float
    stderr: float
    n_paths: int
    seed: int


def dual_lower_bound(model: ConstantCorrelationModel, contract: ContractSpec, q,
                     gamma, policy, paths: PathSet) -> DualBound:
    """Lower bound on the indifference price from one feedback exercise policy.

    Evaluates -(1/gamma_tilde) log E_Q0[exp(-gamma_tilde q C^u)] by Monte
    Carlo along ``paths`` (which must be Q0 paths), with u given by the
    policy's nearest-node lookup.  Standard error via the delta method.
    """
    if paths.measure != "q0":
        raise ConfigError("the dual bound needs paths simulated under q0")
    gamma_tilde = gamma * (1.0 - model.rho**2)
    if gamma_tilde <= 0.0:
        raise ConfigError("dual bound needs gamma (1 - rho^2) > 0")

    times = paths.times
    dt = times[1] - times[0]
    n = paths.paths.shape[0]
    z = np.zeros(n)
    payoff = np.zeros(n)
    x_lo = policy.x_nodes[0][0]
    x_hi = policy.x_nodes[0][-1]
    if paths.paths.min() < x_lo - 1e-9 or paths.paths.max() > x_hi + 1e-9:
        import warnings
        warnings.warn("paths leave the policy grid; nearest-node extrapolation in use",
                      stacklevel=2)
    for k in range(len(times) - 1):
        t = times[k]
        x = paths.paths[:, k]
        u = policy.exercise_lookup(t, x, z)
        p = np.asarray(model.spot_map(t, x), dtype=float)
        payoff += contract._clamped_payoff(p, z, u) * dt
        z = z + u * dt
    p_term = np.asarray(model.spot_map(times[-1], paths.paths[:, -1]), dtype=float)
    payoff += np.asarray(contract._clamped_penalty(p_term, z), dtype=float)

    weights = np.exp(-gamma_tilde * q * payoff)
    mean = float(weights.mean())
    se_mean = float(weights.std(ddof=1)) / math.sqrt(n)
    value = -math.log(mean) / gamma_tilde
    stderr = se_mean / (gamma_tilde * mean)
    return DualBound(value=value, stderr=stderr, n_paths=n, seed=paths.seed)


# ---------------------------------------------------------------------------
# Dynamic-programming oracle
# ---------------------------------------------------------------------------

def dp_value(model: ConstantCorrelationModel, contract: ContractSpec, q, gamma,
             cfg: DPConfig, x0, z0=0.0, y0=0.0) -> DPResult:
    """Brute-force joint (exercise, investment) backward induction.

    State (x, z) on a fixed lattice; per step the two Brownian coordinates
    take trinomial values, the controls range over small grids, and the
    continuation value is bilinearly interpolated at (x', z').  Initial
    wealth ``y0`` factors out of the utilities and cancels exactly in the
    indifference price.
    """
    horizon = model.horizon
    dt = horizon / cfg.n_steps
    rho, rho_c = model.rho, math.sqrt(1.0 - model.rho**2)

    sigma0 = float(model.sigma(0.0, np.asarray(x0)))
    half = cfg.x_halfwidth
    if half is None:
        drift0 = abs(float(model.b(0.0, np.asarray(x0))))
        half = 4.0 * sigma0 * math.sqrt(horizon) + drift0 * horizon
    xs = np.linspace(x0 - half, x0 + half, cfg.n_x)
    zs = np.linspace(0.0, contract.z_domain[1], cfg.n_z)
    if float(np.min(np.abs(zs - z0))) > 1e-12:
        raise ConfigError("z0 must be a lattice level of the DP grid")

    # control grids
    lo, hi = contract.control.bounds(zs)
    u_grid = np.linspace(float(np.min(lo)), float(np.max(hi)), cfg.n_u)
    mu0 = float(model.mu_f(0.0, np.asarray(x0)))
    sf0 = float(model.sigma_f_bar(0.0, np.asarray(x0)))
    merton = abs(mu0) / (gamma * sf0**2)
    pi_half = cfg.pi_halfwidth_mult * max(merton, 1.0)
    pi_grid = np.linspace(-pi_half, pi_half, cfg.n_pi)

    xg, zg = np.meshgrid(xs, zs, indexing="ij")

    def backward(q_units):
        p_term = np.asarray(model.spot_map(horizon, xg), dtype=float)
        w = -np.exp(-gamma * q_units * np.asarray(
            contract._clamped_penalty(p_term, zg), dtype=float)) / gamma
        for k in range(cfg.n_steps - 1, -1, -1):
            t = k * dt
            b_row = np.asarray(model.b(t, xs), dtype=float)
            sig_row = np.asarray(model.sigma(t, xs), dtype=float)
            mu_row = np.asarray(model.mu_f(t, xs), dtype=float)
            sf_row = np.asarray(model.sigma_f_bar(t, xs), dtype=float)
            p_row = np.asarray(model.spot_map(t, xs), dtype=float)
            best = np.full((cfg.n_x, cfg.n_z), -np.inf)
            for u in u_grid:
                z_next = zg + u * dt
                run = q_units * np.asarray(
                    contract._clamped_payoff(p_row[:, None], zg, u), dtype=float)
                for pi in pi_grid:
                    val = np.zeros((cfg.n_x, cfg.n_z))
                    for xi1, pr1 in zip(_TRI_POINTS, _TRI_PROBS):
                        for xi2, pr2 in zip(_TRI_POINTS, _TRI_PROBS):
                            dw1 = math.sqrt(dt) * xi1
                            dw2 = math.sqrt(dt) * xi2
                            x_next = xs + b_row * dt + sig_row * (rho * dw1 + rho_c * dw2)
                            gain = pi * (mu_row * dt + sf_row * dw1)
                            cont = _interp_xz(w, xs, zs, x_next, z_next)
                            val += pr1 * pr2 * np.exp(-gamma * gain)[:, None] * cont
                    val *= np.exp(-gamma * run * dt)
                    best = np.maximum(best, val)
            w = best
        return w

    w_claim = backward(q)
    w_none = backward(0.0)
    ix = int(np.argmin(np.abs(xs - x0)))
    iz = int(np.argmin(np.abs(zs - z0)))
    wealth_factor = math.exp(-gamma * y0)
    v_claim = wealth_factor * float(w_claim[ix, iz])
    v_none = wealth_factor * float(w_none[ix, iz])
    uip = -math.log(v_claim / v_none) / gamma   # wealth factor cancels in the ratio
    return DPResult(
        value=v_claim,
        value_no_claim=v_none,
        uip=uip,
        log_value=-math.log(-float(w_claim[ix, iz])) / gamma,
        log_value_no_claim=-math.log(-float(w_none[ix, iz])) / gamma,
    )


def _interp_xz(w, xs, zs, x_next, z_next):
    """Bilinear interpolation of w at (x_next[i], z_next[i, j]), clamped."""
    dx = xs[1] - xs[0]
    fx = np.clip((x_next - xs[0]) / dx, 0.0, len(xs) - 1.0)
    ix = np.minimum(fx.astype(int), len(xs) - 2)
    wx = fx - ix
    dz = zs[1] - zs[0]
    fz = np.clip((z_next - zs[0]) / dz, 0.0, len(zs) - 1.0)
    iz = np.minimum(fz.astype(int), len(zs) - 2)
    wz = fz - iz
    w00 = w[ix[:, None], iz]
    w10 = w[ix[:, None] + 1, iz]
    w01 = w[ix[:, None], iz + 1]
    w11 = w[ix[:, None] + 1, iz + 1]
    wxc = wx[:, None]
    return (1 - wxc) * (1 - wz) * w00 + wxc * (1 - wz) * w10 \
        + (1 - wxc) * wz * w01 + wxc * wz * w11
