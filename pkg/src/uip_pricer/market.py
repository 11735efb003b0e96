"""Market models: factor/forward dynamics and the derived coefficient algebra.

The general model has m factors X driven by d Brownian motions,
    dX = b(t,X) dt + Sigma*(t,X) dW,
and n <= d traded forwards with relative drift mu_F(t,X) and volatility
sigma_F(t,X) (d x n).  The spot of the structured contract's underlying is
p(t, X).  From these the pricing PDEs need three derived quantities:

* the risk-adjusted factor drift  b_bar = b - Sigma* sigma_F (sigma_F* sigma_F)^{-1} mu_F,
* the unspanned factor covariance B = Sigma* (I - sigma_F (sigma_F* sigma_F)^{-1} sigma_F*) Sigma,
  which is zero exactly when the forward market spans all factor risk,
* the investment value rate (1/2 gamma) <(sigma_F* sigma_F)^{-1} mu_F, mu_F>.

Two concrete families are provided: a two-asset constant-correlation model
(one traded forward, one non-traded factor) and a correlated two-factor
Cartea-Villaplana electricity model with one or two traded forwards.

Model objects are immutable after construction; every operation here is a
pure function of (model, t, x) and safe for concurrent evaluation.
"""

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import SingularForwardCovError

# Rank decisions on B use this relative eigenvalue threshold.
RANK_TOL = 1e-10


@dataclass(frozen=True)
class FactorDynamics:
    """Markovian factor process: dX = drift dt + vol_transpose dW.

    ``drift(t, x) -> (m,)`` and ``vol_transpose(t, x) -> (m, d)`` must return
    finite arrays for in-domain arguments.
    """

    dim_factors: int
    dim_noise: int
    drift: Callable
    vol_transpose: Callable

    def __post_init__(self):
        if self.dim_factors < 1 or self.dim_noise < 1:
            raise ValueError("factor and noise dimensions must be positive")


@dataclass(frozen=True)
class ForwardDynamics:
    """Traded forwards: dF/F = mu_F dt + sigma_F* dW, maturities >= horizon."""

    n_forwards: int
    maturities: tuple
    drift: Callable          # (t, x) -> (n,)
    vol: Callable            # (t, x) -> (d, n)

    def __post_init__(self):
        if self.n_forwards < 1:
            raise ValueError("need at least one forward contract")
        if len(self.maturities) != self.n_forwards:
            raise ValueError("one maturity per forward required")
        mats = tuple(self.maturities)
        if any(b < a for a, b in zip(mats, mats[1:])):
            raise ValueError("maturities must be nondecreasing")


@dataclass(frozen=True)
class MarketModel:
    """Factors + forwards + spot map p(t, x) on a horizon [0, T]."""

    factors: FactorDynamics
    forwards: ForwardDynamics
    spot_map: Callable       # (t, x) -> float
    horizon: float

    def __post_init__(self):
        if self.forwards.n_forwards > self.factors.dim_noise:
            raise ValueError("cannot trade more forwards than noise sources")
        if self.forwards.maturities[0] < self.horizon:
            raise ValueError("forward maturities must not precede the horizon")


def _forward_cov_solve(sigma_f, rhs, t, x):
    """Solve (sigma_F* sigma_F) y = rhs with an SPD factorization.

    Raises SingularForwardCovError with the offending (t, x) when the
    covariance is numerically singular; ellipticity is a modelling
    hypothesis, numerics must detect near-violations.
    """
    cov = sigma_f.T @ sigma_f
    cov = 0.5 * (cov + cov.T)
    w = np.linalg.eigvalsh(cov)
    if w[0] <= 1e-14 * max(w[-1], 1.0):
        cond = np.inf if w[0] <= 0 else w[-1] / w[0]
        raise SingularForwardCovError(t, x, cond)
    try:
        c = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise SingularForwardCovError(t, x) from None
    y = np.linalg.solve(c.T, np.linalg.solve(c, rhs))
    return y


def effective_drift(model: MarketModel, t, x):
    """Risk-adjusted factor drift b_bar = b - Sigma* sigma_F (sigma_F* sigma_F)^{-1} mu_F."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    b = np.atleast_1d(np.asarray(model.factors.drift(t, x), dtype=float))
    sig_t = np.atleast_2d(np.asarray(model.factors.vol_transpose(t, x), dtype=float))
    sigma_f = np.atleast_2d(np.asarray(model.forwards.vol(t, x), dtype=float))
    mu_f = np.atleast_1d(np.asarray(model.forwards.drift(t, x), dtype=float))
    y = _forward_cov_solve(sigma_f, mu_f, t, x)
    return b - sig_t @ (sigma_f @ y)


def unspanned_cov(model: MarketModel, t, x):
    """Factor covariance left unspanned by the forwards (the quadratic-form matrix).

    Returns the symmetric PSD matrix
    Sigma* (I_d - sigma_F (sigma_F* sigma_F)^{-1} sigma_F*) Sigma; it vanishes
    when the market is complete.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sig_t = np.atleast_2d(np.asarray(model.factors.vol_transpose(t, x), dtype=float))
    sigma_f = np.atleast_2d(np.asarray(model.forwards.vol(t, x), dtype=float))
    g = sig_t @ sigma_f                      # (m, n)
    y = _forward_cov_solve(sigma_f, g.T, t, x)
    b_mat = sig_t @ sig_t.T - g @ y
    return 0.5 * (b_mat + b_mat.T)


def sharpe_term(model: MarketModel, t, x, gamma):
    """Investment value rate (1/(2 gamma)) <(sigma_F* sigma_F)^{-1} mu_F, mu_F>."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    sigma_f = np.atleast_2d(np.asarray(model.forwards.vol(t, x), dtype=float))
    mu_f = np.atleast_1d(np.asarray(model.forwards.drift(t, x), dtype=float))
    y = _forward_cov_solve(sigma_f, mu_f, t, x)
    return float(mu_f @ y) / (2.0 * gamma)


def cov_image_basis(b_mat, tol=RANK_TOL, scale=None):
    """Orthonormal basis of Im(B) via eigendecomposition.

    Eigenvalues below ``tol * max_eigenvalue`` are treated as zero; the exact
    image is numerically ambiguous, so the threshold is part of the contract.
    ``scale`` (e.g. tr(Sigma* Sigma)) adds an absolute floor so an exactly
    complete market is not assigned spurious rank from rounding noise.
    """
    w, v = np.linalg.eigh(0.5 * (b_mat + b_mat.T))
    cutoff = tol * max(w[-1], 0.0)
    if scale is not None:
        cutoff = max(cutoff, 1e-13 * abs(scale))
    keep = w > cutoff
    return v[:, keep], w[keep]


# ---------------------------------------------------------------------------
# Constant-correlation family (one traded forward, one non-traded factor)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AffineDrift:
    """Drift of the form c0 + c1 * x, used for closed-form OU moments."""

    c0: float
    c1: float

    def __call__(self, x):
        return self.c0 + self.c1 * np.asarray(x, dtype=float)


@dataclass(frozen=True)
class ConstantCorrelationModel:
    """Two-asset model: traded forward F and non-traded factor X, correlation rho.

        dF/F = mu_F(t,X) dt + sigma_f_bar(t,X) dW1
        dX   = b(t,X) dt + sigma(t,X) (rho dW1 + sqrt(1-rho^2) dW2)

    All coefficient callables take (t, x) with x scalar or ndarray and must
    broadcast.  Reductions used throughout:

        b_bar  = b - rho sigma mu_F / sigma_f_bar
        B      = (1 - rho^2) sigma^2
        sharpe = mu_F^2 / (2 gamma sigma_f_bar^2)
    """

    mu_f: Callable
    sigma_f_bar: Callable
    b: Callable
    sigma: Callable
    rho: float
    spot_map: Callable
    horizon: float
    # Affine metadata when the drifts are affine in x (linear-dynamics family);
    # enables closed-form OU moments for boundary rules and oracles.
    b_affine: Optional[AffineDrift] = None
    b_bar_affine: Optional[AffineDrift] = None

    def __post_init__(self):
        if not -1.0 < self.rho < 1.0:
            raise ValueError("correlation must lie in (-1, 1)")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")

    # Scalar/vectorized coefficient reductions -----------------------------

    def effective_drift(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.b(t, x) - self.rho * self.sigma(t, x) * self.mu_f(t, x) / self.sigma_f_bar(t, x)

    def unspanned_cov(self, t, x):
        x = np.asarray(x, dtype=float)
        return (1.0 - self.rho**2) * self.sigma(t, x) ** 2

    def sharpe(self, t, x, gamma):
        x = np.asarray(x, dtype=float)
        return self.mu_f(t, x) ** 2 / (self.sigma_f_bar(t, x) ** 2 * 2.0 * gamma)

    def diffusion(self, t, x):
        x = np.asarray(x, dtype=float)
        return self.sigma(t, x) ** 2

    def as_market_model(self) -> MarketModel:
        rho = self.rho
        rho_c = math.sqrt(1.0 - rho**2)

        def drift(t, x):
            return np.atleast_1d(self.b(t, np.asarray(x, dtype=float)[..., 0]))

        def vol_t(t, x):
            s = float(self.sigma(t, np.asarray(x, dtype=float)[..., 0]))
            return np.array([[s * rho, s * rho_c]])

        def fwd_drift(t, x):
            return np.atleast_1d(self.mu_f(t, np.asarray(x, dtype=float)[..., 0]))

        def fwd_vol(t, x):
            sf = float(self.sigma_f_bar(t, np.asarray(x, dtype=float)[..., 0]))
            return np.array([[sf], [0.0]])

        return MarketModel(
            factors=FactorDynamics(1, 2, drift, vol_t),
            forwards=ForwardDynamics(1, (self.horizon,), fwd_drift, fwd_vol),
            spot_map=lambda t, x: self.spot_map(t, np.asarray(x, dtype=float)[..., 0]),
            horizon=self.horizon,
        )


# ---------------------------------------------------------------------------
# Cartea-Villaplana two-factor electricity model with correlation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CarteaVillaplanaModel:
    """Two OU factors (capacity, demand) with correlated noise and seasonal spot.

    Spot: P = exp(eta(t) + alpha_c * x_c + alpha_d * x_d), alpha_c < 0 < alpha_d.
    Forward volatilities are deterministic functions of time; with one traded
    forward the market is incomplete (rank-one unspanned covariance), with two
    it is complete.
    """

    k_c: float
    k_d: float
    alpha_c: float
    alpha_d: float
    sigma_c: Callable                       # (t,) -> float, bounded away from 0
    sigma_d: Callable
    rho: float
    eta: Callable                           # seasonal log-level, (t,) -> float
    mu_f: Callable                          # (t,) -> float, applied per forward
    maturities: Sequence[float] = field(default=None)  # type: ignore[assignment]
    horizon: float = 1.0

    def __post_init__(self):
        if not (self.alpha_c < 0.0 < self.alpha_d):
            raise ValueError("need alpha_c < 0 and alpha_d > 0")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("correlation must lie in (-1, 1)")
        if self.maturities is None:
            object.__setattr__(self, "maturities", (self.horizon,))
        mats = tuple(float(m) for m in self.maturities)
        if len(mats) not in (1, 2):
            raise ValueError("one or two forward maturities supported")
        if any(m < self.horizon for m in mats):
            raise ValueError("forward maturities must not precede the horizon")
        object.__setattr__(self, "maturities", mats)

    @property
    def n_forwards(self):
        return len(self.maturities)

    def spot_map(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.exp(self.eta(t) + self.alpha_c * x[..., 0] + self.alpha_d * x[..., 1])

    def factor_vol_transpose(self, t):
        """Sigma*(t): rows are the factor exposures to the two Brownian motions."""
        sc, sd = self.sigma_c(t), self.sigma_d(t)
        r, rc = self.rho, math.sqrt(1.0 - self.rho**2)
        return np.array([[sc, 0.0], [r * sd, rc * sd]])

    def forward_vol(self, t, maturity_index=0):
        """Explicit 2-vector sigma_F column for one forward, expanded form.

        (alpha_c e^{-k_c (T_i - t)} sigma_c + rho alpha_d e^{-k_d (T_i - t)} sigma_d,
         sqrt(1 - rho^2) alpha_d e^{-k_d (T_i - t)} sigma_d)
        """
        t_i = self.maturities[maturity_index]
        if t > t_i:
            raise ValueError(f"t={t} beyond forward maturity T_{maturity_index + 1}={t_i}")
        sc, sd = self.sigma_c(t), self.sigma_d(t)
        damp_c = self.alpha_c * math.exp(-self.k_c * (t_i - t)) * sc
        damp_d = self.alpha_d * math.exp(-self.k_d * (t_i - t)) * sd
        return np.array([damp_c + self.rho * damp_d, math.sqrt(1.0 - self.rho**2) * damp_d])

    def forward_vol_matrix(self, t):
        """sigma_F(t) as a (d, n) matrix built from raw damping blocks.

        Assembled as M(t) R with M the exponential-damping block and R the
        correlation loading; kept distinct from :meth:`forward_vol` so the two
        constructions cross-check each other.
        """
        damp = np.array(
            [
                [
                    self.alpha_c * math.exp(-self.k_c * (ti - t)) * self.sigma_c(t),
                    self.alpha_d * math.exp(-self.k_d * (ti - t)) * self.sigma_d(t),
                ]
                for ti in self.maturities
            ]
        )
        load = np.array([[1.0, 0.0], [self.rho, math.sqrt(1.0 - self.rho**2)]])
        return (damp @ load).T

    def forward_cov(self, t):
        """|sigma_F|^2(t) for the single-forward case, expanded closed form."""
        tau = self.maturities[0] - t
        sc, sd = self.sigma_c(t), self.sigma_d(t)
        return (
            self.alpha_d**2 * sd**2 * math.exp(-2.0 * self.k_d * tau)
            + self.alpha_c**2 * sc**2 * math.exp(-2.0 * self.k_c * tau)
            + 2.0 * self.rho * self.alpha_c * self.alpha_d * sc * sd
            * math.exp(-(self.k_c + self.k_d) * tau)
        )

    def unspanned_cov_closed_form(self, t):
        """Closed-form unspanned covariance for the single-forward case.

        kappa(t) * [[ad^2 e^{-2 k_d tau}, -ac ad e^{-(k_c+k_d) tau}],
                    [-ac ad e^{-(k_c+k_d) tau}, ac^2 e^{-2 k_c tau}]]
        with kappa = (1-rho^2) sigma_c^2 sigma_d^2 / |sigma_F|^2.
        """
        if self.n_forwards != 1:
            raise ValueError("closed form applies to the single-forward case")
        tau = self.maturities[0] - t
        sc, sd = self.sigma_c(t), self.sigma_d(t)
        kappa = (1.0 - self.rho**2) * sc**2 * sd**2 / self.forward_cov(t)
        e_c = math.exp(-self.k_c * tau)
        e_d = math.exp(-self.k_d * tau)
        off = -self.alpha_c * self.alpha_d * e_c * e_d
        return kappa * np.array(
            [[self.alpha_d**2 * e_d**2, off], [off, self.alpha_c**2 * e_c**2]]
        )

    def unspanned_eigenvalue(self, t):
        """Nonzero eigenvalue of the rank-one unspanned covariance (= its trace)."""
        if self.n_forwards != 1:
            raise ValueError("rank-one structure applies to the single-forward case")
        tau = self.maturities[0] - t
        sc, sd = self.sigma_c(t), self.sigma_d(t)
        kappa = (1.0 - self.rho**2) * sc**2 * sd**2 / self.forward_cov(t)
        return kappa * (
            self.alpha_d**2 * math.exp(-2.0 * self.k_d * tau)
            + self.alpha_c**2 * math.exp(-2.0 * self.k_c * tau)
        )

    def as_market_model(self) -> MarketModel:
        def drift(t, x):
            x = np.asarray(x, dtype=float)
            return np.array([-self.k_c * x[..., 0], -self.k_d * x[..., 1]])

        def vol_t(t, x):
            return self.factor_vol_transpose(t)

        def fwd_drift(t, x):
            return np.full(self.n_forwards, float(self.mu_f(t)))

        def fwd_vol(t, x):
            return self.forward_vol_matrix(t)

        return MarketModel(
            factors=FactorDynamics(2, 2, drift, vol_t),
            forwards=ForwardDynamics(self.n_forwards, self.maturities, fwd_drift, fwd_vol),
            spot_map=lambda t, x: self.spot_map(t, x),
            horizon=self.horizon,
        )


# ---------------------------------------------------------------------------
# Assumption audits
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    """Sample-based estimates of the standing regularity assumptions.

    Audits are sample-based over the computational box rather than symbolic:
    coefficients are arbitrary user functions.  The report never raises; it
    flags violations for the caller to act on.
    """

    n_samples: int
    ellipticity_min: float
    unspanned_eig_min: float
    unspanned_eig_max: float
    delta_estimate: float
    rank_range: tuple
    lipschitz: dict
    violations: list

    @property
    def ok(self):
        return not self.violations


def audit_assumptions(model: MarketModel, domain, samples=200, seed=0,
                      ellipticity_floor=1e-8, lipschitz_limits=None) -> AuditReport:
    """Estimate ellipticity, unspanned-spectrum bounds and growth constants.

    ``domain`` is a sequence of (lo, hi) pairs, one per factor dimension.
    Samples (t, x) uniformly over [0, T] x box.  ``lipschitz_limits`` maps
    coefficient names to audit thresholds; estimates above them are flagged.
    """
    rng = np.random.default_rng(seed)
    domain = [tuple(map(float, pair)) for pair in domain]
    if any(hi <= lo for lo, hi in domain):
        raise ValueError("domain box must be nonempty")
    m = model.factors.dim_factors
    if len(domain) != m:
        raise ValueError("one (lo, hi) pair per factor dimension required")

    ts = rng.uniform(0.0, model.horizon, size=samples)
    xs = np.column_stack([rng.uniform(lo, hi, size=samples) for lo, hi in domain])

    ell_min = np.inf
    eig_min, eig_max = np.inf, 0.0
    ranks = []
    lip = {name: 0.0 for name in ("b", "sigma", "mu_f", "sigma_f")}
    violations = []

    for t, x in zip(ts, xs):
        sigma_f = np.atleast_2d(np.asarray(model.forwards.vol(t, x), dtype=float))
        cov = sigma_f.T @ sigma_f
        ell = float(np.linalg.eigvalsh(0.5 * (cov + cov.T))[0])
        ell_min = min(ell_min, ell)
        try:
            b_mat = unspanned_cov(model, t, x)
        except SingularForwardCovError:
            violations.append(f"singular forward covariance at t={t:.4g}, x={np.round(x, 4)}")
            continue
        sig_t = np.atleast_2d(np.asarray(model.factors.vol_transpose(t, x), dtype=float))
        _, eigs = cov_image_basis(b_mat, scale=float(np.trace(sig_t @ sig_t.T)))
        ranks.append(len(eigs))
        if len(eigs):
            eig_min = min(eig_min, float(eigs.min()))
            eig_max = max(eig_max, float(eigs.max()))

        # Difference-quotient growth estimates against a second sample point.
        x2 = np.array([rng.uniform(lo, hi) for lo, hi in domain])
        dx = float(np.linalg.norm(x2 - x))
        if dx > 1e-12:
            for name, fn in (
                ("b", model.factors.drift),
                ("sigma", model.factors.vol_transpose),
                ("mu_f", model.forwards.drift),
                ("sigma_f", model.forwards.vol),
            ):
                d = np.linalg.norm(np.asarray(fn(t, x2), dtype=float)
                                   - np.asarray(fn(t, x), dtype=float))
                lip[name] = max(lip[name], float(d) / dx)

    if ell_min < ellipticity_floor:
        violations.append(
            f"forward covariance ellipticity estimate {ell_min:.3e} below {ellipticity_floor:.1e}"
        )
    if ranks and min(ranks) != max(ranks):
        violations.append(f"unspanned covariance rank varies over samples: {min(ranks)}..{max(ranks)}")
    if lipschitz_limits:
        for name, limit in lipschitz_limits.items():
            if lip.get(name, 0.0) > limit:
                violations.append(f"Lipschitz estimate for {name} = {lip[name]:.3g} exceeds {limit:.3g}")

    if eig_min is np.inf:  # complete market at every sample: Im(B) = {0}
        eig_min, eig_max, delta = 0.0, 0.0, 1.0
    else:
        delta = max(eig_max, 1.0 / eig_min)
    return AuditReport(
        n_samples=samples,
        ellipticity_min=float(ell_min),
        unspanned_eig_min=float(eig_min),
        unspanned_eig_max=float(eig_max),
        delta_estimate=float(delta),
        rank_range=(min(ranks), max(ranks)) if ranks else (0, 0),
        lipschitz=lip,
        violations=violations,
    )
