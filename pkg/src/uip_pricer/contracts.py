"""Structured-contract payoffs and the pointwise exercise Hamiltonian.

A contract accumulates cash at rate L(P, Z, u) for an exercise rate u and
pays a terminal penalty Phi(P_T, Z_T) on the cumulated volume Z.  The PDE
solvers only interact with contracts through

    sup_u [ u * v_z + q * w * L(p, z, u) ]

over the admissible control range (``w`` is an optional positive weight used
by the exponential-transform solver).  For payoffs linear in u this sup is
bang-bang and is evaluated in closed form; otherwise a configurable u-grid
scan is used (clamping breaks linearity, so clamped contracts always scan).
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ControlRangeError


@dataclass(frozen=True)
class SwingSpec:
    """Swing contract data: L = u (p - strike), volume band [m, M]."""

    strike: float
    u_max: float
    m: float
    big_m: float
    penalty_scale: float
    penalty_kind: str = "two_sided"  # or "upper_only"

    def __post_init__(self):
        if not 0.0 <= self.m < self.big_m:
            raise ValueError("volume band requires 0 <= m < M")
        if self.penalty_scale <= 0 or self.u_max <= 0:
            raise ValueError("penalty scale and max rate must be positive")
        if self.penalty_kind not in ("two_sided", "upper_only"):
            raise ValueError(f"unknown penalty kind {self.penalty_kind!r}")


@dataclass(frozen=True)
class StorageSpec:
    """Virtual gas storage data: L = p (u - bleed * 1_{u<0}), physical rate bounds."""

    k1: float
    k2: float
    k3: float
    z_base: float
    bleed: float
    penalty_scale: float
    big_m: float

    def __post_init__(self):
        for name in ("k1", "k2", "k3", "z_base", "penalty_scale", "big_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.bleed < 0:
            raise ValueError("bleed rate must be nonnegative")


@dataclass(frozen=True)
class ClampSpec:
    """Hard bound on instantaneous and terminal cashflows: |L| <= kappa, |Phi| <= kappa_phi."""

    kappa: float
    kappa_phi: Optional[float] = None

    def __post_init__(self):
        if self.kappa <= 0:
            raise ValueError("clamp threshold must be positive")
        if self.kappa_phi is not None and self.kappa_phi <= 0:
            raise ValueError("terminal clamp threshold must be positive")

    @property
    def phi_bound(self):
        return self.kappa if self.kappa_phi is None else self.kappa_phi


def storage_rate_bounds(spec: StorageSpec, z):
    """Physical (injection, withdrawal) rate bounds at inventory z >= 0.

    u_in = -k1 sqrt(1/(z + z_base) + k2) <= 0 <= u_out = k3 sqrt(z).
    """
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ControlRangeError("inventory z must be nonnegative")
    u_in = -spec.k1 * np.sqrt(1.0 / (z + spec.z_base) + spec.k2)
    u_out = spec.k3 * np.sqrt(z)
    return u_in, u_out


def storage_reparam(spec: StorageSpec, c, z):
    """Normalized-control map f(c, z), c in [-1, 1], implemented verbatim.

    f(c,z) = c k1 sqrt(1/(z+z_base) + k2) for c in [0, 1] and c k3 sqrt(z)
    for c in [-1, 0].  The positive branch carries the magnitude of the
    injection bound with a positive sign (the displayed map's asymmetry vs
    u_in <= 0 is deliberate here, not corrected).
    """
    c = np.asarray(c, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any((c < -1.0) | (c > 1.0)):
        raise ControlRangeError("normalized control c must lie in [-1, 1]")
    pos = c * spec.k1 * np.sqrt(1.0 / (z + spec.z_base) + spec.k2)
    neg = c * spec.k3 * np.sqrt(np.maximum(z, 0.0))
    return np.where(c >= 0.0, pos, neg)


class ControlRange:
    """Admissible exercise rates; constant interval or state-dependent."""

    def bounds(self, z):
        raise NotImplementedError

    def candidates(self, z, n):
        """(n,) or (n, len(z)) array of candidate rates for grid scans."""
        raise NotImplementedError


@dataclass(frozen=True)
class IntervalControl(ControlRange):
    lo: float
    hi: float

    def bounds(self, z):
        return self.lo, self.hi

    def candidates(self, z, n):
        return np.linspace(self.lo, self.hi, n)


@dataclass(frozen=True)
class ReparamControl(ControlRange):
    """State-dependent range reached through a normalized control c in [-1, 1]."""

    spec: StorageSpec

    def bounds(self, z):
        return (storage_reparam(self.spec, -1.0, z), storage_reparam(self.spec, 1.0, z))

    def candidates(self, z, n):
        c = np.linspace(-1.0, 1.0, n)
        z = np.asarray(z, dtype=float)
        if z.ndim == 0:
            return storage_reparam(self.spec, c, z)
        return storage_reparam(self.spec, c[:, None], z[None, :])


@dataclass(frozen=True)
class ContractSpec:
    """Payoff pair (L, Phi), control range, optional clamp and the z-domain.

    ``payoff_slope`` is set when L(p,z,u) = u * slope(p,z) exactly (and no
    clamp is active), enabling the closed-form bang-bang Hamiltonian.
    """

    payoff: Callable                  # (p, z, u) -> L, broadcasts
    penalty: Callable                 # (p, z) -> Phi, broadcasts
    control: ControlRange
    z_domain: tuple
    clamp: Optional[ClampSpec] = None
    payoff_slope: Optional[Callable] = None
    u_grid_points: int = 101
    kind: str = "custom"
    volume_band: Optional[tuple] = None   # (m, M) when the penalty targets a band

    def _clamped_payoff(self, p, z, u):
        raw = self.payoff(p, z, u)
        if self.clamp is None:
            return raw
        return np.clip(raw, -self.clamp.kappa, self.clamp.kappa)

    def _clamped_penalty(self, p, z):
        raw = self.penalty(p, z)
        if self.clamp is None:
            return raw
        bound = self.clamp.phi_bound
        return np.clip(raw, -bound, bound)

    @property
    def bang_bang(self):
        return self.payoff_slope is not None and self.clamp is None \
            and isinstance(self.control, IntervalControl) and self.control.lo == 0.0


def swing_contract(spec: SwingSpec, horizon, clamp=None, u_grid_points=101) -> ContractSpec:
    """Swing payoff L = u (p - K) with the band penalty on Z_T."""

    def payoff(p, z, u):
        return np.asarray(u, dtype=float) * (np.asarray(p, dtype=float) - spec.strike)

    def slope(p, z):
        return np.asarray(p, dtype=float) - spec.strike

    if spec.penalty_kind == "two_sided":
        def penalty(p, z):
            z = np.asarray(z, dtype=float)
            return -spec.penalty_scale * (
                np.maximum(spec.m - z, 0.0) + np.maximum(z - spec.big_m, 0.0)
            )
    else:  # upper_only: min(0, -C (z - M))
        def penalty(p, z):
            z = np.asarray(z, dtype=float)
            return np.minimum(0.0, -spec.penalty_scale * (z - spec.big_m))

    return ContractSpec(
        payoff=payoff,
        penalty=penalty,
        control=IntervalControl(0.0, spec.u_max),
        z_domain=(0.0, spec.u_max * horizon),
        clamp=clamp,
        payoff_slope=None if clamp is not None else slope,
        u_grid_points=u_grid_points,
        kind="swing",
        volume_band=(spec.m, spec.big_m),
    )


def storage_contract(spec: StorageSpec, z_max, clamp=None, u_grid_points=101) -> ContractSpec:
    """Virtual storage payoff L = p (u - bleed 1_{u<0}), linear terminal penalty."""

    def payoff(p, z, u):
        u = np.asarray(u, dtype=float)
        return np.asarray(p, dtype=float) * (u - spec.bleed * (u < 0.0))

    def penalty(p, z):
        return -spec.penalty_scale * (spec.big_m - np.asarray(z, dtype=float))

    return ContractSpec(
        payoff=payoff,
        penalty=penalty,
        control=ReparamControl(spec),
        z_domain=(0.0, float(z_max)),
        clamp=clamp,
        payoff_slope=None,
        u_grid_points=u_grid_points,
        kind="storage",
        volume_band=(0.0, spec.big_m),
    )


def running_payoff(contract: ContractSpec, p, z, u):
    """Cashflow rate L(p, z, u), clamped when the contract clamps.

    Validates that (z, u) are admissible; the vectorized solver paths skip
    this check for speed.
    """
    z_lo, z_hi = contract.z_domain
    if np.any((np.asarray(z) < z_lo) | (np.asarray(z) > z_hi)):
        raise ControlRangeError(f"volume z outside contract domain [{z_lo}, {z_hi}]")
    lo, hi = contract.control.bounds(z)
    if np.any(np.asarray(u) < np.asarray(lo) - 1e-12) or np.any(np.asarray(u) > np.asarray(hi) + 1e-12):
        raise ControlRangeError(f"exercise rate {u} outside admissible range [{lo}, {hi}]")
    return contract._clamped_payoff(p, z, u)


def terminal_penalty(contract: ContractSpec, p, z):
    """Terminal cashflow Phi(p, z) (clamped when the contract clamps)."""
    if np.any(np.asarray(z) < 0):
        raise ControlRangeError("volume z must be nonnegative")
    return contract._clamped_penalty(p, z)


def hamiltonian_field(contract: ContractSpec, v_z, p, z, q, weight=None,
                      v_z_down=None, allow_up=True, allow_down=True):
    """Vectorized sup_u [u * v_z + q * weight * L(p, z, u)] with one maximizer.

    ``v_z`` is the upwind gradient for the u >= 0 branch (forward difference in
    z); ``v_z_down`` the one for u < 0 (defaults to ``v_z``).  ``allow_up`` /
    ``allow_down`` restrict the branches at z-domain edges.  Ties break to
    u = 0 (do not exercise).
    """
    v_z = np.asarray(v_z, dtype=float)
    v_z_down = v_z if v_z_down is None else np.asarray(v_z_down, dtype=float)
    w = 1.0 if weight is None else weight

    if contract.bang_bang:
        # L = u * slope: sup over [0, u_max] of u (v_z + q w slope).
        if not allow_up:
            shape = np.broadcast(v_z, np.asarray(p), np.asarray(z)).shape
            return np.zeros(shape), np.zeros(shape)
        hi = contract.control.hi
        gain = v_z + q * w * contract.payoff_slope(p, z)
        value = hi * np.maximum(gain, 0.0)
        u_star = np.where(gain > 0.0, hi, 0.0)
        return value, u_star

    cand = np.asarray(contract.control.candidates(z, contract.u_grid_points), dtype=float)
    if cand.size == 0:
        raise ControlRangeError("empty control range")
    grid_shape = np.broadcast(v_z, np.asarray(p, dtype=float), np.asarray(z, dtype=float)).shape
    # u = 0 is always admissible and seeds the tie-break to no exercise
    best_val = q * np.asarray(w * contract._clamped_payoff(p, z, np.zeros(grid_shape)), dtype=float)
    best_val = np.broadcast_to(best_val, grid_shape).copy()
    best_u = np.zeros(grid_shape)
    for idx in range(cand.shape[0]):
        u = cand[idx] if cand.ndim > 1 else float(cand[idx])
        u_arr = np.broadcast_to(np.asarray(u, dtype=float), grid_shape)
        up = u_arr >= 0.0
        grad = np.where(up, v_z, v_z_down)
        val = u_arr * grad + q * w * contract._clamped_payoff(p, z, u_arr)
        invalid = ((u_arr > 0.0) & (not allow_up)) | ((u_arr < 0.0) & (not allow_down))
        val = np.where(invalid, -np.inf, val)
        better = val > best_val
        best_u = np.where(better, u_arr, best_u)
        best_val = np.where(better, val, best_val)
    return best_val, best_u


def hamiltonian_sup(contract: ContractSpec, v_z, p, z, q):
    """Pointwise sup_u [u v_z + q L(p, z, u)] and one maximizer (value, u*)."""
    value, u_star = hamiltonian_field(contract, float(v_z), float(p), float(z), q)
    return float(value), float(u_star)
