"""Exception types shared across the engine.

Exit-code mapping used by the CLI: ConfigError -> 1, numerical failures
(CflError, BlowupError, SingularForwardCovError, RiccatiBlowupError) -> 2,
VerificationFailure -> 3.
"""


class PricingError(Exception):
    """Base class for all engine errors."""


class ConfigError(PricingError):
    """Invalid or incomplete experiment configuration."""


class ControlRangeError(PricingError):
    """Exercise control outside the admissible range."""


class SingularForwardCovError(PricingError):
    """sigma_F* sigma_F is singular (or numerically near-singular) at a point."""

    def __init__(self, t, x, cond=None):
        self.t = t
        self.x = x
        self.cond = cond
        msg = f"forward covariance singular at t={t!r}, x={x!r}"
        if cond is not None:
            msg += f" (condition estimate {cond:.3e})"
        super().__init__(msg)


class CflError(PricingError):
    """Requested time grid violates the explicit-scheme stability bound."""

    def __init__(self, n_requested, n_min, dt_stable):
        self.n_requested = n_requested
        self.n_min = n_min
        self.dt_stable = dt_stable
        super().__init__(
            f"time grid too coarse for the explicit scheme: requested N={n_requested}, "
            f"stable dt={dt_stable:.6e}; use N >= {n_min}"
        )


class BlowupError(PricingError):
    """Non-finite values appeared during a solve."""

    def __init__(self, t, detail=""):
        self.t = t
        super().__init__(f"solve diverged (non-finite values) at t={t:.6g} {detail}".rstrip())


class RiccatiBlowupError(PricingError):
    """Finite-time explosion of the Riccati coefficient."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"Riccati coefficient exploded at t={t:.6g} before reaching 0")


class CapError(PricingError):
    """A brute-force oracle configuration exceeds its desk-scale caps."""


class VerificationFailure(PricingError):
    """An oracle comparison exceeded its tolerance."""
