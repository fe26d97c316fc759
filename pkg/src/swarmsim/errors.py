"""Exception types shared across the package."""


class SwarmSimError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SwarmSimError):
    """A scenario configuration is malformed or internally inconsistent."""


class ContractError(SwarmSimError):
    """A caller violated an operation's precondition."""


class ProtocolError(SwarmSimError):
    """The inter-agent message exchange is incomplete."""


class SingularityError(SwarmSimError):
    """A state hit a coordinate-singularity guard (range floor or elevation pole)."""


class SimulationAbort(SwarmSimError):
    """A run stopped early; carries the abort time and reason."""

    def __init__(self, t: float, reason: str):
        super().__init__(f"simulation aborted at t={t:.3f} s: {reason}")
        self.t = t
        self.reason = reason
