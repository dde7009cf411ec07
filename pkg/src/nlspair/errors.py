"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration: bad grid sizes, malformed config files, unknown keys."""


class GuardViolation(RuntimeError):
    """Boundary-mass guard tripped: the solution reached the edge of the periodic box.

    Carries the time at which the guard fired and the offending mass fraction.
    """

    def __init__(self, time: float, fraction: float, tolerance: float):
        self.time = float(time)
        self.fraction = float(fraction)
        self.tolerance = float(tolerance)
        super().__init__(
            f"boundary mass fraction {fraction:.3e} exceeds {tolerance:.1e} "
            f"at t = {time:.6g}; enlarge the box or shorten the run"
        )


class NumericsError(RuntimeError):
    """Non-finite values appeared during integration."""


class PicardDivergence(RuntimeError):
    """Fixed-point iteration failed to contract (amplitude too large or start time too small)."""


class CheckpointError(ValueError):
    """Checkpoint file rejected: bad magic, version mismatch, or truncated payload."""
