"""Exception hierarchy with stable error codes for the CLI layer."""


class BosonLabError(Exception):
    """Base class for all package errors. ``code`` maps to a CLI exit status."""

    code = 1
    category = "generic"


class ConfigError(BosonLabError):
    code = 2
    category = "config"


class SupportOverflowError(BosonLabError):
    """Fourier support does not fit inside the grid's Nyquist ball."""

    code = 3
    category = "support-overflow"

    def __init__(self, message, min_n_per_dim=None):
        super().__init__(message)
        self.min_n_per_dim = min_n_per_dim


class DivergenceError(BosonLabError):
    """Numerical divergence (blow-up, NaN/Inf, runaway iteration)."""

    code = 4
    category = "numerical-divergence"

    def __init__(self, message, last_good_time=None, iterate=None):
        super().__init__(message)
        self.last_good_time = last_good_time
        self.iterate = iterate


class MonteCarloPrecisionError(BosonLabError):
    code = 5
    category = "monte-carlo-precision"


class TruncationError(BosonLabError):
    """Profile not decayed at the radial boundary (strict mode only)."""

    code = 6
    category = "truncation"


class StagnationError(BosonLabError):
    """Iteration stalled before reaching tolerance; partial result attached."""

    code = 7
    category = "stagnation"

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class EmptySupportError(BosonLabError):
    """Monte-Carlo target frequency outside the reachable sum-set."""

    code = 8
    category = "empty-support"
