"""Exception hierarchy for the tridge package."""


class TridgeError(Exception):
    """Base class for all solver and validation errors raised by tridge."""


class VanishingScoreError(TridgeError):
    """The score norm fell below the zero guard, so the scale-free
    objective is undefined at this point."""

    def __init__(self, score_norm, threshold):
        super().__init__(
            f"score norm {score_norm:.3e} is below the zero guard {threshold:.3e}; "
            "the objective is undefined at an unpenalized stationary point"
        )
        self.score_norm = score_norm
        self.threshold = threshold


class NonConvergenceError(TridgeError):
    """An iterative solver exhausted its iteration budget.

    Carries the last iterate and its gradient residual so callers can
    inspect or salvage partial progress.
    """

    def __init__(self, message, beta, residual, iterations):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.beta = beta
        self.residual = residual
        self.iterations = iterations


class SingularSystemError(TridgeError):
    """The unpenalized Newton system is rank deficient; a positive ridge
    parameter is required for a unique solution."""


class BracketFailureError(TridgeError):
    """The path inversion could not bracket the requested tuning parameter
    within the configured search range."""


class PathFitError(TridgeError):
    """A grid point along a ridge path failed to solve."""

    def __init__(self, index, r, cause):
        super().__init__(f"ridge fit failed at grid index {index} (r={r:.6g}): {cause}")
        self.index = index
        self.r = r


class AllGridFailedError(TridgeError):
    """No grid point produced a valid objective value."""


class SingleClassFoldError(TridgeError):
    """A cross-validation training split contained a single outcome class
    even after one reseeded re-split."""


class SaturationWarning(RuntimeWarning):
    """A linear predictor was clamped before exponentiation to avoid overflow."""
