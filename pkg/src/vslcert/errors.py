"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Raised when a scenario or sample file violates the documented schema.

    ``path`` identifies the offending key, e.g. ``"segments[2].u_bar"``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class InfeasibleScenarioError(RuntimeError):
    """Raised when no admissible speed profile exists for a scenario."""


class NumericalError(RuntimeError):
    """Raised when a solver fails for numerical reasons (not infeasibility).

    ``report`` may carry the partial iteration log collected so far.
    """

    def __init__(self, message: str, report=None):
        self.report = report
        super().__init__(message)
