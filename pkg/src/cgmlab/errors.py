"""Exception types shared across modules; `code` is the CLI exit status they map to."""


class CGMError(Exception):
    code = 3


class DegenerateImmersionError(CGMError):
    pass


class PoleOnSurfaceError(CGMError):
    pass


class DiffeomorphismError(CGMError):
    pass


class UmbilicCircleError(CGMError):
    """A circle {t} x S^1 carries no conformal Gauss map energy."""


class SearchFailure(CGMError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class PreconditionError(CGMError):
    pass


class FeasibilityError(CGMError):
    code = 4

    def __init__(self, message, max_feasible: int = 0):
        super().__init__(message)
        self.max_feasible = max_feasible


class ConfigError(CGMError):
    code = 2
