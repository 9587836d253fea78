"""Exception hierarchy shared across the package."""


class OptBalanceError(Exception):
    """Base class. ``module`` names the component that raised."""

    code = "error"
    module = "optbalance"

    def __init__(self, message, module=None):
        super().__init__(message)
        if module is not None:
            self.module = module

    def to_dict(self):
        return {"code": self.code, "message": str(self), "module": self.module}


class InputError(OptBalanceError, ValueError):
    code = "input_error"


class NotPSDError(InputError):
    code = "not_psd"
    module = "linalg"


class SingularCovarianceError(InputError):
    code = "singular_covariance"
    module = "structures"


class InstanceTooLargeError(InputError):
    code = "instance_too_large"
    module = "pure_opt"


class InfeasibleError(OptBalanceError):
    code = "infeasible"
    module = "mixed_opt"


class UnsupportedError(OptBalanceError):
    code = "unsupported"


class SolverBudgetExceeded(OptBalanceError):
    """Raised only where a caller asked for strict optimality."""

    code = "budget_exceeded"
    module = "pure_opt"
