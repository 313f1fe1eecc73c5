"""Exception types raised across morphsim."""


class MorphsimError(Exception):
    """Base class for all morphsim errors."""


class NonSkewInput(MorphsimError, ValueError):
    pass


class NonSymmetric(MorphsimError, ValueError):
    pass


class SingularInertia(MorphsimError, ValueError):
    pass


class InfeasibleParams(MorphsimError, ValueError):
    """Inertia parameters violate the physical-consistency condition P(h) > 0."""


class SingularHessian(MorphsimError, ArithmeticError):
    pass


class OutsideSublevelSet(UserWarning):
    """Attitude error left the region Phi < 2 where the guarantees hold.

    Warning-grade: controllers still return a torque.
    """


class InadmissibleC(MorphsimError, ValueError):
    """The cross-term constant c violates one branch of its admissibility bound."""

    def __init__(self, message, branch=None, c=None, c_max=None):
        super().__init__(message)
        self.branch = branch
        self.c = c
        self.c_max = c_max


class NonPositiveW(MorphsimError, ValueError):
    pass


class NotSettled(MorphsimError, RuntimeError):
    pass


class DurationTooShort(MorphsimError, ValueError):
    pass


class DwellViolation(MorphsimError, RuntimeError):
    pass


class SettlingViolation(MorphsimError, RuntimeError):
    def __init__(self, message, t=None, z1_norm=None, rho=None):
        super().__init__(message)
        self.t = t
        self.z1_norm = z1_norm
        self.rho = rho


class DegenerateThrust(MorphsimError, ArithmeticError):
    pass


class EstimatorBoundary(MorphsimError, RuntimeError):
    pass


class NumericalBlowup(MorphsimError, ArithmeticError):
    pass


class ConfigInvalid(MorphsimError, ValueError):
    """Scenario configuration failed validation; ``path`` names the offending key."""

    def __init__(self, message, path=None):
        if path:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path
