"""Exception hierarchy shared by all trapwave modules."""


class TrapwaveError(Exception):
    """Base class for every error raised by the library."""


class ContractViolation(TrapwaveError, ValueError):
    """A precondition on the arguments does not hold."""


class InvalidPointError(TrapwaveError, ValueError):
    pass


class InvalidIsometryError(TrapwaveError, ValueError):
    pass


class DomainError(TrapwaveError, ValueError):
    pass


class CapacityError(TrapwaveError):
    def __init__(self, cap, message=None):
        self.cap = cap
        super().__init__(message or f"orbit enumeration exceeded the element cap of {cap}")


class DataInsufficiencyError(TrapwaveError):
    def __init__(self, required, got=None, message=None):
        self.required = required
        self.got = got
        if message is None:
            message = f"need at least {required} data points"
            if got is not None:
                message += f", got {got}"
        super().__init__(message)


class QuadratureError(TrapwaveError):
    def __init__(self, achieved, message=None):
        self.achieved = achieved
        super().__init__(message or f"quadrature did not converge (achieved error {achieved:.3e})")


class UnsupportedRegimeError(TrapwaveError):
    pass


class ProfileConstructionError(TrapwaveError):
    def __init__(self, condition, r, message=None):
        self.condition = condition
        self.r = r
        super().__init__(message or f"profile violates '{condition}' at r = {r:.6g}")


class StiffnessError(TrapwaveError):
    pass


class DegenerateStateError(TrapwaveError):
    pass


class HyperbolicityDomainError(TrapwaveError):
    pass


class ResolutionError(TrapwaveError):
    pass


class NumericalError(TrapwaveError):
    def __init__(self, message, step=None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")
