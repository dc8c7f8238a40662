"""Exception hierarchy shared by every module."""


class CurveSpaceError(Exception):
    """Base class for all library errors."""


class GuardExceeded(CurveSpaceError, ValueError):
    pass


class NonFinite(CurveSpaceError, ArithmeticError):
    pass


class DerivativeVanished(CurveSpaceError, ArithmeticError):
    pass


class UnknownFamily(CurveSpaceError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown family"


class ParamOutOfRange(CurveSpaceError, ValueError):
    pass


class DepthExceeded(CurveSpaceError, ValueError):
    pass


class DegenerateInput(CurveSpaceError, ValueError):
    pass


class ChainOverflow(CurveSpaceError, RuntimeError):
    pass


class NoConvergence(CurveSpaceError, RuntimeError):
    """Adaptive refinement ran out of budget; the best estimate is attached."""

    def __init__(self, message, value=float("nan"), err=float("inf")):
        super().__init__(message)
        self.value = value
        self.err = err


class DegenerateChord(CurveSpaceError, ValueError):
    pass


class ExtrapolationUnstable(CurveSpaceError, RuntimeError):
    pass


class KTooLarge(CurveSpaceError, ValueError):
    pass


class EtaGateFailed(CurveSpaceError, ValueError):
    pass


class TooFewLevels(CurveSpaceError, ValueError):
    pass


class UsageError(CurveSpaceError):
    """Bad command line; ``flag`` names the offending option."""

    def __init__(self, message, flag=None):
        super().__init__(message)
        self.flag = flag
