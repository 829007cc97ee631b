"""Exception hierarchy. Every error carries a stable ``code`` used by the CLI."""


class AbsynthError(Exception):
    code = "E000"


class RegionNotGridAligned(AbsynthError):
    code = "E101"


class OutOfDomain(AbsynthError):
    code = "E102"


class CapacityExceeded(AbsynthError):
    code = "E103"


class CellOutsideSupport(AbsynthError):
    code = "E201"


class UnknownAtom(AbsynthError):
    code = "E301"


class StateExplosion(AbsynthError):
    code = "E302"


class EmptyTrace(AbsynthError):
    code = "E303"


class LtlfSyntaxError(AbsynthError):
    code = "E304"

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class ReachOutsideDomain(AbsynthError):
    code = "E401"


class InfeasibleIntervals(AbsynthError):
    code = "E402"


class SupportTooLarge(AbsynthError):
    code = "E403"


class InstanceTooLarge(AbsynthError):
    code = "E501"


class ConfigInvalid(AbsynthError):
    code = "E601"

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
