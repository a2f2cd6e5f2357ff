"""Exception types raised across vnlab."""


class VnLabError(Exception):
    pass


class IndexOutsideBox(VnLabError, IndexError):
    pass


class ShapeMismatch(VnLabError, ValueError):
    pass


class DimensionTooLarge(VnLabError, ValueError):
    pass


class DimensionMismatch(VnLabError, ValueError):
    pass


class ArityMismatch(VnLabError, ValueError):
    pass


class RuleDomainTooSmall(VnLabError, ValueError):
    pass


class NonCommutingTuple(VnLabError, ValueError):
    pass


class NonUnitaryWeights(VnLabError, ValueError):
    pass


class PathDependence(VnLabError, ValueError):
    pass


class NotDiagonalRule(VnLabError, ValueError):
    pass


class InvalidConfig(VnLabError, ValueError):
    pass


class SchemaError(VnLabError, ValueError):
    """Malformed JSON input; ``path`` names the offending location."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.message = message
        self.path = path
