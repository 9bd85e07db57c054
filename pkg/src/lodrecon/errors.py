"""Exception hierarchy shared across the reconstruction stages."""


class ReconstructionError(Exception):
    """Base class for all recoverable per-building failures."""


class DegenerateInput(ReconstructionError):
    pass


class EmptyInput(ReconstructionError):
    pass


class ParseError(ReconstructionError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateId(ReconstructionError):
    pass


class UnsupportedGeometry(ReconstructionError):
    pass


class DegenerateRegion(ReconstructionError):
    pass


class InvalidFootprint(ReconstructionError):
    pass


class NoRoofRegions(ReconstructionError):
    pass


class NoGroundPoints(ReconstructionError):
    pass


class NoRoofPoints(ReconstructionError):
    pass


class NonVerticalizablePlane(ReconstructionError):
    pass


class ExtrusionError(ReconstructionError):
    """Raised when a partition cannot be lifted into a closed solid."""


class NoCoveredPoints(ReconstructionError):
    pass


class ConfigError(Exception):
    pass
