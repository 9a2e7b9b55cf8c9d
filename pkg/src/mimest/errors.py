"""Exception hierarchy shared by all mimest modules."""


class MimestError(Exception):
    """Base class for every error raised by this package."""


class NotPositiveDefinite(MimestError):
    pass


class EmptyInput(MimestError, ValueError):
    pass


class ShapeMismatch(MimestError, ValueError):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class DegenerateData(MimestError):
    pass


class DegenerateDimension(DegenerateData):
    pass


class TooFewSamples(MimestError, ValueError):
    pass


class EmptyEvaluationSet(MimestError, ValueError):
    pass


class SingularCovariance(MimestError):
    pass


class ConfigInvalid(MimestError, ValueError):
    pass
