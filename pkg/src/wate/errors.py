"""Exception hierarchy.

Errors raised while fitting a single (possibly resampled) dataset derive from
:class:`EstimationError`; resampling loops catch that class and count the
replicate as a failure.
"""


class WateError(Exception):
    """Base class for every error raised by this package."""


class DataError(WateError, ValueError):
    pass


class MissingColumn(DataError):
    pass


class NonBinaryTreatment(DataError):
    pass


class NonNumericCell(DataError):
    pass


class IndexOutOfRange(DataError, IndexError):
    pass


class DomainError(WateError, ValueError):
    """A propensity score outside the open unit interval."""


class ConfigError(WateError, ValueError):
    pass


class EstimationError(WateError):
    """A fit or estimate that cannot be computed on the data at hand."""


class SingleClass(EstimationError):
    pass


class RankDeficientDesign(EstimationError):
    pass


class Diverged(EstimationError):
    pass


class TooFewObservations(EstimationError):
    pass


class ArmTooSmall(EstimationError):
    pass


class DegenerateWeights(EstimationError):
    pass


class AllZeroWeights(EstimationError):
    pass


class SandwichUnobtainable(EstimationError):
    pass


class TooFewSuccessfulReplicates(EstimationError):
    pass
