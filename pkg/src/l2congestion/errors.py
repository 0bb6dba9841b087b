"""Exception hierarchy shared by every module.

Each error class carries an ``exit_code`` so the command-line front end can map
failures onto its documented exit statuses without a lookup table.
"""


class L2CongestionError(Exception):
    exit_code = 1


class ConfigError(L2CongestionError, ValueError):
    exit_code = 2


class DependencyError(L2CongestionError):
    """A pipeline step was requested before the step it depends on."""

    exit_code = 2


# data problems --------------------------------------------------------------

class DataError(L2CongestionError, ValueError):
    exit_code = 3


class ParseError(DataError):
    pass


class SchemaError(DataError):
    pass


class IntegrityError(DataError):
    pass


class AlignmentError(DataError):
    pass


class ColumnTypeError(DataError, TypeError):
    pass


# estimation problems --------------------------------------------------------

class EstimationError(L2CongestionError, ValueError):
    exit_code = 4


class DomainError(EstimationError):
    pass


class DegeneracyError(EstimationError):
    pass


class RankError(EstimationError):
    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = list(columns)


class NearUnitRootError(EstimationError):
    pass


class NoVariationError(EstimationError):
    pass


class NonRevertingError(DomainError):
    pass


class OscillatoryError(DomainError):
    pass


class ExtrapolationError(DomainError):
    pass


class FitError(EstimationError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class CointegrationGateError(EstimationError):
    pass


class CointegrationWarning(UserWarning):
    pass
