"""Exception hierarchy.

Each family maps onto one CLI exit code: data problems exit 2, numeric
failures exit 3, configuration/usage problems exit 1.
"""


class RetroPredictError(Exception):
    exit_code = 1


class ConfigurationError(RetroPredictError):
    exit_code = 1


class DataError(RetroPredictError):
    exit_code = 2


class MalformedRecord(DataError):
    pass


class MalformedMutation(DataError):
    pass


class UnknownGene(MalformedMutation):
    pass


class UnknownDrug(DataError):
    pass


class ReferentialIntegrity(DataError):
    pass


class DuplicateRecord(DataError):
    pass


class OffScaleScore(DataError):
    pass


class NumericError(RetroPredictError):
    exit_code = 3


class DegenerateFit(NumericError):
    """Observation set cannot identify a sigmoid (too short or one class)."""


class DegenerateDenominator(NumericError):
    pass


class SingleClassError(NumericError, ValueError):
    """Input labels contain only one class."""
