"""Exception hierarchy.

``ConfigError`` covers bad parameters and unreadable configuration,
``DataError`` covers problems with the input data itself. The CLI maps
them to exit codes 2 and 3.
"""


class OdCompareError(Exception):
    pass


class ConfigError(OdCompareError):
    pass


class DataError(OdCompareError):
    pass


class WeightSumError(DataError):
    """A unit's crosswalk weights do not sum to one."""


class UnknownZoneError(DataError):
    pass


class UnknownUnitError(DataError):
    pass


class DuplicateRowError(DataError):
    pass


class MissingColumnError(DataError):
    pass


class NegativeCountError(DataError):
    pass


class RejectThresholdError(DataError):
    """Too many malformed or unmappable records; likely schema drift."""


class EmptyInputError(DataError):
    pass
