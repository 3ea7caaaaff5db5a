"""Exception types shared across the package."""


class RegenciError(Exception):
    """Base class for all package-specific errors."""


class NumericalError(RegenciError):
    """Base class for numerical failures (maps to CLI exit code 4)."""


class DataError(RegenciError):
    """Base class for input-data problems (maps to CLI exit code 3)."""


class ConfigError(RegenciError):
    """Invalid configuration or command line (maps to CLI exit code 2)."""


# -- linear algebra / distributions ----------------------------------------

class AsymmetricInput(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class OutOfRange(NumericalError):
    pass


# -- model fitting ----------------------------------------------------------

class Separation(NumericalError):
    """Perfectly separated binary response: the MLE diverges."""


class RankDeficient(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class DimensionMismatch(NumericalError):
    pass


class DegenerateLabels(DataError):
    """Training labels are all zero or all one."""


class SingleClass(DataError):
    """A ranking metric needs both classes present."""


class PartitionFailure(NumericalError):
    """No usable random partition/subsample after the retry budget."""


# -- estimators -------------------------------------------------------------

class MissingOutcome(DataError):
    """An estimator term requires an outcome that is not observed."""


class LeverageOne(NumericalError):
    pass


class EmptyInput(DataError):
    pass


class TooLarge(DataError):
    """Exact enumeration requested beyond the guard size."""


class TooFewReplications(DataError):
    pass


# -- sensitivity analysis ---------------------------------------------------

class OptimizerFailure(NumericalError):
    pass


class NotRejectedAtGammaOne(RegenciError):
    """The hypothesis is already inside the confidence set without hidden bias."""


# -- data I/O ----------------------------------------------------------------

class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class InconsistentRow(DataError):
    pass
