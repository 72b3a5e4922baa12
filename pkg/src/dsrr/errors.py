"""Exception hierarchy shared by all modules."""


class DsrrError(Exception):
    """Base class for errors raised by this package."""


class ParameterError(DsrrError, ValueError):
    """An argument is outside its valid range."""


class InputError(DsrrError, ValueError):
    """Input data violates a type invariant (e.g. non-finite values)."""


class EstimationError(DsrrError, RuntimeError):
    """A statistical estimate could not be produced."""


class SchemaError(DsrrError, ValueError):
    """A declared column is missing from an input file."""


class DataError(DsrrError, ValueError):
    """Input file parsed but holds no usable rows."""


class SplitError(DsrrError, ValueError):
    """A stratified split cannot be formed."""


class ConstantInputWarning(RuntimeWarning):
    """A correlation was requested for a constant column; 0 is reported."""
