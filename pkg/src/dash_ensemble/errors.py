"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes (see ``cli.EXIT_CODES``).
"""


class DashError(Exception):
    """Base class for all package errors."""


class ShapeError(DashError, ValueError):
    """Operand extents do not match."""


class ParameterError(DashError, ValueError):
    """An argument is outside its documented range."""


class ConfigError(ParameterError):
    """A configuration document has an invalid or unknown field."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field '{field}': {message}")


class StateError(DashError, RuntimeError):
    """An object is used in a state that does not allow the operation."""


class NumericError(DashError, ArithmeticError):
    """A computation produced NaN or Inf."""


class SchemaError(DashError, ValueError):
    """A serialized document does not match the expected structure."""


class DataError(DashError, ValueError):
    """Malformed dataset input."""


class EmptyFileError(DataError):
    def __init__(self, path):
        self.path = path
        super().__init__(f"{path}: file contains no data rows")


class RaggedRowError(DataError):
    def __init__(self, path, row, expected, found):
        self.path, self.row = path, row
        super().__init__(f"{path}: row {row} has {found} columns, expected {expected}")


class NonNumericCellError(DataError):
    def __init__(self, path, row, column, value):
        self.path, self.row, self.column = path, row, column
        super().__init__(f"{path}: row {row}, column {column}: non-numeric feature value {value!r}")
