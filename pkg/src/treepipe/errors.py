"""Exception hierarchy shared by all modules."""


class TreePipeError(Exception):
    """Base class for errors raised by this package."""


class ContractError(TreePipeError, ValueError):
    """An argument violates a documented precondition."""


class DataError(TreePipeError, ValueError):
    """The data itself cannot support the requested operation."""


class FormatError(DataError):
    """A file does not follow the expected layout."""


class CsvParseError(FormatError):
    """A CSV cell could not be parsed as an integer."""

    def __init__(self, message, row, column):
        super().__init__(f"{message} (row {row}, column {column!r})")
        self.row = row
        self.column = column


class PipelineEvaluationError(TreePipeError):
    """An operator could not be applied inside a pipeline evaluation."""


class PipelineSyntaxError(TreePipeError, ValueError):
    """Malformed or invalid pipeline expression text."""

    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class GenerationError(TreePipeError):
    """No epistatic model satisfying the constraints was found."""


class SimulationError(TreePipeError):
    """Case/control sampling could not fill the requested quotas."""
