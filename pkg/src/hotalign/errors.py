"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class HotError(Exception):
    exit_code = 1


class ValidationError(HotError, ValueError):
    exit_code = 2


class FormatError(ValidationError):
    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc += f"{line}: "
        elif loc:
            loc += " "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class ConfigurationError(ValidationError):
    pass


class CapacityError(HotError):
    exit_code = 3

    def __init__(self, message, cluster=None, elements=None, budget=None):
        super().__init__(message)
        self.cluster = cluster
        self.elements = elements
        self.budget = budget


class NumericalError(HotError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration


class SolverInstabilityError(NumericalError):
    def __init__(self, message, iteration=None, trace=None):
        super().__init__(message, iteration)
        self.trace = list(trace) if trace is not None else []


class GenerationError(HotError):
    exit_code = 6


class StageError(HotError):
    """Wraps an error raised inside one pipeline stage; keeps the original exit code."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
