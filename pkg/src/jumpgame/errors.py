"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` used by the command-line front end:
1 for configuration problems, 2 for hypothesis-validation failures and
3 for numerical failures.
"""


class JumpGameError(Exception):
    exit_code = 1

    def __init__(self, message, *, module=None, operation=None, witness=None):
        super().__init__(message)
        self.module = module
        self.operation = operation
        self.witness = witness

    def describe(self):
        parts = [str(self)]
        if self.module or self.operation:
            parts.insert(0, f"[{self.module or '?'}.{self.operation or '?'}]")
        if self.witness is not None:
            parts.append(f"witness={self.witness!r}")
        return " ".join(parts)


class ConfigurationError(JumpGameError):
    exit_code = 1


class ParseError(ConfigurationError):
    """Problem file violates the schema; ``pointer`` is a JSON pointer."""

    def __init__(self, message, pointer="", **kw):
        super().__init__(f"{pointer or '/'}: {message}", **kw)
        self.pointer = pointer


class AlignmentError(ConfigurationError):
    pass


class DomainError(ConfigurationError):
    pass


class StabilityError(ConfigurationError):
    pass


class OracleSizeError(ConfigurationError):
    def __init__(self, message, estimate, **kw):
        super().__init__(message, witness={"estimated_nodes": estimate}, **kw)
        self.estimate = estimate


class CFLError(ConfigurationError):
    def __init__(self, message, required_steps, **kw):
        super().__init__(message, witness={"required_steps": required_steps}, **kw)
        self.required_steps = required_steps


class ValidationFailure(JumpGameError):
    exit_code = 2


class NumericalError(JumpGameError):
    exit_code = 3
