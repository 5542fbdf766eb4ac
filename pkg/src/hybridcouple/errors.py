"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid parameters, scenario files or coupling declarations.

    ``field`` is the dotted path of the offending entry when known.
    """

    def __init__(self, message, field=None, line=None, column=None):
        self.field = field
        self.line = line
        self.column = column
        where = []
        if field:
            where.append(field)
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        prefix = f"[{'; '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class UsageError(ValueError):
    """A function was called with arguments outside its contract."""


class NumericalError(ArithmeticError):
    """An inner numerical procedure failed (eigen-solve, implicit solve, ...)."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class DivergenceError(ArithmeticError):
    """A model step produced a non-finite value.

    Carries the name of the first offending signal and, when raised from a
    simulation loop, the step index.
    """

    def __init__(self, signal, step=None, value=float("nan")):
        self.signal = signal
        self.step = step
        self.value = value
        at = f" at step {step}" if step is not None else ""
        super().__init__(f"non-finite value {value!r} in signal {signal!r}{at}")
