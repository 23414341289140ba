"""Exception classes shared across the package."""


class GKFlowError(Exception):
    """Base class for every error raised by gkflow."""

    exit_code = 1


class ConfigError(GKFlowError, ValueError):
    exit_code = 4

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key={key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class NonFiniteField(GKFlowError, ArithmeticError):
    exit_code = 6


class ConeViolation(GKFlowError, ArithmeticError):
    """A metric coefficient (or a log/quotient argument) left the positive cone."""

    exit_code = 3

    def __init__(self, message, minimum=None, location=None, stage=None, time=None):
        self.minimum = minimum
        self.location = location
        self.stage = stage
        self.time = time
        extra = []
        if minimum is not None:
            extra.append(f"min={minimum:.6g}")
        if location is not None:
            extra.append(f"at index {tuple(int(i) for i in location)}")
        if stage is not None:
            extra.append(f"RK stage {stage}")
        if time is not None:
            extra.append(f"t={time:.6g}")
        if extra:
            message = f"{message} [{', '.join(extra)}]"
        super().__init__(message)


class BackgroundExpired(GKFlowError):
    exit_code = 5


class InsufficientSnapshots(GKFlowError):
    exit_code = 4
