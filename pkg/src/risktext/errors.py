"""Exception types. Each carries the CLI exit code it maps to."""


class RiskTextError(Exception):
    exit_code = 1


class ValidationError(RiskTextError, ValueError):
    """Input data violates a documented contract."""


class ConfigError(RiskTextError):
    """Configuration is missing, malformed or inconsistent."""


class DomainError(RiskTextError, ValueError):
    """An operation is undefined for the given input (e.g. a single class)."""


class InputFileError(RiskTextError, OSError):
    """A file could not be read or decoded."""

    exit_code = 2

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


class ProviderError(RiskTextError):
    """Embedding provider failed after retries."""

    exit_code = 3

    def __init__(self, message, user_id=None, batch_index=None):
        ctx = []
        if user_id is not None:
            ctx.append(f"user={user_id}")
        if batch_index is not None:
            ctx.append(f"batch={batch_index}")
        super().__init__(f"{message} ({', '.join(ctx)})" if ctx else message)
        self.user_id = user_id
        self.batch_index = batch_index
