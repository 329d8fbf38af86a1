class ConfigError(ValueError):
    """Invalid configuration, scenario file, or forecast file."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class DomainError(ValueError):
    """Arguments outside the mathematical domain of an operation."""
