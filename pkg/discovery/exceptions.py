"""Error taxonomy shared by the search engine and the management commands."""


class DiscoveryError(Exception):
    """Base class for every error raised by the discovery app."""


class ParameterError(DiscoveryError, ValueError):
    """A numerical routine was called with arguments outside its domain."""


class ConfigError(DiscoveryError):
    """Invalid or unknown run configuration value."""


class DslParseError(DiscoveryError):
    """Pipeline text could not be parsed or validated."""

    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(str(self))

    def __str__(self):
        if self.line is None:
            return self.message
        if self.column is None:
            return f"line {self.line}: {self.message}"
        return f"line {self.line}, column {self.column}: {self.message}"


class EvaluationError(DiscoveryError):
    """A candidate failed to produce a usable catalog.

    `kind` is one of runtime, timeout, no_signal, parse.
    """

    KINDS = ('runtime', 'timeout', 'no_signal', 'parse')

    def __init__(self, kind, message):
        if kind not in self.KINDS:
            raise ValueError(f"unknown failure kind {kind!r}")
        self.kind = kind
        self.message = message
        super().__init__(f"{kind}: {message}")

    def report(self):
        """Error report text sent back to the generator in a rechat turn."""
        titles = {
            'runtime': 'Runtime error',
            'timeout': 'Timeout',
            'no_signal': 'No signals found',
            'parse': 'Parse error',
        }
        return f"## Error Report\n{titles[self.kind]}: {self.message}"


class RenderError(DiscoveryError, KeyError):
    """A prompt template references a placeholder with no binding."""

    def __init__(self, placeholder, message=None):
        self.placeholder = placeholder
        super().__init__(message or placeholder)

    def __str__(self):
        return str(self.args[0])


class ResponseParseError(DiscoveryError):
    """A generator reply carries no design idea or no fenced code block."""


class GeneratorError(DiscoveryError):
    """A generator request failed."""

    def __init__(self, message, retryable=False):
        self.retryable = retryable
        super().__init__(message)


class GeneratorOutage(GeneratorError):
    """The generator stayed unavailable after every retry."""


class SearchAborted(DiscoveryError):
    """The search cannot continue (for example, the initial population failed)."""
