"""Exception hierarchy shared across the package."""


class InteractSimError(Exception):
    """Base class for all package errors."""


class CorpusFormatError(InteractSimError):
    pass


class ConfigError(InteractSimError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class GatewayError(InteractSimError):
    pass


class TransportError(GatewayError):
    """Recoverable network or server failure; retried by llm_chat."""


class RetriesExhausted(GatewayError):
    pass


class ReplayMissError(GatewayError):
    pass


class FormatError(InteractSimError):
    """Model output did not contain a valid structured block."""


class ProfileParseError(InteractSimError):
    pass


class SimulationError(InteractSimError):
    def __init__(self, message, dump_path=None):
        super().__init__(message)
        self.dump_path = dump_path


class SnapshotVersionError(InteractSimError):
    pass


class EvaluationError(InteractSimError):
    pass
