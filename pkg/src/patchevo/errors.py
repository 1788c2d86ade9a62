"""Exception hierarchy shared by all patchevo modules."""


class PatchevoError(Exception):
    """Base class for every error raised on purpose by this package."""


class InputError(PatchevoError):
    """Bad or unreadable input; the CLI maps these to exit code 1."""


class FormatError(InputError):
    pass


class CorpusVersionError(InputError):
    pass


class DiffParseError(InputError):
    def __init__(self, message: str, path: str | None = None, hunk: int | None = None):
        self.path = path
        self.hunk = hunk
        self.reason = message
        where = []
        if path is not None:
            where.append(f"file {path}")
        if hunk is not None:
            where.append(f"hunk #{hunk}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class LocalityError(PatchevoError):
    pass


class DifficultyError(PatchevoError):
    pass


class UnknownAnalyzerError(InputError):
    pass


class TransportError(PatchevoError):
    """A completion or embedding backend could not be reached or replied garbage."""


class AdvisorParseError(PatchevoError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


class CodeFreeViolation(AdvisorParseError):
    pass


class EvaluationError(InputError):
    pass
