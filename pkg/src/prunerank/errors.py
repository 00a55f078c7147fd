"""Exception hierarchy shared across the engine.

Two families matter to callers: ``InputError`` (bad data, exit code 1 on the
CLI) and ``RemoteError`` (a model server or client misbehaved, exit code 2).
"""


class PruneRankError(Exception):
    pass


class InputError(PruneRankError, ValueError):
    pass


class RemoteError(PruneRankError):
    pass


class InconsistentSpans(InputError):
    pass


class EmptyPassage(InputError):
    pass


class EmptyBatch(InputError):
    pass


class EmptyExample(InputError):
    pass


class EmptyDataset(InputError):
    pass


class EmptyRelevantSet(InputError):
    pass


class IndexMismatch(InputError):
    pass


class UnknownLabel(InputError):
    pass


class ModelLoadError(InputError):
    pass


class PromptTooLong(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RemoteUnavailable(RemoteError):
    pass


class MalformedResponse(RemoteError):
    pass


class ClientUnavailable(RemoteError):
    pass


class TranslationShapeError(RemoteError):
    pass


class BindError(PruneRankError):
    pass
