"""Exception hierarchy shared by all ctxgate modules."""


class CtxGateError(Exception):
    """Base class for all ctxgate errors."""


class ZeroVectorError(CtxGateError):
    """An embedding with zero norm cannot participate in cosine math."""


class DimensionMismatchError(CtxGateError):
    """Embeddings of different dimensions were mixed."""


class EmptyCorpusError(CtxGateError):
    """An operation required at least one context."""


class EmptySamplesError(CtxGateError):
    """A statistic was requested over an empty sample set."""


class InsufficientSamplesError(CtxGateError):
    """Too few similarity samples for meaningful percentile estimates."""


class UnfittedIndexError(CtxGateError):
    """The corpus index has no fitted similarity distributions yet."""


class DuplicateIdError(CtxGateError):
    """A record id appeared more than once in a corpus."""


class MissingEmbeddingError(CtxGateError):
    """A record lacks an embedding and no embedder was configured."""


class ParseError(CtxGateError):
    """A corpus / vector / query file failed to parse."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IoError(CtxGateError):
    """Filesystem failure while reading or writing an index."""


class CorruptIndexError(CtxGateError):
    """Index file failed checksum or structural validation."""


class VersionUnsupportedError(CtxGateError):
    """Index file carries a format version this reader does not know."""


class TemplateError(CtxGateError):
    """A prompt template is malformed or references unknown placeholders."""


class TransformerFailure(CtxGateError):
    """The query transformer raised; caller may fall back to identity."""


class InfeasibleSpecError(CtxGateError):
    """Synthetic corpus spec cannot be satisfied (e.g. angle constraint)."""


class EmptyQuerySetError(CtxGateError):
    """Evaluation requires at least one labeled query."""


class ClientError(CtxGateError):
    """Base class for external-service client failures."""


class AuthError(ClientError):
    """Provider rejected credentials (401/403)."""


class RequestTimeoutError(ClientError):
    """Request to the provider timed out after all retries."""


class ProviderError(ClientError):
    """Provider returned an unusable response."""

    def __init__(self, message: str, status: int | None = None, body: str = ""):
        self.status = status
        self.body = body[:500]
        if status is not None:
            message = f"{message} (status {status}): {self.body}"
        super().__init__(message)


class InconsistentDimError(ClientError):
    """Provider returned embeddings of mixed dimensions."""


class MalformedResponseError(ClientError):
    """Provider response contained no parseable payload."""
