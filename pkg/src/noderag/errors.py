"""Exception hierarchy shared across the package."""


class NodeRagError(Exception):
    """Base class for all package errors."""


class ValidationError(NodeRagError):
    """A node or edge violates a structural invariant."""


class GraphFormatError(NodeRagError):
    """Persisted graph or vector file is unreadable (version, checksum, truncation)."""


class FrozenGraphError(NodeRagError):
    """Mutation attempted on a graph after freeze()."""


class IndexingError(NodeRagError):
    """The indexing pipeline cannot proceed (e.g. every chunk failed)."""


class EmptyCorpusError(IndexingError):
    """The corpus contained no usable chunks (a usage error at the CLI)."""


class NotApplicableError(NodeRagError):
    """A graph-analytic step has no meaningful answer (empty or edgeless graph)."""


class QueryError(NodeRagError):
    """A query cannot be planned or executed."""


class NoEntryPointsError(QueryError):
    """Dual search produced no entry points and a downstream stage requires them."""


class MissingIndexError(NodeRagError):
    """The index directory does not exist or lacks required files."""


class ProviderError(NodeRagError):
    """An LLM or embedding provider call failed."""

    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class AuthenticationError(ProviderError):
    """Provider rejected the configured credentials."""


class ContextLengthError(ProviderError):
    """Provider rejected the request as exceeding its context window."""


class ExtractionError(NodeRagError):
    """Model output could not be parsed into the expected structure after repair."""


class AnswerSynthesisError(NodeRagError):
    """Retrieval succeeded but the final answer call failed; context is preserved."""

    def __init__(self, message: str, context: str, token_count: int):
        super().__init__(message)
        self.context = context
        self.token_count = token_count
