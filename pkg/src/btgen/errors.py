"""Exception types shared across the package.

Each error carries the CLI exit code it maps to, so the command layer can
translate failures without a lookup table.
"""


class BTGenError(Exception):
    exit_code = 1
    category = "error"


class TreeError(BTGenError):
    category = "tree"
    exit_code = 5


class OracleMissing(TreeError, KeyError):
    def __init__(self, node_id):
        super().__init__(node_id)
        self.node_id = node_id

    def __str__(self):
        return f"no oracle entry for leaf node {self.node_id}"


class NotAnAction(TreeError):
    def __init__(self, node_id):
        super().__init__(f"node {node_id} is not an Action leaf")
        self.node_id = node_id


class NotThreeLayer(TreeError):
    pass


class NoSecondLayer(TreeError):
    pass


class ParseError(BTGenError):
    category = "parse"
    exit_code = 5

    def __init__(self, line, reason):
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class ParseWarning(UserWarning):
    """Text in a completion was discarded or looked suspicious."""


class PhaseCountMismatch(ParseWarning):
    pass


class EmbeddingError(BTGenError):
    category = "embedding"


class ZeroVector(EmbeddingError, ValueError):
    pass


class DimensionMismatch(EmbeddingError, ValueError):
    pass


class EncoderFailure(EmbeddingError):
    exit_code = 4


class EmptyInput(BTGenError, ValueError):
    category = "input"


class KnowledgeBaseError(BTGenError):
    category = "kb"
    exit_code = 3


class EmptyKnowledgeBase(KnowledgeBaseError):
    pass


class SchemaError(KnowledgeBaseError):
    def __init__(self, where, reason):
        super().__init__(f"{where}: {reason}")
        self.where = where
        self.reason = reason


class LLMFailure(BTGenError):
    category = "backend"
    exit_code = 4


class AuthError(LLMFailure):
    pass


class RateLimited(LLMFailure):
    pass


class Transport(LLMFailure):
    pass


class ReplayMiss(LLMFailure):
    def __init__(self, key):
        super().__init__(f"no replay record for prompt hash {key}")
        self.key = key


class StoreSchemaError(SchemaError, LLMFailure):
    """A replay store line is not a valid record."""

    category = "backend"
    exit_code = 4


class DepthExceeded(BTGenError):
    category = "expansion"
    exit_code = 6

    def __init__(self, subtask, depth):
        super().__init__(f"{subtask!r} still non-primitive at depth {depth}")
        self.subtask = subtask
        self.depth = depth
