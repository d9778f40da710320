"""Exception hierarchy shared across the package.

Every error a caller is expected to branch on gets its own class; the HTTP
layer maps them onto status codes (NotFound -> 404, Conflict subclasses ->
409, MalformedDocument -> 422).
"""


class CogTutorError(Exception):
    """Base class for all package errors."""


# --- provider / gateway ---

class ProviderUnreachable(CogTutorError):
    """Transport kept failing after the bounded retry budget."""


class FixtureMiss(CogTutorError):
    """Replay mode has no recorded response for this request hash."""

    def __init__(self, kind: str, key: str):
        super().__init__(f"no {kind} fixture entry for hash {key}")
        self.kind = kind
        self.key = key


class EmptyInput(CogTutorError):
    """An operation was handed an empty collection it cannot act on."""


class EmbeddingDimensionMismatch(CogTutorError):
    """Provider returned a vector whose length differs from the declared dim."""


# --- segmentation ---

class EmptyTranscript(CogTutorError):
    pass


class EmptyGoalList(CogTutorError):
    pass


class UnsummarizedGoal(CogTutorError):
    """Alignment retrieval ran before goal summaries were filled in."""


class EmptyGold(CogTutorError):
    pass


# --- knowledge templates ---

class ParseFailure(CogTutorError):
    """Template text did not match the grammar's anchor sequence."""

    def __init__(self, position: int, expected: str):
        super().__init__(f"expected anchor {expected!r} at position {position}")
        self.position = position
        self.expected = expected


class NotProcedural(CogTutorError):
    """Skill names are derived from procedural items only."""


# --- planner ---

class EmptyKnowledge(CogTutorError):
    pass


# --- student model ---

class DuplicateName(CogTutorError):
    pass


class DegenerateParameters(CogTutorError):
    """A BKT update denominator collapsed to zero; reject rather than clamp."""


class DimensionMismatch(CogTutorError):
    pass


class VersionConflict(CogTutorError):
    """Optimistic save raced with another writer of the same student model."""


class CorruptStore(CogTutorError):
    """Stored document failed its checksum."""


# --- conversation engine ---

class InvalidDSL(CogTutorError):
    pass


class SessionCompleted(CogTutorError):
    pass


class NoPendingStep(CogTutorError):
    """A reply arrived while no tutor question was awaiting one."""


class PendingReply(CogTutorError):
    """The next message was requested while a reply is still owed."""


# --- evaluation ---

class EmptyLayer(CogTutorError):
    pass


class LengthMismatch(CogTutorError):
    pass


class TooFewGroups(CogTutorError):
    pass


class InvalidPermutation(CogTutorError):
    pass


# --- service ---

class NotFound(CogTutorError):
    pass


class MalformedDocument(CogTutorError):
    """Input document failed validation; carries field-level diagnostics."""

    def __init__(self, message: str, detail: dict | None = None):
        super().__init__(message)
        self.detail = detail or {}


class PipelineIncomplete(CogTutorError):
    """Session requested before the video finished planning."""
