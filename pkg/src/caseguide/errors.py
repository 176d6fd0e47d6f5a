"""Exception types shared across the package.

The hierarchy is split by how the CLI reports failures: bad user input
(exit code 2), unreachable external services (exit code 3), and anything
else (exit code 1). The HTTP layer maps these onto status codes and a
{code, message, detail} error body.
"""
from __future__ import annotations


class CaseguideError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"

    def __init__(self, message: str, *, detail: str | None = None):
        super().__init__(message)
        self.message = message
        self.detail = detail


class InputError(CaseguideError):
    """Malformed user-supplied data: records, files, or arguments."""

    code = "input_error"


class ExternalServiceError(CaseguideError):
    """A remote dependency (embedding or LLM endpoint) is unavailable."""

    code = "external_error"


# --- corpus ingestion ------------------------------------------------------

class NoSectionFound(InputError):
    code = "no_section_found"


class DuplicateSection(InputError):
    code = "duplicate_section"


class DuplicateCaseId(InputError):
    code = "duplicate_case_id"

    def __init__(self, case_id: str, line_number: int):
        super().__init__(
            f"duplicate case_id {case_id!r} at line {line_number}",
            detail=case_id,
        )
        self.case_id = case_id
        self.line_number = line_number


class MalformedRecord(InputError):
    code = "malformed_record"

    def __init__(self, line_number: int, reason: str):
        super().__init__(f"malformed record at line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class DuplicateDocId(InputError):
    code = "duplicate_doc_id"


class OverlappingOutline(InputError):
    code = "overlapping_outline"


class SpanOutOfBounds(InputError):
    code = "span_out_of_bounds"


# --- vocabulary / extraction ------------------------------------------------

class VocabularyError(InputError):
    code = "vocabulary_error"


# --- guideline graph ---------------------------------------------------------

class EmptyDocument(InputError):
    code = "empty_document"


class UnknownUnitId(CaseguideError):
    code = "unknown_unit_id"


# --- communities -------------------------------------------------------------

class EmptyGraph(CaseguideError):
    code = "empty_graph"


class UnknownCommunity(CaseguideError):
    code = "unknown_community"


# --- embedding / index --------------------------------------------------------

class ProviderUnavailable(ExternalServiceError):
    code = "provider_unavailable"


class DimMismatch(CaseguideError):
    code = "dim_mismatch"


class FormatVersionMismatch(InputError):
    code = "format_version_mismatch"


class CorruptPartition(InputError):
    code = "corrupt_partition"


class EmbedderMismatch(InputError):
    code = "embedder_mismatch"


# --- retrieval ----------------------------------------------------------------

class EmptyRepository(CaseguideError):
    code = "empty_repository"


class NoCommunities(CaseguideError):
    code = "no_communities"


# --- service ------------------------------------------------------------------

class UnknownSession(CaseguideError):
    code = "unknown_session"


class IndexNotLoaded(CaseguideError):
    code = "index_not_loaded"


class ClientUnavailable(ExternalServiceError):
    code = "client_unavailable"
