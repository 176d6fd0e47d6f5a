"""Patient case and guideline document model with line-delimited ingestion.

Cases follow the SOAP layout (Subjective, Objective, Assessment, Plan).
Guideline documents carry an outline of (title, depth, start, end) spans
over the body text; spans are validated on load so every downstream
provenance reference can be trusted. Character offsets count Unicode
scalar values, never bytes.

Ingestion is batch-rejecting: a duplicate id or a malformed line aborts
the whole load rather than silently overwriting provenance.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Iterable, Iterator

from .errors import (
    DuplicateCaseId,
    DuplicateDocId,
    DuplicateSection,
    MalformedRecord,
    NoSectionFound,
    OverlappingOutline,
    SpanOutOfBounds,
)

if TYPE_CHECKING:
    from .concepts import ConceptMention


class Source(str, Enum):
    REAL_DERIVED = "real-derived"
    SYNTHETIC = "synthetic"


_SOURCE_ALIASES = {
    "real-derived": Source.REAL_DERIVED,
    "real": Source.REAL_DERIVED,
    "mimic": Source.REAL_DERIVED,
    "synthetic": Source.SYNTHETIC,
    "synthea": Source.SYNTHETIC,
}


def parse_source(value: str) -> Source:
    """Map a raw source string (e.g. "mimic", "synthea") onto the enum."""
    try:
        return _SOURCE_ALIASES[value.strip().lower()]
    except (KeyError, AttributeError):
        raise ValueError(f"unknown case source {value!r}") from None


class Authority(str, Enum):
    WHO = "WHO"
    NICE = "NICE"
    OTHER = "other"


def parse_authority(value: str) -> Authority:
    v = value.strip().lower() if isinstance(value, str) else ""
    if v == "who":
        return Authority.WHO
    if v == "nice":
        return Authority.NICE
    return Authority.OTHER


SECTION_KEYS = ("subjective", "objective", "assessment", "plan")

_HEADER_TO_SECTION = {
    "s": "subjective",
    "subjective": "subjective",
    "o": "objective",
    "objective": "objective",
    "a": "assessment",
    "assessment": "assessment",
    "p": "plan",
    "plan": "plan",
}

# Headers are recognized at line starts only, with an optional indent.
_HEADER_RE = re.compile(
    r"^[ \t]*(s|subjective|o|objective|a|assessment|p|plan)[ \t]*:",
    re.IGNORECASE | re.MULTILINE,
)


@dataclass(frozen=True)
class SoapCase:
    """A patient case split into the four SOAP sections.

    ``plan`` may be empty (query cases ask the system to produce it);
    at least one of the four sections must be non-empty. ``concepts``
    is filled by the concept extractor, not at parse time.
    """

    case_id: str
    source: Source
    subjective: str
    objective: str
    assessment: str
    plan: str = ""
    concepts: tuple["ConceptMention", ...] = ()

    def __post_init__(self) -> None:
        if not any(
            getattr(self, key).strip() for key in SECTION_KEYS
        ):
            raise ValueError("at least one SOAP section must be non-empty")

    def sections(self) -> dict[str, str]:
        return {key: getattr(self, key) for key in SECTION_KEYS}

    def with_concepts(self, concepts: Iterable["ConceptMention"]) -> "SoapCase":
        return replace(self, concepts=tuple(concepts))


def parse_soap(raw: str, case_id: str, source: Source | str) -> SoapCase:
    """Split labeled free text into a SoapCase.

    Section headers are matched case-insensitively at line starts from the
    alias set S/Subjective, O/Objective, A/Assessment, P/Plan (each followed
    by a colon). Text before the first header is folded into the subjective
    section. Raises NoSectionFound when nothing non-empty survives and
    DuplicateSection when the same section is labeled twice.
    """
    if isinstance(source, str):
        source = parse_source(source)
    matches = list(_HEADER_RE.finditer(raw))
    content: dict[str, str] = {key: "" for key in SECTION_KEYS}
    seen: set[str] = set()
    preamble = raw[: matches[0].start()] if matches else raw
    for i, m in enumerate(matches):
        section = _HEADER_TO_SECTION[m.group(1).lower()]
        if section in seen:
            raise DuplicateSection(f"section {section!r} appears more than once")
        seen.add(section)
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw)
        content[section] = raw[m.end(): end].strip()
    parts = [p for p in (preamble.strip(), content["subjective"]) if p]
    content["subjective"] = "\n".join(parts)
    if not any(content[key] for key in SECTION_KEYS):
        raise NoSectionFound("no SOAP content found in input text")
    return SoapCase(case_id=case_id, source=source, **content)


def render_soap(case: SoapCase) -> str:
    """Render a case back to labeled text; parse_soap inverts this."""
    return (
        f"S: {case.subjective}\n"
        f"O: {case.objective}\n"
        f"A: {case.assessment}\n"
        f"P: {case.plan}"
    )


@dataclass
class CaseRepository:
    """Insertion-ordered, immutable-after-load store of patient cases."""

    cases: dict[str, SoapCase] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.cases)

    def __iter__(self) -> Iterator[SoapCase]:
        return iter(self.cases.values())

    def __contains__(self, case_id: str) -> bool:
        return case_id in self.cases

    def get(self, case_id: str) -> SoapCase:
        return self.cases[case_id]

    def case_ids(self) -> tuple[str, ...]:
        return tuple(self.cases)

    def to_jsonl(self) -> str:
        lines = [json.dumps(_case_record(c), ensure_ascii=False) for c in self]
        return "\n".join(lines) + ("\n" if lines else "")

    def sha256(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()


def _case_record(case: SoapCase) -> dict:
    record = {
        "case_id": case.case_id,
        "source": case.source.value,
        "s": case.subjective,
        "o": case.objective,
        "a": case.assessment,
        "p": case.plan,
    }
    if case.concepts:
        record["concepts"] = [
            {
                "section": m.section,
                "surface": m.surface,
                "concept_id": m.concept_id,
                "category": m.category.value,
                "start": m.start,
                "end": m.end,
            }
            for m in case.concepts
        ]
    return record


def ingest_cases(records: Iterable[str]) -> CaseRepository:
    """Load line-delimited case records into a repository.

    Each non-blank line is a JSON object with case_id, source, s, o, a, p
    (and optionally the concepts written by a previous annotation pass).
    The whole batch is rejected on the first duplicate id or malformed line.
    """
    from .concepts import Category, ConceptMention  # local to avoid cycle

    cases: dict[str, SoapCase] = {}
    for line_number, line in enumerate(records, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_number, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise MalformedRecord(line_number, "record is not an object")
        case_id = obj.get("case_id")
        if not isinstance(case_id, str) or not case_id:
            raise MalformedRecord(line_number, "missing or empty case_id")
        if case_id in cases:
            raise DuplicateCaseId(case_id, line_number)
        try:
            source = parse_source(obj.get("source", ""))
        except ValueError as exc:
            raise MalformedRecord(line_number, str(exc)) from exc
        sections = {}
        for key, name in (("s", "subjective"), ("o", "objective"),
                          ("a", "assessment"), ("p", "plan")):
            value = obj.get(key, "")
            if not isinstance(value, str):
                raise MalformedRecord(line_number, f"field {key!r} is not text")
            sections[name] = value
        concepts = []
        for row in obj.get("concepts", []):
            try:
                concepts.append(ConceptMention(
                    surface=row["surface"],
                    concept_id=row["concept_id"],
                    category=Category(row["category"]),
                    start=row["start"],
                    end=row["end"],
                    section=row.get("section"),
                ))
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedRecord(line_number, f"bad concept row: {exc}") from exc
        try:
            case = SoapCase(case_id=case_id, source=source,
                            concepts=tuple(concepts), **sections)
        except ValueError as exc:
            raise MalformedRecord(line_number, str(exc)) from exc
        cases[case_id] = case
    return CaseRepository(cases=cases)


@dataclass(frozen=True)
class OutlineEntry:
    title: str
    depth: int
    char_start: int
    char_end: int


@dataclass(frozen=True)
class SourceSpan:
    """Half-open character span into a guideline document body."""

    doc_id: str
    section_title: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class GuidelineDoc:
    doc_id: str
    authority: Authority
    title: str
    body: str
    outline: tuple[OutlineEntry, ...]


def validate_outline(body: str, outline: Iterable[OutlineEntry]) -> None:
    """Check span bounds, equal-depth disjointness, and proper nesting.

    Any two outline spans must be either disjoint or strictly nested, and
    the containing span must sit at a strictly smaller depth.
    """
    entries = list(outline)
    n = len(body)
    for e in entries:
        if not (0 <= e.char_start < e.char_end <= n):
            raise SpanOutOfBounds(
                f"outline span ({e.char_start}, {e.char_end}) for "
                f"{e.title!r} outside document of length {n}"
            )
    for i, a in enumerate(entries):
        for b in entries[i + 1:]:
            if a.char_end <= b.char_start or b.char_end <= a.char_start:
                continue  # disjoint
            a_contains_b = a.char_start <= b.char_start and b.char_end <= a.char_end
            b_contains_a = b.char_start <= a.char_start and a.char_end <= b.char_end
            if a_contains_b and a.depth < b.depth:
                continue
            if b_contains_a and b.depth < a.depth:
                continue
            raise OverlappingOutline(
                f"outline sections {a.title!r} and {b.title!r} overlap "
                "without proper nesting"
            )


@dataclass
class GuidelineCorpus:
    docs: dict[str, GuidelineDoc] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self) -> Iterator[GuidelineDoc]:
        return iter(self.docs.values())

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self.docs

    def get(self, doc_id: str) -> GuidelineDoc:
        return self.docs[doc_id]

    def to_jsonl(self) -> str:
        lines = []
        for doc in self:
            record = {
                "doc_id": doc.doc_id,
                "authority": doc.authority.value,
                "title": doc.title,
                "body": doc.body,
                "outline": [
                    [e.title, e.depth, e.char_start, e.char_end]
                    for e in doc.outline
                ],
            }
            lines.append(json.dumps(record, ensure_ascii=False))
        return "\n".join(lines) + ("\n" if lines else "")

    def sha256(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()


def ingest_guidelines(records: Iterable[str]) -> GuidelineCorpus:
    """Load line-delimited guideline records, validating outlines on load."""
    docs: dict[str, GuidelineDoc] = {}
    for line_number, line in enumerate(records, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_number, f"invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise MalformedRecord(line_number, "record is not an object")
        doc_id = obj.get("doc_id")
        if not isinstance(doc_id, str) or not doc_id:
            raise MalformedRecord(line_number, "missing or empty doc_id")
        if doc_id in docs:
            raise DuplicateDocId(f"duplicate doc_id {doc_id!r} at line {line_number}")
        body = obj.get("body", "")
        title = obj.get("title", "")
        if not isinstance(body, str) or not isinstance(title, str):
            raise MalformedRecord(line_number, "title/body must be text")
        outline = []
        for row in obj.get("outline", []):
            try:
                entry = OutlineEntry(
                    title=str(row[0]), depth=int(row[1]),
                    char_start=int(row[2]), char_end=int(row[3]),
                )
            except (IndexError, TypeError, ValueError) as exc:
                raise MalformedRecord(line_number, f"bad outline row: {exc}") from exc
            if entry.depth < 0:
                raise MalformedRecord(line_number, "outline depth must be >= 0")
            outline.append(entry)
        validate_outline(body, outline)
        docs[doc_id] = GuidelineDoc(
            doc_id=doc_id,
            authority=parse_authority(obj.get("authority", "")),
            title=title,
            body=body,
            outline=tuple(outline),
        )
    return GuidelineCorpus(docs=docs)
