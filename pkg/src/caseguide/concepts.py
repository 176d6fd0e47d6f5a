"""Dictionary-driven clinical concept extraction and normalization.

Matching is case-insensitive, longest-match-first and respects word
boundaries, so "pain" never fires inside "Spain". Terms normalize to
opaque concept ids (ontology codes treated as labels); synonym rows
simply share one id. The extractor is deliberately deterministic so a
statistical NER model can be swapped in behind the same interface later.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .corpus import SECTION_KEYS, SoapCase
from .errors import VocabularyError


class Category(str, Enum):
    DIAGNOSIS = "diagnosis"
    SYMPTOM = "symptom"
    MEDICATION = "medication"
    PROCEDURE = "procedure"
    OTHER = "other"


@dataclass(frozen=True)
class ConceptMention:
    """One matched vocabulary term, with its span into the source text.

    ``section`` tags mentions extracted from a SOAP section ("subjective",
    "objective", "assessment", "plan"); it stays None for plain text.
    """

    surface: str
    concept_id: str
    category: Category
    start: int
    end: int
    section: str | None = None

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass(frozen=True)
class VocabEntry:
    term: str
    concept_id: str
    category: Category
    canonical: str | None = None


@dataclass
class Vocabulary:
    """Validated term dictionary: lowercased term -> (concept_id, category).

    The term mapping must be functional (no term maps to two concepts) and
    each concept id must carry a single category across all of its terms.
    """

    entries: tuple[VocabEntry, ...]
    _terms: dict[str, tuple[str, Category]] = field(init=False, repr=False)
    _categories: dict[str, Category] = field(init=False, repr=False)
    _canonical: dict[str, str] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        terms: dict[str, tuple[str, Category]] = {}
        categories: dict[str, Category] = {}
        canonical: dict[str, str] = {}
        for entry in self.entries:
            term = entry.term.strip()
            if not term:
                raise VocabularyError("vocabulary terms must be non-empty")
            key = term.lower()
            mapped = (entry.concept_id, entry.category)
            if key in terms and terms[key] != mapped:
                raise VocabularyError(
                    f"term {term!r} maps to both {terms[key][0]!r} "
                    f"and {entry.concept_id!r}"
                )
            terms[key] = mapped
            previous = categories.get(entry.concept_id)
            if previous is not None and previous != entry.category:
                raise VocabularyError(
                    f"concept {entry.concept_id!r} appears with categories "
                    f"{previous.value!r} and {entry.category.value!r}"
                )
            categories[entry.concept_id] = entry.category
            if entry.canonical:
                canonical[entry.concept_id] = entry.canonical
            canonical.setdefault(entry.concept_id, term)
        self._terms = terms
        self._categories = categories
        self._canonical = canonical

    def __len__(self) -> int:
        return len(self._terms)

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self._categories

    def term_map(self) -> Mapping[str, tuple[str, Category]]:
        return self._terms

    def category_of(self, concept_id: str) -> Category:
        return self._categories[concept_id]

    def canonical_term(self, concept_id: str) -> str:
        return self._canonical[concept_id]

    def concept_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._categories))

    def source_sha256(self) -> str:
        payload = "\n".join(
            f"{e.term}\t{e.concept_id}\t{e.category.value}\t{e.canonical or ''}"
            for e in self.entries
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    @classmethod
    def from_lines(cls, lines: Iterable[str]) -> "Vocabulary":
        """Parse tab-separated lines: term, concept_id, category[, canonical].

        Blank lines and lines starting with '#' are skipped.
        """
        entries = []
        for line_number, line in enumerate(lines, start=1):
            stripped = line.rstrip("\n")
            if not stripped.strip() or stripped.lstrip().startswith("#"):
                continue
            cols = stripped.split("\t")
            if len(cols) < 3:
                raise VocabularyError(
                    f"vocabulary line {line_number} needs at least "
                    f"term, concept_id, category"
                )
            try:
                category = Category(cols[2].strip().lower())
            except ValueError:
                raise VocabularyError(
                    f"vocabulary line {line_number}: unknown category "
                    f"{cols[2].strip()!r}"
                ) from None
            entries.append(VocabEntry(
                term=cols[0].strip(),
                concept_id=cols[1].strip(),
                category=category,
                canonical=cols[3].strip() if len(cols) > 3 and cols[3].strip() else None,
            ))
        return cls(entries=tuple(entries))


def _boundary_ok(text: str, start: int, end: int) -> bool:
    # A boundary is any transition between alphanumeric and non-alphanumeric.
    if start > 0 and text[start - 1].isalnum() and text[start].isalnum():
        return False
    if end < len(text) and text[end - 1].isalnum() and text[end].isalnum():
        return False
    return True


def extract_concepts(text: str, vocabulary: Vocabulary) -> list[ConceptMention]:
    """Find all vocabulary terms in ``text``.

    Overlaps resolve longest-span-first, then leftmost; the output is
    sorted by start offset and never contains overlapping mentions. The
    result does not depend on vocabulary entry order.
    """
    if not text:
        return []
    lowered = text.lower()
    candidates: list[tuple[int, int, str, str, Category]] = []
    for term, (concept_id, category) in vocabulary.term_map().items():
        pos = lowered.find(term)
        while pos >= 0:
            end = pos + len(term)
            if _boundary_ok(text, pos, end):
                candidates.append((len(term), pos, term, concept_id, category))
            pos = lowered.find(term, pos + 1)
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    taken: list[tuple[int, int]] = []
    mentions: list[ConceptMention] = []
    for length, start, _term, concept_id, category in candidates:
        end = start + length
        if any(start < t_end and t_start < end for t_start, t_end in taken):
            continue
        taken.append((start, end))
        mentions.append(ConceptMention(
            surface=text[start:end],
            concept_id=concept_id,
            category=category,
            start=start,
            end=end,
        ))
    mentions.sort(key=lambda m: m.start)
    return mentions


def annotate_case(case: SoapCase, vocabulary: Vocabulary) -> SoapCase:
    """Return a copy of the case with per-section concept mentions filled."""
    mentions: list[ConceptMention] = []
    for section in SECTION_KEYS:
        for m in extract_concepts(getattr(case, section), vocabulary):
            mentions.append(ConceptMention(
                surface=m.surface,
                concept_id=m.concept_id,
                category=m.category,
                start=m.start,
                end=m.end,
                section=section,
            ))
    return case.with_concepts(mentions)


def concept_multiset(
    case: SoapCase, vocabulary: Vocabulary
) -> dict[str, tuple[Category, int]]:
    """Aggregate concept counts across all four sections, keyed by id."""
    counts: dict[str, int] = {}
    categories: dict[str, Category] = {}
    for section in SECTION_KEYS:
        for m in extract_concepts(getattr(case, section), vocabulary):
            counts[m.concept_id] = counts.get(m.concept_id, 0) + 1
            categories[m.concept_id] = m.category
    return {
        concept_id: (categories[concept_id], counts[concept_id])
        for concept_id in sorted(counts)
    }


def concept_map(mentions: Iterable[ConceptMention]) -> dict[str, Category]:
    """Collapse mentions to a concept_id -> category map (set semantics)."""
    result: dict[str, Category] = {}
    for m in mentions:
        result[m.concept_id] = m.category
    return dict(sorted(result.items()))
