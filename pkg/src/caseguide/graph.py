"""Guideline segmentation and rule-driven knowledge graph construction.

Segmentation walks the document outline and emits one or more TextUnits
per leaf section. Unit text is always an exact substring of the document
body, so concatenating a section's units reproduces the section verbatim
and every unit resolves back to its source span.

Graph extraction is deterministic: trigger phrases produce typed relations
between the nearest concept mentions of the configured categories; units
where no trigger fires contribute weak "co-occurs" edges; qualifier
patterns attach structured constraints (e.g. age limits) to the relations
extracted from the same unit. An LLM-backed extractor can replace this
behind the same function signature.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, NamedTuple

from .concepts import Category, Vocabulary, extract_concepts
from .corpus import GuidelineCorpus, GuidelineDoc, OutlineEntry, SourceSpan
from .errors import EmptyDocument, InputError, UnknownUnitId

_SENTENCE_BREAKS = frozenset(".?!\n")


@dataclass(frozen=True)
class TextUnit:
    """A provenance-anchored guideline segment."""

    unit_id: str
    doc_id: str
    text: str
    span: SourceSpan
    section_path: tuple[str, ...]


@dataclass(frozen=True)
class SegmentConfig:
    max_unit_chars: int = 1200
    min_unit_chars: int = 200

    def __post_init__(self) -> None:
        if not (self.max_unit_chars > self.min_unit_chars > 0):
            raise ValueError("require max_unit_chars > min_unit_chars > 0")


def _leaf_entries(doc: GuidelineDoc) -> list[tuple[OutlineEntry, tuple[str, ...]]]:
    """Return (leaf entry, section path root..leaf) pairs in document order."""
    outline = list(doc.outline)
    if not outline:
        outline = [OutlineEntry(doc.title or doc.doc_id, 0, 0, len(doc.body))]
    leaves = []
    for entry in outline:
        has_child = any(
            other is not entry
            and other.depth > entry.depth
            and entry.char_start <= other.char_start
            and other.char_end <= entry.char_end
            for other in outline
        )
        if has_child:
            continue
        ancestors = [
            other for other in outline
            if other is not entry
            and other.depth < entry.depth
            and other.char_start <= entry.char_start
            and entry.char_end <= other.char_end
        ]
        ancestors.sort(key=lambda e: e.depth)
        path = tuple(a.title for a in ancestors) + (entry.title,)
        leaves.append((entry, path))
    leaves.sort(key=lambda pair: (pair[0].char_start, pair[0].depth))
    return leaves


def _split_points(text: str, start: int, end: int, config: SegmentConfig) -> list[int]:
    """Piece boundaries for body[start:end], each piece <= max_unit_chars.

    Cuts land immediately after a sentence terminator when one is in range;
    pieces shorter than min_unit_chars are only produced when no longer cut
    exists. A sentence longer than max_unit_chars is split mid-sentence
    rather than exceeding the cap.
    """
    bounds = [start]
    cursor = start
    while end - cursor > config.max_unit_chars:
        window_end = cursor + config.max_unit_chars
        candidates = [
            i + 1
            for i in range(cursor, window_end)
            if text[i] in _SENTENCE_BREAKS
        ]
        preferred = [c for c in candidates if c - cursor >= config.min_unit_chars]
        if preferred:
            cut = preferred[-1]
        elif candidates:
            cut = candidates[-1]
        else:
            cut = window_end
        bounds.append(cut)
        cursor = cut
    bounds.append(end)
    return bounds


def segment_guideline(
    doc: GuidelineDoc, config: SegmentConfig | None = None
) -> list[TextUnit]:
    """Segment one guideline into TextUnits along its outline hierarchy.

    Documents without an outline are treated as a single root section. An
    empty body raises EmptyDocument.
    """
    config = config or SegmentConfig()
    if not doc.body.strip():
        raise EmptyDocument(f"guideline {doc.doc_id!r} has an empty body")
    units: list[TextUnit] = []
    counter = 0
    for entry, path in _leaf_entries(doc):
        bounds = _split_points(doc.body, entry.char_start, entry.char_end, config)
        for piece_start, piece_end in zip(bounds, bounds[1:]):
            if piece_start == piece_end:
                continue
            units.append(TextUnit(
                unit_id=f"{doc.doc_id}:{counter:04d}",
                doc_id=doc.doc_id,
                text=doc.body[piece_start:piece_end],
                span=SourceSpan(
                    doc_id=doc.doc_id,
                    section_title=entry.title,
                    char_start=piece_start,
                    char_end=piece_end,
                ),
                section_path=path,
            ))
            counter += 1
    return units


def segment_corpus(
    corpus: GuidelineCorpus, config: SegmentConfig | None = None
) -> list[TextUnit]:
    units: list[TextUnit] = []
    for doc in corpus:
        units.extend(segment_guideline(doc, config))
    return units


class RelationType(str, Enum):
    INDICATION = "indication"
    CONTRAINDICATION = "contraindication"
    MONITORING = "monitoring"
    ESCALATION = "escalation"
    CO_OCCURS = "co-occurs"


CLINICAL_RELATIONS = (
    RelationType.INDICATION,
    RelationType.CONTRAINDICATION,
    RelationType.MONITORING,
    RelationType.ESCALATION,
)


@dataclass(frozen=True)
class RelationRule:
    """Trigger phrase -> typed relation between nearby concept mentions."""

    trigger: str
    relation: RelationType
    src_category: Category
    dst_category: Category


@dataclass(frozen=True)
class QualifierRule:
    """Regex pattern whose match text is stored under ``key`` on the edge."""

    pattern: str
    key: str

    def compiled(self) -> re.Pattern[str]:
        return re.compile(self.pattern, re.IGNORECASE)


@dataclass(frozen=True)
class RelationRuleSet:
    triggers: tuple[RelationRule, ...] = ()
    qualifiers: tuple[QualifierRule, ...] = ()

    @classmethod
    def from_lines(
        cls,
        trigger_lines: Iterable[str],
        qualifier_lines: Iterable[str] = (),
    ) -> "RelationRuleSet":
        """Parse rule files.

        Trigger lines: trigger_phrase, relation_type, src_category,
        dst_category (tab-separated). Qualifier lines: regex pattern,
        qualifier_key. '#' comments and blank lines are skipped.
        """
        triggers = []
        for line_number, line in enumerate(trigger_lines, start=1):
            stripped = line.rstrip("\n")
            if not stripped.strip() or stripped.lstrip().startswith("#"):
                continue
            cols = stripped.split("\t")
            if len(cols) != 4:
                raise InputError(
                    f"relation rule line {line_number} needs 4 columns"
                )
            try:
                relation = RelationType(cols[1].strip().lower())
                src = Category(cols[2].strip().lower())
                dst = Category(cols[3].strip().lower())
            except ValueError as exc:
                raise InputError(
                    f"relation rule line {line_number}: {exc}"
                ) from None
            triggers.append(RelationRule(
                trigger=cols[0].strip(), relation=relation,
                src_category=src, dst_category=dst,
            ))
        qualifiers = []
        for line_number, line in enumerate(qualifier_lines, start=1):
            stripped = line.rstrip("\n")
            if not stripped.strip() or stripped.lstrip().startswith("#"):
                continue
            cols = stripped.split("\t")
            if len(cols) != 2:
                raise InputError(
                    f"qualifier rule line {line_number} needs 2 columns"
                )
            try:
                re.compile(cols[0])
            except re.error as exc:
                raise InputError(
                    f"qualifier rule line {line_number}: bad pattern ({exc})"
                ) from None
            qualifiers.append(QualifierRule(pattern=cols[0], key=cols[1].strip()))
        return cls(triggers=tuple(triggers), qualifiers=tuple(qualifiers))


@dataclass(frozen=True)
class EntityNode:
    entity_id: str
    concept_id: str
    category: Category
    description: str
    supporting_units: frozenset[str]


@dataclass(frozen=True)
class RelationEdge:
    edge_id: str
    src: str
    dst: str
    relation: RelationType
    qualifiers: tuple[tuple[str, str], ...]
    supporting_units: frozenset[str]

    def qualifier_map(self) -> dict[str, str]:
        return dict(self.qualifiers)


@dataclass
class KnowledgeGraph:
    """Entities, typed relations, and the TextUnits supporting them."""

    nodes: dict[str, EntityNode] = field(default_factory=dict)
    edges: tuple[RelationEdge, ...] = ()
    unit_index: dict[str, TextUnit] = field(default_factory=dict)

    def validate(self) -> None:
        for edge in self.edges:
            if edge.src not in self.nodes or edge.dst not in self.nodes:
                raise InputError(f"edge {edge.edge_id!r} references unknown entity")
            if edge.src == edge.dst:
                raise InputError(f"edge {edge.edge_id!r} is a self-loop")
            for unit_id in edge.supporting_units:
                if unit_id not in self.unit_index:
                    raise InputError(
                        f"edge {edge.edge_id!r} cites unknown unit {unit_id!r}"
                    )
        for node in self.nodes.values():
            if not node.supporting_units:
                raise InputError(f"entity {node.entity_id!r} has no support")
            for unit_id in node.supporting_units:
                if unit_id not in self.unit_index:
                    raise InputError(
                        f"entity {node.entity_id!r} cites unknown unit {unit_id!r}"
                    )

    def edges_for(
        self, entity_id: str, relations: Iterable[RelationType] = CLINICAL_RELATIONS
    ) -> list[RelationEdge]:
        wanted = set(relations)
        return [
            e for e in self.edges
            if e.relation in wanted and entity_id in (e.src, e.dst)
        ]

    def undirected_weights(self) -> dict[tuple[str, str], float]:
        """Aggregate edge weights (support counts) on the undirected projection."""
        weights: dict[tuple[str, str], float] = {}
        for edge in self.edges:
            key = tuple(sorted((edge.src, edge.dst)))
            weights[key] = weights.get(key, 0.0) + len(edge.supporting_units)
        return weights

    def to_json(self) -> str:
        payload = {
            "nodes": [
                {
                    "entity_id": n.entity_id,
                    "concept_id": n.concept_id,
                    "category": n.category.value,
                    "description": n.description,
                    "supporting_units": sorted(n.supporting_units),
                }
                for n in sorted(self.nodes.values(), key=lambda n: n.entity_id)
            ],
            "edges": [
                {
                    "edge_id": e.edge_id,
                    "src": e.src,
                    "dst": e.dst,
                    "relation": e.relation.value,
                    "qualifiers": dict(e.qualifiers),
                    "supporting_units": sorted(e.supporting_units),
                }
                for e in sorted(self.edges, key=lambda e: e.edge_id)
            ],
            "units": [
                {
                    "unit_id": u.unit_id,
                    "doc_id": u.doc_id,
                    "text": u.text,
                    "section_title": u.span.section_title,
                    "char_start": u.span.char_start,
                    "char_end": u.span.char_end,
                    "section_path": list(u.section_path),
                }
                for u in sorted(self.unit_index.values(), key=lambda u: u.unit_id)
            ],
        }
        return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "KnowledgeGraph":
        payload = json.loads(text)
        nodes = {}
        for row in payload["nodes"]:
            node = EntityNode(
                entity_id=row["entity_id"],
                concept_id=row["concept_id"],
                category=Category(row["category"]),
                description=row["description"],
                supporting_units=frozenset(row["supporting_units"]),
            )
            nodes[node.entity_id] = node
        edges = tuple(
            RelationEdge(
                edge_id=row["edge_id"],
                src=row["src"],
                dst=row["dst"],
                relation=RelationType(row["relation"]),
                qualifiers=tuple(sorted(row["qualifiers"].items())),
                supporting_units=frozenset(row["supporting_units"]),
            )
            for row in payload["edges"]
        )
        units = {}
        for row in payload["units"]:
            unit = TextUnit(
                unit_id=row["unit_id"],
                doc_id=row["doc_id"],
                text=row["text"],
                span=SourceSpan(
                    doc_id=row["doc_id"],
                    section_title=row["section_title"],
                    char_start=row["char_start"],
                    char_end=row["char_end"],
                ),
                section_path=tuple(row["section_path"]),
            )
            units[unit.unit_id] = unit
        graph = cls(nodes=nodes, edges=edges, unit_index=units)
        graph.validate()
        return graph

    def sha256(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()


class _TriggerHit(NamedTuple):
    start: int
    end: int
    rule: RelationRule


def _find_triggers(text: str, rules: Iterable[RelationRule]) -> list[_TriggerHit]:
    lowered = text.lower()
    hits = []
    for rule in rules:
        needle = rule.trigger.lower()
        pos = lowered.find(needle)
        while pos >= 0:
            hits.append(_TriggerHit(pos, pos + len(needle), rule))
            pos = lowered.find(needle, pos + 1)
    hits.sort(key=lambda h: (h.start, h.rule.trigger))
    return hits


def _nearest_mention(mentions, category, anchor_start, anchor_end, skip=None):
    best = None
    best_key = None
    for m in mentions:
        if m.category != category or m is skip:
            continue
        distance = max(0, anchor_start - m.end, m.start - anchor_end)
        key = (distance, m.start)
        if best_key is None or key < best_key:
            best, best_key = m, key
    return best


def extract_graph(
    units: Iterable[TextUnit],
    vocabulary: Vocabulary,
    rules: RelationRuleSet,
) -> KnowledgeGraph:
    """Build the knowledge graph from segmented units.

    One entity per distinct concept id seen anywhere in the units; edges
    from trigger rules, with a co-occurrence fallback for units where no
    trigger fires. Duplicate (src, dst, relation) edges are merged and
    their supports unioned. Output is independent of unit iteration
    order modulo support sets, and fully deterministic for a fixed input.
    """
    units = list(units)
    entity_supports: dict[str, set[str]] = {}
    entity_category: dict[str, Category] = {}
    edge_supports: dict[tuple[str, str, str], set[str]] = {}
    edge_qualifiers: dict[tuple[str, str, str], dict[str, str]] = {}
    compiled_qualifiers = [(q.compiled(), q.key) for q in rules.qualifiers]

    for unit in units:
        mentions = extract_concepts(unit.text, vocabulary)
        for m in mentions:
            entity_supports.setdefault(m.concept_id, set()).add(unit.unit_id)
            entity_category[m.concept_id] = m.category
        unit_qualifiers: dict[str, str] = {}
        for pattern, key in compiled_qualifiers:
            found = pattern.search(unit.text)
            if found and key not in unit_qualifiers:
                unit_qualifiers[key] = found.group(0)
        fired = False
        for hit in _find_triggers(unit.text, rules.triggers):
            src = _nearest_mention(
                mentions, hit.rule.src_category, hit.start, hit.end
            )
            dst = _nearest_mention(
                mentions, hit.rule.dst_category, hit.start, hit.end, skip=src
            )
            if src is None or dst is None or src.concept_id == dst.concept_id:
                continue
            key = (src.concept_id, dst.concept_id, hit.rule.relation.value)
            edge_supports.setdefault(key, set()).add(unit.unit_id)
            merged = edge_qualifiers.setdefault(key, {})
            for qkey, qvalue in unit_qualifiers.items():
                merged.setdefault(qkey, qvalue)
            fired = True
        if not fired:
            concept_ids = sorted({m.concept_id for m in mentions})
            for i, a in enumerate(concept_ids):
                for b in concept_ids[i + 1:]:
                    key = (a, b, RelationType.CO_OCCURS.value)
                    edge_supports.setdefault(key, set()).add(unit.unit_id)
                    edge_qualifiers.setdefault(key, {})

    nodes = {}
    for concept_id in sorted(entity_supports):
        category = entity_category[concept_id]
        supports = entity_supports[concept_id]
        name = vocabulary.canonical_term(concept_id)
        plural = "s" if len(supports) != 1 else ""
        nodes[concept_id] = EntityNode(
            entity_id=concept_id,
            concept_id=concept_id,
            category=category,
            description=(
                f"{name} ({category.value}); mentioned in "
                f"{len(supports)} guideline unit{plural}"
            ),
            supporting_units=frozenset(supports),
        )
    edges = []
    for (src, dst, relation) in sorted(edge_supports):
        edges.append(RelationEdge(
            edge_id=f"{src}|{relation}|{dst}",
            src=src,
            dst=dst,
            relation=RelationType(relation),
            qualifiers=tuple(sorted(edge_qualifiers[(src, dst, relation)].items())),
            supporting_units=frozenset(edge_supports[(src, dst, relation)]),
        ))
    graph = KnowledgeGraph(
        nodes=nodes,
        edges=tuple(edges),
        unit_index={u.unit_id: u for u in units},
    )
    graph.validate()
    return graph


class Provenance(NamedTuple):
    doc_id: str
    section_path: tuple[str, ...]
    text: str


def resolve_provenance(graph: KnowledgeGraph, unit_id: str) -> Provenance:
    """Trace a unit id back to (doc_id, section path, exact source text)."""
    try:
        unit = graph.unit_index[unit_id]
    except KeyError:
        raise UnknownUnitId(f"unknown unit id {unit_id!r}") from None
    return Provenance(unit.doc_id, unit.section_path, unit.text)
