"""Hybrid keyword/semantic scoring and dual-evidence retrieval.

The patient-similarity score is a convex combination controlled by a
single mixing weight:

    hybrid = lambda * semantic + (1 - lambda) * keyword

where the keyword component is a category-weighted Jaccard over normalized
concept ids (diagnoses count more than symptoms) and the semantic
component maps cosine similarity from [-1, 1] onto [0, 1]. Community
retrieval reuses the same pattern with its own mixing weight alpha, since
community summaries are prose (semantic-dominant) while concept overlap
gates clinical applicability.

All ranking is an exact scan with total tie-breaking (ascending artifact
id), so results are reproducible and directly checkable against a
brute-force oracle.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

from .communities import CommunityAssignment, CommunitySummary
from .concepts import Category, ConceptMention, Vocabulary, concept_map
from .corpus import CaseRepository, SoapCase, SourceSpan
from .embedding import EmbeddingProvider, EmbeddingVector, cosine, embed
from .errors import EmptyRepository, NoCommunities
from .graph import CLINICAL_RELATIONS, KnowledgeGraph, TextUnit
from .index import PATIENT_CASE, COMMUNITY_SUMMARY, EvidenceIndex, case_embedding_text

DEFAULT_CATEGORY_WEIGHTS: dict[Category, float] = {
    Category.DIAGNOSIS: 3.0,
    Category.MEDICATION: 2.0,
    Category.PROCEDURE: 2.0,
    Category.SYMPTOM: 1.5,
    Category.OTHER: 1.0,
}

DEFAULT_LAMBDA = 0.6
DEFAULT_ALPHA = 0.7


@dataclass(frozen=True)
class HybridWeights:
    """Mixing weight and per-category keyword weights."""

    lambda_: float = DEFAULT_LAMBDA
    category_weights: tuple[tuple[Category, float], ...] = tuple(
        sorted(DEFAULT_CATEGORY_WEIGHTS.items())
    )

    def __post_init__(self) -> None:
        if not (0.0 <= self.lambda_ <= 1.0):
            raise ValueError("lambda must be within [0, 1]")
        if any(w <= 0 for _, w in self.category_weights):
            raise ValueError("category weights must be positive")

    def weight_of(self, category: Category) -> float:
        for cat, weight in self.category_weights:
            if cat == category:
                return weight
        return 1.0

    def with_lambda(self, lambda_: float) -> "HybridWeights":
        return HybridWeights(lambda_=lambda_, category_weights=self.category_weights)

    @classmethod
    def from_mapping(
        cls,
        lambda_: float = DEFAULT_LAMBDA,
        category_weights: Mapping[Category, float] | None = None,
    ) -> "HybridWeights":
        weights = dict(DEFAULT_CATEGORY_WEIGHTS)
        weights.update(category_weights or {})
        return cls(lambda_=lambda_, category_weights=tuple(sorted(weights.items())))


def keyword_score(
    query_concepts: Mapping[str, Category],
    case_concepts: Mapping[str, Category],
    weights: HybridWeights,
) -> float:
    """Category-weighted Jaccard over concept-id sets; both empty -> 0.

    Scaling every category weight by the same positive constant leaves
    the score unchanged (it is a ratio), so only relative weights matter.
    """
    union = set(query_concepts) | set(case_concepts)
    if not union:
        return 0.0
    def category_of(concept_id: str) -> Category:
        got = query_concepts.get(concept_id)
        return got if got is not None else case_concepts[concept_id]
    intersection = set(query_concepts) & set(case_concepts)
    inter_weight = sum(weights.weight_of(category_of(c)) for c in intersection)
    union_weight = sum(weights.weight_of(category_of(c)) for c in union)
    return inter_weight / union_weight


def semantic_score(q_vec: EmbeddingVector, c_vec: EmbeddingVector) -> float:
    """(1 + cosine) / 2, mapping cosine range [-1, 1] onto [0, 1]."""
    return (1.0 + cosine(q_vec, c_vec)) / 2.0


def hybrid_score(kw: float, sem: float, lambda_: float) -> float:
    return lambda_ * sem + (1.0 - lambda_) * kw


@dataclass(frozen=True)
class ScoredCase:
    case_id: str
    hybrid: float
    kw: float
    sem: float
    matched_concepts: tuple[tuple[str, Category], ...]


def rank_patient_cases(
    query_vec: EmbeddingVector,
    query_concepts: Mapping[str, Category],
    index: EvidenceIndex,
    repo: CaseRepository,
    weights: HybridWeights,
    k: int,
    exclude_case_id: str | None = None,
) -> list[ScoredCase]:
    """Score every indexed case and return the top k.

    Exact scan over the patient_case partition; descending hybrid score,
    ties broken by ascending case_id; the query's own case_id is excluded.
    """
    if len(repo) == 0:
        raise EmptyRepository("patient repository is empty")
    if k < 1:
        raise ValueError("k must be >= 1")
    scored: list[ScoredCase] = []
    for case_id, vector in index.rows(PATIENT_CASE):
        if case_id == exclude_case_id:
            continue
        case = repo.get(case_id)
        case_concepts = concept_map(case.concepts)
        kw = keyword_score(query_concepts, case_concepts, weights)
        sem = semantic_score(query_vec, vector)
        matched = tuple(
            (cid, query_concepts[cid])
            for cid in sorted(set(query_concepts) & set(case_concepts))
        )
        scored.append(ScoredCase(
            case_id=case_id,
            hybrid=hybrid_score(kw, sem, weights.lambda_),
            kw=kw,
            sem=sem,
            matched_concepts=matched,
        ))
    scored.sort(key=lambda s: (-s.hybrid, s.case_id))
    return scored[:k]


def retrieve_similar_patients(
    query: SoapCase,
    index: EvidenceIndex,
    repo: CaseRepository,
    weights: HybridWeights,
    k: int,
    *,
    provider: EmbeddingProvider,
    vocabulary: Vocabulary | None = None,
) -> list[ScoredCase]:
    """Rank repository cases against a query case.

    Uses the query's pre-extracted concept mentions when present,
    otherwise extracts them with ``vocabulary``.
    """
    from .concepts import annotate_case

    index.require_embedder(provider)
    if not query.concepts and vocabulary is not None:
        query = annotate_case(query, vocabulary)
    query_vec = embed(case_embedding_text(query), provider)
    return rank_patient_cases(
        query_vec, concept_map(query.concepts), index, repo, weights, k,
        exclude_case_id=query.case_id,
    )


@dataclass(frozen=True)
class UnitRef:
    unit_id: str
    doc_id: str
    section_path: tuple[str, ...]
    span: SourceSpan
    text: str

    @classmethod
    def from_unit(cls, unit: TextUnit) -> "UnitRef":
        return cls(
            unit_id=unit.unit_id,
            doc_id=unit.doc_id,
            section_path=unit.section_path,
            span=unit.span,
            text=unit.text,
        )


@dataclass(frozen=True)
class RelationFinding:
    edge_id: str
    src: str
    dst: str
    relation: str
    qualifiers: tuple[tuple[str, str], ...]
    units: tuple[UnitRef, ...]


@dataclass(frozen=True)
class GuidelineHit:
    community_id: int
    score: float
    sem: float
    overlap: float
    summary_text: str
    matched_concepts: tuple[tuple[str, Category], ...]
    support: tuple[UnitRef, ...]
    relations: tuple[RelationFinding, ...]


def rank_communities(
    query_vec: EmbeddingVector,
    query_concepts: Mapping[str, Category],
    index: EvidenceIndex,
    graph: KnowledgeGraph,
    assignment: CommunityAssignment,
    summaries: Mapping[int, CommunitySummary],
    weights: HybridWeights,
    alpha: float,
    k: int,
) -> list[GuidelineHit]:
    """Score communities and expand the winners with relation evidence.

    Community score = alpha * semantic(query, summary) + (1 - alpha) *
    weighted-Jaccard(query concepts, member concepts). Each returned
    community carries its ranked support units plus, for every query
    concept matched inside it, the 1-hop clinical relation edges
    (indication, contraindication, monitoring, escalation) incident to
    that concept, with their supporting units.
    """
    if not assignment.communities:
        raise NoCommunities("community assignment is empty")
    if not (0.0 <= alpha <= 1.0):
        raise ValueError("alpha must be within [0, 1]")
    sem_by_cid = {
        int(artifact_id): semantic_score(query_vec, vector)
        for artifact_id, vector in index.rows(COMMUNITY_SUMMARY)
    }
    hits: list[GuidelineHit] = []
    for community_id in sorted(assignment.communities):
        members = assignment.communities[community_id]
        member_concepts = {
            graph.nodes[m].concept_id: graph.nodes[m].category for m in members
        }
        overlap = keyword_score(query_concepts, member_concepts, weights)
        sem = sem_by_cid.get(community_id, 0.5)
        score = alpha * sem + (1.0 - alpha) * overlap
        matched_ids = sorted(set(query_concepts) & set(member_concepts))
        matched = tuple((cid, member_concepts[cid]) for cid in matched_ids)
        summary = summaries[community_id]
        support = tuple(
            UnitRef.from_unit(graph.unit_index[u]) for u in summary.top_units
        )
        findings: dict[str, RelationFinding] = {}
        for cid in matched_ids:
            for edge in graph.edges_for(cid, CLINICAL_RELATIONS):
                findings[edge.edge_id] = RelationFinding(
                    edge_id=edge.edge_id,
                    src=edge.src,
                    dst=edge.dst,
                    relation=edge.relation.value,
                    qualifiers=edge.qualifiers,
                    units=tuple(
                        UnitRef.from_unit(graph.unit_index[u])
                        for u in sorted(edge.supporting_units)
                    ),
                )
        hits.append(GuidelineHit(
            community_id=community_id,
            score=score,
            sem=sem,
            overlap=overlap,
            summary_text=summary.summary_text,
            matched_concepts=matched,
            support=support,
            relations=tuple(
                findings[eid] for eid in sorted(findings)
            ),
        ))
    hits.sort(key=lambda h: (-h.score, h.community_id))
    return hits[:k]


def retrieve_guideline_evidence(
    query: SoapCase,
    index: EvidenceIndex,
    graph: KnowledgeGraph,
    assignment: CommunityAssignment,
    summaries: Mapping[int, CommunitySummary],
    k: int,
    *,
    provider: EmbeddingProvider,
    weights: HybridWeights | None = None,
    alpha: float = DEFAULT_ALPHA,
    vocabulary: Vocabulary | None = None,
) -> list[GuidelineHit]:
    from .concepts import annotate_case

    index.require_embedder(provider)
    if not query.concepts and vocabulary is not None:
        query = annotate_case(query, vocabulary)
    query_vec = embed(case_embedding_text(query), provider)
    return rank_communities(
        query_vec, concept_map(query.concepts), index, graph, assignment,
        summaries, weights or HybridWeights(), alpha, k,
    )


@dataclass(frozen=True)
class EvidenceToggles:
    use_patients: bool = True
    use_guidelines: bool = True


@dataclass(frozen=True)
class EvidenceSet:
    """Ranked, provenance-carrying aggregation of both evidence streams."""

    query_id: str
    guideline_hits: tuple[GuidelineHit, ...]
    patient_hits: tuple[ScoredCase, ...]
    toggles: EvidenceToggles


def assemble_evidence(
    query_vec: EmbeddingVector,
    query_concepts: Mapping[str, Category],
    query_id: str,
    toggles: EvidenceToggles,
    k_patients: int,
    k_communities: int,
    *,
    index: EvidenceIndex,
    repo: CaseRepository,
    graph: KnowledgeGraph,
    assignment: CommunityAssignment,
    summaries: Mapping[int, CommunitySummary],
    weights: HybridWeights,
    alpha: float = DEFAULT_ALPHA,
) -> EvidenceSet:
    """Run only the enabled retrievers; disabled streams stay empty."""
    patient_hits: tuple[ScoredCase, ...] = ()
    guideline_hits: tuple[GuidelineHit, ...] = ()
    if toggles.use_patients:
        patient_hits = tuple(rank_patient_cases(
            query_vec, query_concepts, index, repo, weights, k_patients,
            exclude_case_id=query_id,
        ))
    if toggles.use_guidelines:
        guideline_hits = tuple(rank_communities(
            query_vec, query_concepts, index, graph, assignment, summaries,
            weights, alpha, k_communities,
        ))
    return EvidenceSet(
        query_id=query_id,
        guideline_hits=guideline_hits,
        patient_hits=patient_hits,
        toggles=toggles,
    )


class SaliencyLevelName(str, Enum):
    NONE = "none"
    IMPORTANT = "important"
    HIGHLY_IMPORTANT = "highly_important"


@dataclass(frozen=True)
class SaliencyThresholds:
    low: float = 0.5
    high: float = 0.75

    def __post_init__(self) -> None:
        if not (0.0 <= self.low < self.high <= 1.0):
            raise ValueError("require 0 <= low < high <= 1")


@dataclass(frozen=True)
class SaliencyLevel:
    concept_id: str
    score: float
    level: SaliencyLevelName


def level_for(score: float, thresholds: SaliencyThresholds) -> SaliencyLevelName:
    if score >= thresholds.high:
        return SaliencyLevelName.HIGHLY_IMPORTANT
    if score >= thresholds.low:
        return SaliencyLevelName.IMPORTANT
    return SaliencyLevelName.NONE


def saliency_levels(
    query_vec: EmbeddingVector,
    mentions: Sequence[ConceptMention],
    provider: EmbeddingProvider,
    thresholds: SaliencyThresholds | None = None,
) -> list[SaliencyLevel]:
    """Score each distinct mention surface against the query embedding.

    score = semantic_score(query_vec, embed(surface)); the two-level
    discretization drives highlighting in the UI (important /
    highly_important). Ordered by descending score, then concept id.
    """
    thresholds = thresholds or SaliencyThresholds()
    seen: set[tuple[str, str]] = set()
    out: list[SaliencyLevel] = []
    for m in mentions:
        key = (m.concept_id, m.surface.lower())
        if key in seen:
            continue
        seen.add(key)
        score = semantic_score(query_vec, embed(m.surface, provider))
        out.append(SaliencyLevel(
            concept_id=m.concept_id,
            score=score,
            level=level_for(score, thresholds),
        ))
    out.sort(key=lambda s: (-s.score, s.concept_id))
    return out
