"""End-to-end pipeline facade and bundle storage.

An EvidenceEngine holds every immutable store a query needs: the case
repository (annotated with concepts), the guideline corpus and knowledge
graph, community assignment and summaries, the vector index, and the
embedding provider. Build once from raw stores, persist as a
self-contained bundle directory, and reload for querying or serving.

Bundle layout (all deterministic, no timestamps):

    cases.jsonl        annotated patient cases
    guidelines.jsonl   normalized guideline documents
    vocab.tsv          vocabulary as ingested
    graph.json         units + entities + relations
    communities.json   entity -> community assignment
    summaries.json     per-community extractive summaries
    manifest.json      index manifest with checksums
    partition_*.jsonl  one embedding partition per evidence modality
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .communities import (
    CommunityAssignment,
    CommunitySummary,
    detect_communities,
    summarize_all,
)
from .concepts import Category, Vocabulary, annotate_case, concept_map
from .config import EngineConfig
from .corpus import CaseRepository, GuidelineCorpus, SoapCase
from .embedding import (
    EmbeddingProvider,
    EmbeddingVector,
    HashedNgramProvider,
    RemoteEmbeddingProvider,
    embed,
)
from .errors import CorruptPartition, InputError
from .graph import (
    KnowledgeGraph,
    Provenance,
    RelationRuleSet,
    SegmentConfig,
    extract_graph,
    resolve_provenance,
    segment_corpus,
)
from .index import EvidenceIndex, build_index, case_embedding_text, load_index, persist_index
from .retrieval import (
    EvidenceSet,
    EvidenceToggles,
    HybridWeights,
    SaliencyLevel,
    assemble_evidence,
    level_for,
    saliency_levels,
)

STORE_FILES = ("cases.jsonl", "guidelines.jsonl", "vocab.tsv", "graph.json")


@dataclass(frozen=True)
class QueryAnalysis:
    """Cached per-query state: annotated case, embedding, concept set."""

    case: SoapCase
    vector: EmbeddingVector
    concepts: dict[str, Category]


def default_provider(config: EngineConfig) -> EmbeddingProvider:
    if config.embedding_endpoint:
        return RemoteEmbeddingProvider(
            config.embedding_endpoint, dim=config.embedding_dim
        )
    return HashedNgramProvider(dim=config.embedding_dim)


def provider_for_manifest(
    embedder_id: str, config: EngineConfig
) -> EmbeddingProvider:
    """Reconstruct the provider an index was built with."""
    if embedder_id.startswith("hash3gram-"):
        return HashedNgramProvider.from_embedder_id(embedder_id)
    if embedder_id.startswith("remote:"):
        return RemoteEmbeddingProvider(
            embedder_id[len("remote:"):], dim=config.embedding_dim
        )
    raise InputError(f"cannot reconstruct embedding provider {embedder_id!r}")


class EvidenceEngine:
    def __init__(
        self,
        *,
        repo: CaseRepository,
        corpus: GuidelineCorpus,
        vocabulary: Vocabulary,
        vocab_text: str,
        graph: KnowledgeGraph,
        assignment: CommunityAssignment,
        summaries: Mapping[int, CommunitySummary],
        index: EvidenceIndex,
        provider: EmbeddingProvider,
        config: EngineConfig | None = None,
    ):
        self.repo = repo
        self.corpus = corpus
        self.vocabulary = vocabulary
        self.vocab_text = vocab_text
        self.graph = graph
        self.assignment = assignment
        self.summaries = dict(summaries)
        self.index = index
        self.provider = provider
        self.config = config or EngineConfig()
        self.index.require_embedder(provider)

    # -- construction ------------------------------------------------------

    @classmethod
    def from_stores(
        cls,
        repo: CaseRepository,
        corpus: GuidelineCorpus,
        vocabulary: Vocabulary,
        rules: RelationRuleSet,
        *,
        vocab_text: str = "",
        provider: EmbeddingProvider | None = None,
        config: EngineConfig | None = None,
        seed: int = 0,
    ) -> "EvidenceEngine":
        """Build graph, communities, summaries, and index in memory."""
        config = config or EngineConfig()
        provider = provider or default_provider(config)
        annotated = CaseRepository(cases={
            case.case_id: (
                case if case.concepts else annotate_case(case, vocabulary)
            )
            for case in repo
        })
        segment_config = SegmentConfig(
            max_unit_chars=config.max_unit_chars,
            min_unit_chars=config.min_unit_chars,
        )
        units = segment_corpus(corpus, segment_config)
        graph = extract_graph(units, vocabulary, rules)
        if graph.nodes:
            assignment = detect_communities(graph, seed=seed)
            summaries = summarize_all(
                graph, assignment, char_budget=config.summary_char_budget
            )
        else:
            assignment = CommunityAssignment(community_of={}, communities={})
            summaries = {}
        index = build_index(annotated, graph, summaries, provider, seed=seed)
        return cls(
            repo=annotated, corpus=corpus, vocabulary=vocabulary,
            vocab_text=vocab_text, graph=graph, assignment=assignment,
            summaries=summaries, index=index, provider=provider, config=config,
        )

    # -- persistence ---------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "cases.jsonl").write_text(
            self.repo.to_jsonl(), encoding="utf-8"
        )
        (directory / "guidelines.jsonl").write_text(
            self.corpus.to_jsonl(), encoding="utf-8"
        )
        (directory / "vocab.tsv").write_text(self.vocab_text, encoding="utf-8")
        (directory / "graph.json").write_text(self.graph.to_json(), encoding="utf-8")
        (directory / "communities.json").write_text(
            json.dumps(
                {
                    "community_of": dict(sorted(self.assignment.community_of.items())),
                    "communities": {
                        str(cid): sorted(members)
                        for cid, members in sorted(self.assignment.communities.items())
                    },
                },
                indent=2, sort_keys=True,
            ) + "\n",
            encoding="utf-8",
        )
        (directory / "summaries.json").write_text(
            json.dumps(
                {
                    str(s.community_id): {
                        "summary_text": s.summary_text,
                        "member_entities": list(s.member_entities),
                        "top_units": list(s.top_units),
                    }
                    for s in self.summaries.values()
                },
                indent=2, sort_keys=True, ensure_ascii=False,
            ) + "\n",
            encoding="utf-8",
        )
        persist_index(self.index, directory)

    @classmethod
    def load(
        cls,
        directory: str | Path,
        *,
        provider: EmbeddingProvider | None = None,
        config: EngineConfig | None = None,
    ) -> "EvidenceEngine":
        from .corpus import ingest_cases, ingest_guidelines

        directory = Path(directory)
        config = config or EngineConfig()
        index = load_index(directory)
        if provider is None:
            provider = provider_for_manifest(index.manifest.embedder_id, config)
        cases_text = (directory / "cases.jsonl").read_text(encoding="utf-8")
        repo = ingest_cases(cases_text.splitlines())
        expected = index.manifest.hashes().get("cases")
        if expected is not None and repo.sha256() != expected:
            raise CorruptPartition(
                "cases.jsonl does not match the hash recorded at index build"
            )
        corpus = ingest_guidelines(
            (directory / "guidelines.jsonl").read_text(encoding="utf-8").splitlines()
        )
        vocab_text = (directory / "vocab.tsv").read_text(encoding="utf-8")
        vocabulary = Vocabulary.from_lines(vocab_text.splitlines())
        graph = KnowledgeGraph.from_json(
            (directory / "graph.json").read_text(encoding="utf-8")
        )
        expected = index.manifest.hashes().get("graph")
        if expected is not None and graph.sha256() != expected:
            raise CorruptPartition(
                "graph.json does not match the hash recorded at index build"
            )
        communities_payload = json.loads(
            (directory / "communities.json").read_text(encoding="utf-8")
        )
        assignment = CommunityAssignment(
            community_of={
                k: int(v) for k, v in communities_payload["community_of"].items()
            },
            communities={
                int(cid): frozenset(members)
                for cid, members in communities_payload["communities"].items()
            },
        )
        summaries_payload = json.loads(
            (directory / "summaries.json").read_text(encoding="utf-8")
        )
        summaries = {
            int(cid): CommunitySummary(
                community_id=int(cid),
                summary_text=row["summary_text"],
                member_entities=tuple(row["member_entities"]),
                top_units=tuple(row["top_units"]),
            )
            for cid, row in summaries_payload.items()
        }
        return cls(
            repo=repo, corpus=corpus, vocabulary=vocabulary,
            vocab_text=vocab_text, graph=graph, assignment=assignment,
            summaries=summaries, index=index, provider=provider, config=config,
        )

    # -- querying -------------------------------------------------------------

    def analyze(self, case: SoapCase) -> QueryAnalysis:
        """Annotate, embed, and cache everything retrieval needs for a query."""
        if not case.concepts:
            case = annotate_case(case, self.vocabulary)
        vector = embed(case_embedding_text(case), self.provider)
        return QueryAnalysis(
            case=case, vector=vector, concepts=concept_map(case.concepts)
        )

    def retrieve(
        self,
        analysis: QueryAnalysis,
        toggles: EvidenceToggles,
        k_patients: int | None = None,
        k_communities: int | None = None,
        weights: HybridWeights | None = None,
    ) -> EvidenceSet:
        return assemble_evidence(
            analysis.vector,
            analysis.concepts,
            analysis.case.case_id,
            toggles,
            k_patients if k_patients is not None else self.config.k_patients,
            k_communities if k_communities is not None else self.config.k_communities,
            index=self.index,
            repo=self.repo,
            graph=self.graph,
            assignment=self.assignment,
            summaries=self.summaries,
            weights=weights or self.config.weights(),
            alpha=self.config.alpha,
        )

    def saliency_for_case(
        self, analysis: QueryAnalysis, case: SoapCase
    ) -> list[SaliencyLevel]:
        return saliency_levels(
            analysis.vector, case.concepts, self.provider,
            self.config.thresholds(),
        )

    def mention_highlights(
        self, analysis: QueryAnalysis, case: SoapCase
    ) -> list[dict]:
        """Per-mention spans with saliency levels, for UI highlighting."""
        thresholds = self.config.thresholds()
        score_cache: dict[str, float] = {}
        rows = []
        for m in case.concepts:
            key = m.surface.lower()
            if key not in score_cache:
                from .retrieval import semantic_score

                score_cache[key] = semantic_score(
                    analysis.vector, embed(m.surface, self.provider)
                )
            score = score_cache[key]
            rows.append({
                "section": m.section,
                "start": m.start,
                "end": m.end,
                "surface": m.surface,
                "concept_id": m.concept_id,
                "category": m.category.value,
                "score": score,
                "level": level_for(score, thresholds).value,
            })
        return rows

    def provenance(self, unit_id: str) -> Provenance:
        return resolve_provenance(self.graph, unit_id)
