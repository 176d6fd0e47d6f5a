"""Dual-evidence clinical retrieval.

Builds a provenance-preserving knowledge graph and community index from
hierarchical guideline documents, ranks clinically similar patient cases
with a hybrid keyword/semantic score, and aggregates both evidence
streams into an inspectable, toggleable evidence set for LLM-based
question answering.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Authority,
    CaseRepository,
    GuidelineCorpus,
    GuidelineDoc,
    SoapCase,
    Source,
    SourceSpan,
    ingest_cases,
    ingest_guidelines,
    parse_soap,
    render_soap,
)
from .concepts import (  # noqa: F401
    Category,
    ConceptMention,
    Vocabulary,
    annotate_case,
    concept_multiset,
    extract_concepts,
)
from .graph import (  # noqa: F401
    KnowledgeGraph,
    RelationRuleSet,
    SegmentConfig,
    TextUnit,
    extract_graph,
    resolve_provenance,
    segment_corpus,
    segment_guideline,
)
from .communities import (  # noqa: F401
    CommunityAssignment,
    CommunitySummary,
    detect_communities,
    summarize_all,
    summarize_community,
)
from .embedding import (  # noqa: F401
    EmbeddingVector,
    HashedNgramProvider,
    RemoteEmbeddingProvider,
    embed,
)
from .index import (  # noqa: F401
    EvidenceIndex,
    build_index,
    case_embedding_text,
    load_index,
    persist_index,
)
from .retrieval import (  # noqa: F401
    EvidenceSet,
    EvidenceToggles,
    GuidelineHit,
    HybridWeights,
    SaliencyThresholds,
    ScoredCase,
    assemble_evidence,
    hybrid_score,
    keyword_score,
    retrieve_guideline_evidence,
    retrieve_similar_patients,
    saliency_levels,
    semantic_score,
)
from .config import EngineConfig, load_config  # noqa: F401
from .engine import EvidenceEngine, QueryAnalysis  # noqa: F401
