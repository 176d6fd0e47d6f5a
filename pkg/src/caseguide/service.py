"""HTTP service: case locking, dual-evidence retrieval, saliency, QA.

Sessions are held in memory with a TTL; the locked case, its embedding
and concept set are computed once at lock time and reused by every
retrieve/qa call. Prompts are assembled from a fixed block layout with
stable [P-n]/[G-n] citation markers so answers can be audited against
the exact prompt that produced them.
"""
from __future__ import annotations

import hashlib
import json
import re
import threading
import time
import uuid
from dataclasses import dataclass
from typing import Any, Mapping, Protocol

import requests
from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .config import EngineConfig
from .corpus import SoapCase, parse_soap, render_soap
from .engine import EvidenceEngine, QueryAnalysis
from .errors import (
    CaseguideError,
    ClientUnavailable,
    ExternalServiceError,
    IndexNotLoaded,
    InputError,
    UnknownSession,
    UnknownUnitId,
)
from .retrieval import EvidenceSet, EvidenceToggles

PATIENT_BLOCK_MARKER = "## Patient evidence"
GUIDELINE_BLOCK_MARKER = "## Guideline evidence"
DEFAULT_PREAMBLE = (
    "You are a clinical decision-support assistant. Ground every statement "
    "in the supplied evidence and cite it with the given [P-n]/[G-n] markers. "
    "If the evidence is insufficient, say so."
)


class LlmClient(Protocol):
    def complete(self, prompt: str, params: Mapping[str, Any]) -> str:
        ...


class MockLlmClient:
    """Deterministic stand-in: echoes a digest of the exact prompt."""

    def complete(self, prompt: str, params: Mapping[str, Any]) -> str:
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()
        return f"mock:{digest}"


class RemoteLlmClient:
    """JSON-over-HTTP client: {"prompt", "params"} -> {"text"}."""

    def __init__(self, endpoint: str, api_key: str | None = None,
                 timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout

    def complete(self, prompt: str, params: Mapping[str, Any]) -> str:
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            response = requests.post(
                self.endpoint,
                json={"prompt": prompt, "params": dict(params)},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise ClientUnavailable(
                f"LLM endpoint {self.endpoint} unreachable", detail=str(exc)
            ) from exc
        if response.status_code != 200:
            raise ClientUnavailable(
                f"LLM endpoint returned HTTP {response.status_code}",
                detail=response.text[:500],
            )
        try:
            return response.json()["text"]
        except (ValueError, KeyError) as exc:
            raise ClientUnavailable(
                "LLM endpoint returned an unexpected payload", detail=str(exc)
            ) from exc


@dataclass(frozen=True)
class Citation:
    marker: str
    kind: str  # "patient" | "guideline"
    ref: dict

    def as_dict(self) -> dict:
        return {"marker": self.marker, "kind": self.kind, "ref": self.ref}


@dataclass(frozen=True)
class PromptPackage:
    system_preamble: str
    case_block: str
    patient_evidence_block: str
    guideline_evidence_block: str
    question: str
    citations: tuple[Citation, ...]

    def render(self) -> str:
        parts = [self.system_preamble, "## Locked case", self.case_block]
        if self.patient_evidence_block:
            parts.extend([PATIENT_BLOCK_MARKER, self.patient_evidence_block])
        if self.guideline_evidence_block:
            parts.extend([GUIDELINE_BLOCK_MARKER, self.guideline_evidence_block])
        parts.extend(["## Question", self.question])
        return "\n\n".join(parts)


def build_prompt_package(
    engine: EvidenceEngine,
    locked_case: SoapCase,
    evidence: EvidenceSet,
    question: str,
    preamble: str = DEFAULT_PREAMBLE,
) -> PromptPackage:
    """Assemble the prompt blocks; a block is empty iff its toggle was off."""
    citations: list[Citation] = []
    patient_parts = []
    for n, hit in enumerate(evidence.patient_hits, start=1):
        marker = f"P-{n}"
        case = engine.repo.get(hit.case_id)
        patient_parts.append(
            f"[{marker}] case {hit.case_id} "
            f"(hybrid={hit.hybrid:.6f}, kw={hit.kw:.6f}, sem={hit.sem:.6f})\n"
            + render_soap(case)
        )
        citations.append(Citation(
            marker=marker, kind="patient", ref={"case_id": hit.case_id},
        ))
    guideline_parts = []
    for n, hit in enumerate(evidence.guideline_hits, start=1):
        marker = f"G-{n}"
        lines = [
            f"[{marker}] guideline community {hit.community_id} "
            f"(score={hit.score:.6f})",
            hit.summary_text,
        ]
        for ref in hit.support[:3]:
            authority = engine.corpus.get(ref.doc_id).authority.value
            path = " > ".join(ref.section_path)
            lines.append(f"  [{ref.unit_id}] {authority} | {path}: {ref.text}")
        for finding in hit.relations:
            qualifier_note = (
                " " + json.dumps(dict(finding.qualifiers), sort_keys=True)
                if finding.qualifiers else ""
            )
            lines.append(
                f"  relation: {finding.src} -{finding.relation}-> "
                f"{finding.dst}{qualifier_note}"
            )
        guideline_parts.append("\n".join(lines))
        citations.append(Citation(
            marker=marker,
            kind="guideline",
            ref={
                "community_id": hit.community_id,
                "unit_ids": [r.unit_id for r in hit.support],
            },
        ))
    return PromptPackage(
        system_preamble=preamble,
        case_block=render_soap(locked_case),
        patient_evidence_block="\n\n".join(patient_parts),
        guideline_evidence_block="\n\n".join(guideline_parts),
        question=question,
        citations=tuple(citations),
    )


@dataclass
class LockedSession:
    session_id: str
    analysis: QueryAnalysis
    created_at: float


class SessionStore:
    """Thread-safe in-memory session map with lazy TTL expiry."""

    def __init__(self, ttl_seconds: float = 3600.0):
        self.ttl = ttl_seconds
        self._lock = threading.Lock()
        self._sessions: dict[str, LockedSession] = {}

    def create(self, analysis: QueryAnalysis) -> LockedSession:
        session = LockedSession(
            session_id=uuid.uuid4().hex,
            analysis=analysis,
            created_at=time.monotonic(),
        )
        with self._lock:
            self._sweep()
            self._sessions[session.session_id] = session
        return session

    def get(self, session_id: str) -> LockedSession:
        with self._lock:
            self._sweep()
            session = self._sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"unknown or expired session {session_id!r}")
        return session

    def _sweep(self) -> None:
        now = time.monotonic()
        expired = [
            sid for sid, s in self._sessions.items()
            if now - s.created_at > self.ttl
        ]
        for sid in expired:
            del self._sessions[sid]


# --- response rendering -------------------------------------------------------

def render_patient_hit(engine: EvidenceEngine, analysis: QueryAnalysis, hit) -> dict:
    case = engine.repo.get(hit.case_id)
    return {
        "case_id": hit.case_id,
        "hybrid": hit.hybrid,
        "kw": hit.kw,
        "sem": hit.sem,
        "matched_concepts": [
            {"concept_id": cid, "category": cat.value}
            for cid, cat in hit.matched_concepts
        ],
        "sections": {
            "s": case.subjective,
            "o": case.objective,
            "a": case.assessment,
            "p": case.plan,
        },
        "saliency": [
            {"concept_id": s.concept_id, "score": s.score, "level": s.level.value}
            for s in engine.saliency_for_case(analysis, case)
        ],
        "highlights": engine.mention_highlights(analysis, case),
    }


def render_guideline_hit(engine: EvidenceEngine, hit) -> dict:
    def unit_ref(ref) -> dict:
        return {
            "unit_id": ref.unit_id,
            "doc_id": ref.doc_id,
            "authority": engine.corpus.get(ref.doc_id).authority.value,
            "section_path": list(ref.section_path),
            "char_start": ref.span.char_start,
            "char_end": ref.span.char_end,
            "text": ref.text,
        }

    return {
        "community_id": hit.community_id,
        "score": hit.score,
        "sem": hit.sem,
        "overlap": hit.overlap,
        "summary": hit.summary_text,
        "matched_concepts": [
            {"concept_id": cid, "category": cat.value}
            for cid, cat in hit.matched_concepts
        ],
        "support": [unit_ref(r) for r in hit.support],
        "relations": [
            {
                "edge_id": f.edge_id,
                "src": f.src,
                "dst": f.dst,
                "relation": f.relation,
                "qualifiers": dict(f.qualifiers),
                "units": [unit_ref(u) for u in f.units],
            }
            for f in hit.relations
        ],
    }


def render_evidence(
    engine: EvidenceEngine, analysis: QueryAnalysis, evidence: EvidenceSet
) -> dict:
    return {
        "query_id": evidence.query_id,
        "toggles": {
            "use_patients": evidence.toggles.use_patients,
            "use_guidelines": evidence.toggles.use_guidelines,
        },
        "patient_hits": [
            render_patient_hit(engine, analysis, hit)
            for hit in evidence.patient_hits
        ],
        "guideline_hits": [
            render_guideline_hit(engine, hit) for hit in evidence.guideline_hits
        ],
    }


# --- request models -------------------------------------------------------------

class SessionCreateRequest(BaseModel):
    case_text: str = ""
    case_id: str | None = None


class RetrieveRequest(BaseModel):
    use_patients: bool = True
    use_guidelines: bool = True
    k_patients: int | None = None
    k_communities: int | None = None


class QaRequest(BaseModel):
    question: str
    use_patients: bool = True
    use_guidelines: bool = True
    k_patients: int | None = None
    k_communities: int | None = None
    params: dict[str, Any] = {}


_STATUS_BY_ERROR: tuple[tuple[type, int], ...] = (
    (UnknownSession, 404),
    (UnknownUnitId, 404),
    (IndexNotLoaded, 409),
    (ExternalServiceError, 502),
    (InputError, 400),
)


def _status_for(exc: CaseguideError) -> int:
    for error_type, status in _STATUS_BY_ERROR:
        if isinstance(exc, error_type):
            return status
    return 500


def create_app(
    engine: EvidenceEngine | None,
    llm_client: LlmClient | None = None,
    config: EngineConfig | None = None,
) -> FastAPI:
    config = config or (engine.config if engine is not None else EngineConfig())
    llm_client = llm_client or MockLlmClient()
    sessions = SessionStore(ttl_seconds=config.session_ttl_seconds)
    llm_slots = threading.Semaphore(config.max_concurrent_llm_calls)

    app = FastAPI(title="caseguide evidence service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(config.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.engine = engine
    app.state.sessions = sessions

    @app.exception_handler(CaseguideError)
    async def _caseguide_error(request, exc: CaseguideError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={
                "code": exc.code,
                "message": exc.message,
                "detail": exc.detail,
            },
        )

    def require_engine() -> EvidenceEngine:
        if app.state.engine is None:
            raise IndexNotLoaded("no evidence index is loaded")
        return app.state.engine

    @app.post("/sessions")
    def create_session(body: SessionCreateRequest) -> dict:
        eng = require_engine()
        case = parse_soap(
            body.case_text,
            case_id=body.case_id or f"query-{uuid.uuid4().hex[:8]}",
            source="synthetic",
        )
        session = sessions.create(eng.analyze(case))
        return {"session_id": session.session_id}

    @app.post("/sessions/{session_id}/retrieve")
    def retrieve(session_id: str, body: RetrieveRequest) -> dict:
        eng = require_engine()
        session = sessions.get(session_id)
        evidence = eng.retrieve(
            session.analysis,
            EvidenceToggles(
                use_patients=body.use_patients,
                use_guidelines=body.use_guidelines,
            ),
            k_patients=body.k_patients,
            k_communities=body.k_communities,
        )
        return render_evidence(eng, session.analysis, evidence)

    @app.post("/sessions/{session_id}/qa")
    def qa(session_id: str, body: QaRequest) -> dict:
        eng = require_engine()
        session = sessions.get(session_id)
        evidence = eng.retrieve(
            session.analysis,
            EvidenceToggles(
                use_patients=body.use_patients,
                use_guidelines=body.use_guidelines,
            ),
            k_patients=body.k_patients,
            k_communities=body.k_communities,
        )
        package = build_prompt_package(
            eng, session.analysis.case, evidence, body.question
        )
        prompt = package.render()
        with llm_slots:
            answer = llm_client.complete(prompt, body.params)
        return {
            "answer": answer,
            "prompt_echo": prompt,
            "citations": [c.as_dict() for c in package.citations],
        }

    @app.get("/provenance/{unit_id}")
    def provenance(unit_id: str) -> dict:
        eng = require_engine()
        result = eng.provenance(unit_id)
        return {
            "doc_id": result.doc_id,
            "section_path": list(result.section_path),
            "text": result.text,
        }

    return app


# --- evaluation-support clients ------------------------------------------------

_PLAN_IN_PROMPT_RE = re.compile(
    r"\[P-1\].*?^P: (?P<plan>.*?)(?=\n\n\[P-|\n\n## |\Z)",
    re.DOTALL | re.MULTILINE,
)


class CopyTopPatientPlanClient:
    """Answers with the plan of the top retrieved patient, if any.

    Reads the rendered prompt: the plan of the [P-1] case block. Useful
    for wiring tests where a planted near-duplicate makes the copied plan
    equal the reference. Falls back to a fixed string when the prompt
    carries no patient evidence.
    """

    fallback = "Insufficient context."

    def complete(self, prompt: str, params: Mapping[str, Any]) -> str:
        match = _PLAN_IN_PROMPT_RE.search(prompt)
        if not match:
            return self.fallback
        plan = match.group("plan").strip()
        return plan if plan else self.fallback


class StaticClient:
    """Always answers with the same text."""

    def __init__(self, text: str):
        self.text = text

    def complete(self, prompt: str, params: Mapping[str, Any]) -> str:
        return self.text
