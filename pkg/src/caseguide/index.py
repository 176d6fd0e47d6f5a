"""Modality-partitioned evidence index with on-disk persistence.

Four partitions: guideline text units, community summaries, entity
descriptions, and patient cases. Patient cases embed from the S, O and A
sections only, matching the query-side representation used for plan
completion. Everything serialized here is deterministic for fixed inputs:
no timestamps, stable ordering, checksummed partitions.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .communities import CommunitySummary
from .corpus import CaseRepository, SoapCase
from .embedding import EmbeddingProvider, EmbeddingVector, embed_all
from .errors import (
    CorruptPartition,
    DimMismatch,
    EmbedderMismatch,
    FormatVersionMismatch,
)
from .graph import KnowledgeGraph

FORMAT_VERSION = "1"

TEXT_UNIT = "text_unit"
COMMUNITY_SUMMARY = "community_summary"
ENTITY_DESCRIPTION = "entity_description"
PATIENT_CASE = "patient_case"
MODALITIES = (TEXT_UNIT, COMMUNITY_SUMMARY, ENTITY_DESCRIPTION, PATIENT_CASE)


def case_embedding_text(case: SoapCase) -> str:
    # Plan is excluded: queries arrive without one, and index-side
    # representation must match query-side representation.
    return "\n".join((case.subjective, case.objective, case.assessment))


@dataclass(frozen=True)
class IndexManifest:
    dim: int
    embedder_id: str
    corpus_hashes: tuple[tuple[str, str], ...]
    build_seed: int
    format_version: str = FORMAT_VERSION

    def hashes(self) -> dict[str, str]:
        return dict(self.corpus_hashes)


@dataclass
class EvidenceIndex:
    partitions: dict[str, tuple[tuple[str, EmbeddingVector], ...]]
    manifest: IndexManifest

    def ids(self, modality: str) -> tuple[str, ...]:
        return tuple(artifact_id for artifact_id, _ in self.partitions[modality])

    def rows(self, modality: str) -> tuple[tuple[str, EmbeddingVector], ...]:
        return self.partitions[modality]

    def vector(self, modality: str, artifact_id: str) -> EmbeddingVector:
        for aid, vec in self.partitions[modality]:
            if aid == artifact_id:
                return vec
        raise KeyError(artifact_id)

    def require_embedder(self, provider: EmbeddingProvider) -> None:
        if provider.embedder_id != self.manifest.embedder_id:
            raise EmbedderMismatch(
                f"index was built with {self.manifest.embedder_id!r} but "
                f"queries use {provider.embedder_id!r}"
            )


def build_index(
    repo: CaseRepository,
    graph: KnowledgeGraph,
    summaries: Mapping[int, CommunitySummary],
    provider: EmbeddingProvider,
    seed: int = 0,
    corpus_hashes: Mapping[str, str] | None = None,
) -> EvidenceIndex:
    """Embed every evidence artifact into its modality partition.

    Artifacts are embedded in a deterministic order (sorted ids for
    guideline-side artifacts, repository order for cases) so a rebuild
    with the same inputs and seed is byte-identical once persisted.
    """
    units = sorted(graph.unit_index.values(), key=lambda u: u.unit_id)
    entities = sorted(graph.nodes.values(), key=lambda n: n.entity_id)
    summary_ids = sorted(summaries)
    cases = list(repo)

    plan = {
        TEXT_UNIT: ([u.unit_id for u in units], [u.text for u in units]),
        COMMUNITY_SUMMARY: (
            [str(cid) for cid in summary_ids],
            [summaries[cid].summary_text for cid in summary_ids],
        ),
        ENTITY_DESCRIPTION: (
            [n.entity_id for n in entities],
            [n.description for n in entities],
        ),
        PATIENT_CASE: (
            [c.case_id for c in cases],
            [case_embedding_text(c) for c in cases],
        ),
    }
    partitions: dict[str, tuple[tuple[str, EmbeddingVector], ...]] = {}
    for modality, (artifact_ids, texts) in plan.items():
        vectors = embed_all(texts, provider)
        for vector in vectors:
            if vector.dim != provider.dim:
                raise DimMismatch(
                    f"provider emitted dim {vector.dim}, expected {provider.dim}"
                )
        partitions[modality] = tuple(zip(artifact_ids, vectors))

    if corpus_hashes is None:
        summary_payload = json.dumps(
            {str(cid): summaries[cid].summary_text for cid in summary_ids},
            ensure_ascii=False, sort_keys=True,
        )
        corpus_hashes = {
            "cases": repo.sha256(),
            "graph": graph.sha256(),
            "summaries": hashlib.sha256(
                summary_payload.encode("utf-8")
            ).hexdigest(),
        }
    manifest = IndexManifest(
        dim=provider.dim,
        embedder_id=provider.embedder_id,
        corpus_hashes=tuple(sorted(corpus_hashes.items())),
        build_seed=seed,
    )
    return EvidenceIndex(partitions=partitions, manifest=manifest)


def _partition_filename(modality: str) -> str:
    return f"partition_{modality}.jsonl"


def _partition_bytes(rows: Sequence[tuple[str, EmbeddingVector]]) -> bytes:
    lines = [
        json.dumps({"id": artifact_id, "vector": list(vector.values)})
        for artifact_id, vector in rows
    ]
    return ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")


def persist_index(index: EvidenceIndex, directory: str | Path) -> None:
    """Write manifest + one checksummed file per partition.

    Output bytes depend only on the index contents, never on wall time.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    partition_meta = {}
    for modality in MODALITIES:
        payload = _partition_bytes(index.partitions.get(modality, ()))
        filename = _partition_filename(modality)
        (directory / filename).write_bytes(payload)
        partition_meta[modality] = {
            "file": filename,
            "sha256": hashlib.sha256(payload).hexdigest(),
            "count": len(index.partitions.get(modality, ())),
        }
    manifest_payload = {
        "format_version": index.manifest.format_version,
        "dim": index.manifest.dim,
        "embedder_id": index.manifest.embedder_id,
        "build_seed": index.manifest.build_seed,
        "corpus_hashes": index.manifest.hashes(),
        "partitions": partition_meta,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest_payload, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_index(directory: str | Path) -> EvidenceIndex:
    """Load a persisted index, verifying format version and checksums."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CorruptPartition(f"no manifest.json under {directory}")
    manifest_payload = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = manifest_payload.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(
            f"index format {version!r} unsupported (expected {FORMAT_VERSION!r})"
        )
    dim = int(manifest_payload["dim"])
    partitions: dict[str, tuple[tuple[str, EmbeddingVector], ...]] = {}
    for modality in MODALITIES:
        meta = manifest_payload["partitions"][modality]
        path = directory / meta["file"]
        if not path.exists():
            raise CorruptPartition(f"missing partition file {meta['file']}")
        payload = path.read_bytes()
        digest = hashlib.sha256(payload).hexdigest()
        if digest != meta["sha256"]:
            raise CorruptPartition(
                f"checksum mismatch for {meta['file']}: "
                f"expected {meta['sha256'][:12]}, got {digest[:12]}"
            )
        rows = []
        for line in payload.decode("utf-8").splitlines():
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                vector = EmbeddingVector(values=tuple(float(x) for x in obj["vector"]))
                artifact_id = obj["id"]
            except (ValueError, KeyError, TypeError) as exc:
                raise CorruptPartition(
                    f"unparseable row in {meta['file']}: {exc}"
                ) from exc
            if vector.dim != dim:
                raise CorruptPartition(
                    f"vector dim {vector.dim} != manifest dim {dim} "
                    f"in {meta['file']}"
                )
            rows.append((artifact_id, vector))
        if len(rows) != meta["count"]:
            raise CorruptPartition(
                f"partition {meta['file']} has {len(rows)} rows, "
                f"manifest says {meta['count']}"
            )
        partitions[modality] = tuple(rows)
    manifest = IndexManifest(
        dim=dim,
        embedder_id=manifest_payload["embedder_id"],
        corpus_hashes=tuple(sorted(manifest_payload["corpus_hashes"].items())),
        build_seed=int(manifest_payload["build_seed"]),
        format_version=version,
    )
    return EvidenceIndex(partitions=partitions, manifest=manifest)
