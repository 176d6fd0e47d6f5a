"""Shared synthetic fixtures: vocabulary, rules, cases, guidelines, engines.

All generators are seeded and pure, so every test run sees identical
data. Records are produced as dicts first so the same fixtures can feed
both the library ingestion APIs and the CLI file-based flows.
"""
from __future__ import annotations

import json
import random

import pytest

from caseguide.concepts import Category, Vocabulary, annotate_case
from caseguide.config import EngineConfig
from caseguide.corpus import (
    CaseRepository,
    ingest_cases,
    ingest_guidelines,
)
from caseguide.embedding import HashedNgramProvider
from caseguide.engine import EvidenceEngine
from caseguide.graph import (
    EntityNode,
    KnowledgeGraph,
    RelationEdge,
    RelationRuleSet,
    RelationType,
    TextUnit,
)
from caseguide.corpus import SourceSpan

VOCAB_ROWS = [
    ("myocardial infarction", "C_MI", "diagnosis", ""),
    ("heart attack", "C_MI", "diagnosis", "myocardial infarction"),
    ("acute myocardial infarction", "C_AMI", "diagnosis", ""),
    ("heart failure", "C_HF", "diagnosis", ""),
    ("renal failure", "C_RF", "diagnosis", ""),
    ("chronic kidney disease", "C_CKD", "diagnosis", ""),
    ("hypertension", "C_HTN", "diagnosis", ""),
    ("type 2 diabetes", "C_T2D", "diagnosis", ""),
    ("pneumonia", "C_PNA", "diagnosis", ""),
    ("asthma", "C_ASTHMA", "diagnosis", ""),
    ("sepsis", "C_SEPSIS", "diagnosis", ""),
    ("chest pain", "C_CP", "symptom", ""),
    ("shortness of breath", "C_SOB", "symptom", ""),
    ("fever", "C_FEVER", "symptom", ""),
    ("cough", "C_COUGH", "symptom", ""),
    ("fatigue", "C_FATIGUE", "symptom", ""),
    ("edema", "C_EDEMA", "symptom", ""),
    ("aspirin", "C_ASA", "medication", ""),
    ("metformin", "C_MET", "medication", ""),
    ("lisinopril", "C_LIS", "medication", ""),
    ("furosemide", "C_FUR", "medication", ""),
    ("amoxicillin", "C_AMOX", "medication", ""),
    ("ibuprofen", "C_IBU", "medication", ""),
    ("warfarin", "C_WAR", "medication", ""),
    ("dialysis", "C_DIAL", "procedure", ""),
    ("intubation", "C_INTUB", "procedure", ""),
    ("echocardiogram", "C_ECHO", "procedure", ""),
    ("blood transfusion", "C_TRANS", "procedure", ""),
    ("smoking", "C_SMOKE", "other", ""),
]

VOCAB_TSV = "\n".join(
    "\t".join(col for col in row if col) for row in VOCAB_ROWS
) + "\n"

TRIGGER_RULES_TSV = (
    "contraindicated in\tcontraindication\tmedication\tdiagnosis\n"
    "is indicated for\tindication\tmedication\tdiagnosis\n"
    "requires monitoring of\tmonitoring\tmedication\tdiagnosis\n"
    "escalate to\tescalation\tdiagnosis\tprocedure\n"
)

QUALIFIER_RULES_TSV = (
    "(?:under|below) \\d+ years\tage_limit\n"
    "over \\d+ years\tage_limit\n"
)

DIAGNOSES = [
    "myocardial infarction", "heart failure", "renal failure",
    "chronic kidney disease", "hypertension", "type 2 diabetes",
    "pneumonia", "asthma", "sepsis",
]
SYMPTOMS = ["chest pain", "shortness of breath", "fever", "cough",
            "fatigue", "edema"]
MEDICATIONS = ["aspirin", "metformin", "lisinopril", "furosemide",
               "amoxicillin", "ibuprofen", "warfarin"]
PROCEDURES = ["dialysis", "intubation", "echocardiogram", "blood transfusion"]

_FILLER = [
    "stable overnight", "tolerating oral intake", "family at bedside",
    "no acute distress", "improving slowly", "reviewed prior records",
    "labs pending", "awaiting imaging", "sleep is poor", "appetite reduced",
]


@pytest.fixture(scope="session")
def vocabulary() -> Vocabulary:
    return Vocabulary.from_lines(VOCAB_TSV.splitlines())


@pytest.fixture(scope="session")
def rules() -> RelationRuleSet:
    return RelationRuleSet.from_lines(
        TRIGGER_RULES_TSV.splitlines(), QUALIFIER_RULES_TSV.splitlines()
    )


def synth_case_record(rng: random.Random, case_id: str) -> dict:
    diagnosis = rng.choice(DIAGNOSES)
    second = rng.choice(DIAGNOSES)
    symptom_a, symptom_b = rng.sample(SYMPTOMS, 2)
    medication = rng.choice(MEDICATIONS)
    procedure = rng.choice(PROCEDURES)
    return {
        "case_id": case_id,
        "source": rng.choice(["mimic", "synthea"]),
        "s": (
            f"Patient reports {symptom_a} and {symptom_b} for "
            f"{rng.randint(1, 14)} days. {rng.choice(_FILLER)}."
        ),
        "o": (
            f"BP {rng.randint(90, 180)}/{rng.randint(50, 110)}, "
            f"HR {rng.randint(50, 130)}. {rng.choice(_FILLER)}."
        ),
        "a": (
            f"Findings consistent with {diagnosis}; history of {second}. "
            f"{rng.choice(_FILLER)}."
        ),
        "p": (
            f"Start {medication}. Consider {procedure} if worsening. "
            f"Reassess in {rng.randint(1, 7)} days."
        ),
    }


def synth_case_lines(count: int, seed: int = 7, prefix: str = "case") -> list[str]:
    rng = random.Random(seed)
    return [
        json.dumps(synth_case_record(rng, f"{prefix}{i:04d}"))
        for i in range(count)
    ]


def synth_repo(count: int, seed: int = 7, vocabulary: Vocabulary | None = None,
               prefix: str = "case") -> CaseRepository:
    repo = ingest_cases(synth_case_lines(count, seed, prefix))
    if vocabulary is not None:
        repo.cases = {
            cid: annotate_case(case, vocabulary)
            for cid, case in repo.cases.items()
        }
    return repo


def _paragraph(rng: random.Random) -> str:
    sentences = []
    for _ in range(rng.randint(2, 4)):
        kind = rng.random()
        if kind < 0.30:
            sentences.append(
                f"{rng.choice(MEDICATIONS).capitalize()} is indicated for "
                f"{rng.choice(DIAGNOSES)}."
            )
        elif kind < 0.45:
            sentences.append(
                f"{rng.choice(MEDICATIONS).capitalize()} is contraindicated in "
                f"{rng.choice(DIAGNOSES)}."
            )
        elif kind < 0.6:
            sentences.append(
                f"Patients with {rng.choice(DIAGNOSES)} often present with "
                f"{rng.choice(SYMPTOMS)}."
            )
        else:
            sentences.append(
                f"Assess {rng.choice(SYMPTOMS)} before considering "
                f"{rng.choice(PROCEDURES)}."
            )
    return " ".join(sentences)


def synth_guideline_record(rng: random.Random, doc_id: str) -> dict:
    """A two-level document: depth-0 sections each holding leaf subsections."""
    body_parts: list[str] = []
    outline: list[list] = []
    pos = 0
    for i in range(rng.randint(2, 3)):
        section_start = pos
        children = []
        for j in range(rng.randint(1, 3)):
            text = _paragraph(rng) + "\n"
            children.append([f"Topic {i}.{j}", 1, pos, pos + len(text)])
            body_parts.append(text)
            pos += len(text)
        outline.append([f"Topic {i}", 0, section_start, pos])
        outline.extend(children)
    return {
        "doc_id": doc_id,
        "authority": rng.choice(["WHO", "NICE"]),
        "title": f"Guideline {doc_id}",
        "body": "".join(body_parts),
        "outline": outline,
    }


def synth_guideline_lines(count: int, seed: int = 11) -> list[str]:
    rng = random.Random(seed)
    return [
        json.dumps(synth_guideline_record(rng, f"doc{i:03d}"))
        for i in range(count)
    ]


# --- planted trigger fixture ----------------------------------------------------

PLANTED_SECTIONS = [
    "Aspirin is contraindicated in renal failure.",
    "Warfarin is contraindicated in sepsis.",
    "Metformin is indicated for type 2 diabetes.",
    "Furosemide is indicated for heart failure.",
    "Warfarin requires monitoring of hypertension.",
    "For sepsis escalate to intubation without delay.",
    "Keep a regular review schedule for every admission.",
    "Discuss smoking at each visit.",
    "Document allergies clearly in the record.",
    "Provide written discharge advice to carers.",
]

PLANTED_EDGES = {
    ("C_ASA", "C_RF", "contraindication"),
    ("C_WAR", "C_SEPSIS", "contraindication"),
    ("C_MET", "C_T2D", "indication"),
    ("C_FUR", "C_HF", "indication"),
    ("C_WAR", "C_HTN", "monitoring"),
    ("C_SEPSIS", "C_INTUB", "escalation"),
}


def planted_guideline_record() -> dict:
    body_parts = []
    outline = []
    pos = 0
    for i, sentence in enumerate(PLANTED_SECTIONS):
        text = sentence + "\n"
        outline.append([f"Rule {i}", 0, pos, pos + len(text)])
        body_parts.append(text)
        pos += len(text)
    return {
        "doc_id": "planted",
        "authority": "WHO",
        "title": "Planted relations",
        "body": "".join(body_parts),
        "outline": outline,
    }


# --- direct graph builders --------------------------------------------------------

def make_unit(unit_id: str, text: str = "unit text") -> TextUnit:
    return TextUnit(
        unit_id=unit_id,
        doc_id="synthetic",
        text=text,
        span=SourceSpan(doc_id="synthetic", section_title="s",
                        char_start=0, char_end=len(text)),
        section_path=("s",),
    )


def make_graph(node_ids: list[str], edge_pairs: list[tuple[str, str]],
               relation: RelationType = RelationType.CO_OCCURS) -> KnowledgeGraph:
    """Hand-built graph: one shared unit per node, one unit per edge."""
    units = {}
    nodes = {}
    for node_id in node_ids:
        unit = make_unit(f"u-{node_id}", f"unit for {node_id}")
        units[unit.unit_id] = unit
        nodes[node_id] = EntityNode(
            entity_id=node_id,
            concept_id=node_id,
            category=Category.DIAGNOSIS,
            description=f"{node_id} (diagnosis)",
            supporting_units=frozenset({unit.unit_id}),
        )
    edges = []
    for a, b in edge_pairs:
        unit = make_unit(f"u-{a}-{b}", f"unit for {a}/{b}")
        units[unit.unit_id] = unit
        nodes[a] = EntityNode(
            entity_id=a, concept_id=a, category=Category.DIAGNOSIS,
            description=nodes[a].description,
            supporting_units=nodes[a].supporting_units | {unit.unit_id},
        )
        nodes[b] = EntityNode(
            entity_id=b, concept_id=b, category=Category.DIAGNOSIS,
            description=nodes[b].description,
            supporting_units=nodes[b].supporting_units | {unit.unit_id},
        )
        edges.append(RelationEdge(
            edge_id=f"{a}|{relation.value}|{b}",
            src=a, dst=b, relation=relation,
            qualifiers=(),
            supporting_units=frozenset({unit.unit_id}),
        ))
    graph = KnowledgeGraph(nodes=nodes, edges=tuple(edges), unit_index=units)
    graph.validate()
    return graph


def clique_bridge_graph() -> KnowledgeGraph:
    """Two 4-cliques (a0..a3, b0..b3) joined by one bridge edge a3-b0."""
    left = [f"a{i}" for i in range(4)]
    right = [f"b{i}" for i in range(4)]
    edges = []
    for group in (left, right):
        for i, u in enumerate(group):
            for v in group[i + 1:]:
                edges.append((u, v))
    edges.append(("a3", "b0"))
    return make_graph(left + right, edges)


# --- evaluation fixture ---------------------------------------------------------------

def eval_fixture(n_items: int, seed: int = 23):
    """Eval items plus a repository where each item has an exact-twin case.

    The item's own case_id is present in the repository too (so
    self-exclusion is exercised); its twin shares S/O/A and carries the
    reference plan under a different id. Filler cases pad the pool.
    """
    rng = random.Random(seed)
    repo_lines = []
    item_lines = []
    for i in range(n_items):
        base = synth_case_record(rng, f"ev{i:03d}")
        twin = dict(base)
        twin["case_id"] = f"dup{i:03d}"
        repo_lines.append(json.dumps(base))
        repo_lines.append(json.dumps(twin))
        item_lines.append(json.dumps({
            "case_id": base["case_id"],
            "s": base["s"],
            "o": base["o"],
            "a": base["a"],
            "reference_plan": base["p"],
        }))
    for i in range(n_items):
        repo_lines.append(json.dumps(synth_case_record(rng, f"fill{i:03d}")))
    return item_lines, repo_lines


# --- engine fixtures ----------------------------------------------------------------------

def build_engine(
    case_lines: list[str],
    guideline_lines: list[str],
    *,
    seed: int = 0,
    config: EngineConfig | None = None,
) -> EvidenceEngine:
    vocabulary = Vocabulary.from_lines(VOCAB_TSV.splitlines())
    rule_set = RelationRuleSet.from_lines(
        TRIGGER_RULES_TSV.splitlines(), QUALIFIER_RULES_TSV.splitlines()
    )
    repo = ingest_cases(case_lines)
    corpus = ingest_guidelines(guideline_lines)
    return EvidenceEngine.from_stores(
        repo, corpus, vocabulary, rule_set,
        vocab_text=VOCAB_TSV, config=config, seed=seed,
    )


@pytest.fixture(scope="session")
def small_engine() -> EvidenceEngine:
    config = EngineConfig(max_unit_chars=400, min_unit_chars=40)
    return build_engine(
        synth_case_lines(12, seed=5),
        synth_guideline_lines(3, seed=9),
        config=config,
    )


@pytest.fixture(scope="session")
def provider() -> HashedNgramProvider:
    return HashedNgramProvider()
