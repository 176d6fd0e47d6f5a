"""Text-overlap metrics and the note-completion / MCQ evaluation protocols.

Tokenization is deliberately minimal so numbers are reproducible:
lowercase, split on whitespace, strip punctuation from token edges.
ROUGE-N uses clipped n-gram overlap, ROUGE-L is LCS-based, and BLEU is
the clipped n-gram geometric mean with brevity penalty and add-one
smoothing on zero counts for n >= 2.

The protocols drive the full retrieval + prompt pipeline with a pluggable
LLM client (deterministic mocks by default) and report per-item rows plus
means, including the four ablation rows baseline / +patients /
+guidelines / +both.
"""
from __future__ import annotations

import json
import logging
import math
import re
import string
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import SoapCase, Source, parse_soap
from .engine import EvidenceEngine
from .errors import MalformedRecord
from .retrieval import EvidenceToggles, HybridWeights
from .service import LlmClient, build_prompt_package

logger = logging.getLogger(__name__)

PLAN_INSTRUCTION = "Produce the Plan section for the locked case."

METRIC_KEYS = (
    "bleu",
    "rouge1_precision", "rouge1_recall", "rouge1_f1",
    "rouge2_precision", "rouge2_recall", "rouge2_f1",
    "rougeL_precision", "rougeL_recall", "rougeL_f1",
)

ABLATION_ROWS: tuple[tuple[str, EvidenceToggles], ...] = (
    ("baseline", EvidenceToggles(use_patients=False, use_guidelines=False)),
    ("+patients", EvidenceToggles(use_patients=True, use_guidelines=False)),
    ("+guidelines", EvidenceToggles(use_patients=False, use_guidelines=True)),
    ("+both", EvidenceToggles(use_patients=True, use_guidelines=True)),
)

_EDGE_PUNCT = string.punctuation


def tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(_EDGE_PUNCT)
        if token:
            tokens.append(token)
    return tokens


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(
        tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1)
    )


def _prf(overlap: int, candidate_total: int, reference_total: int) -> dict[str, float]:
    precision = overlap / candidate_total if candidate_total else 0.0
    recall = overlap / reference_total if reference_total else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if precision + recall > 0 else 0.0
    )
    return {"precision": precision, "recall": recall, "f1": f1}


def rouge_n(candidate: str, reference: str, n: int) -> dict[str, float]:
    """Clipped n-gram overlap; empty reference scores all zeros."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _ngram_counts(tokenize(candidate), n)
    ref = _ngram_counts(tokenize(reference), n)
    overlap = sum(min(count, ref[gram]) for gram, count in cand.items())
    return _prf(overlap, sum(cand.values()), sum(ref.values()))


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(candidate: str, reference: str) -> dict[str, float]:
    """Longest-common-subsequence precision/recall/F1 over tokens."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    lcs = _lcs_length(cand, ref)
    return _prf(lcs, len(cand), len(ref))


def bleu(candidate: str, references: Sequence[str] | str, max_n: int = 4) -> float:
    """Corpus-style BLEU for a single candidate.

    Clipped n-gram precisions up to max_n (bounded by candidate length),
    geometric mean with uniform weights, brevity penalty against the
    closest reference length (ties toward the shorter reference).
    Zero-count precisions for n >= 2 smooth to (m+1)/(t+1); a zero
    unigram precision, or an empty candidate, scores 0.
    """
    if isinstance(references, str):
        references = [references]
    cand = tokenize(candidate)
    refs = [tokenize(r) for r in references]
    if not cand or not refs:
        return 0.0
    log_sum = 0.0
    orders = list(range(1, min(max_n, len(cand)) + 1))
    for n in orders:
        cand_counts = _ngram_counts(cand, n)
        max_ref: Counter = Counter()
        for ref in refs:
            ref_counts = _ngram_counts(ref, n)
            for gram, count in ref_counts.items():
                if count > max_ref[gram]:
                    max_ref[gram] = count
        matches = sum(
            min(count, max_ref[gram]) for gram, count in cand_counts.items()
        )
        total = sum(cand_counts.values())
        if matches == 0:
            if n == 1:
                return 0.0
            precision = (matches + 1.0) / (total + 1.0)
        else:
            precision = matches / total
        log_sum += math.log(precision)
    geometric_mean = math.exp(log_sum / len(orders))
    cand_len = len(cand)
    ref_len = min(
        (len(r) for r in refs),
        key=lambda rl: (abs(rl - cand_len), rl),
    )
    brevity = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * geometric_mean


def generation_metrics(candidate: str, reference: str) -> dict[str, float]:
    r1 = rouge_n(candidate, reference, 1)
    r2 = rouge_n(candidate, reference, 2)
    rl = rouge_l(candidate, reference)
    return {
        "bleu": bleu(candidate, reference),
        "rouge1_precision": r1["precision"],
        "rouge1_recall": r1["recall"],
        "rouge1_f1": r1["f1"],
        "rouge2_precision": r2["precision"],
        "rouge2_recall": r2["recall"],
        "rouge2_f1": r2["f1"],
        "rougeL_precision": rl["precision"],
        "rougeL_recall": rl["recall"],
        "rougeL_f1": rl["f1"],
    }


# --- evaluation items -------------------------------------------------------------

@dataclass(frozen=True)
class NoteCompletionItem:
    case_id: str
    subjective: str
    objective: str
    assessment: str
    reference_plan: str

    def __post_init__(self) -> None:
        if not self.reference_plan.strip():
            raise ValueError("reference_plan must be non-empty")

    def query_case(self) -> SoapCase:
        return SoapCase(
            case_id=self.case_id,
            source=Source.SYNTHETIC,
            subjective=self.subjective,
            objective=self.objective,
            assessment=self.assessment,
            plan="",
        )


@dataclass(frozen=True)
class McqItem:
    item_id: str
    stem: str
    options: tuple[str, ...]
    answer_index: int

    def __post_init__(self) -> None:
        if len(self.options) < 2:
            raise ValueError("MCQ items need at least two options")
        if not (0 <= self.answer_index < len(self.options)):
            raise ValueError("answer_index out of range")


def load_note_items(lines: Iterable[str]) -> list[NoteCompletionItem]:
    items = []
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            items.append(NoteCompletionItem(
                case_id=obj["case_id"],
                subjective=obj.get("s", ""),
                objective=obj.get("o", ""),
                assessment=obj.get("a", ""),
                reference_plan=obj["reference_plan"],
            ))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(line_number, str(exc)) from exc
    return items


def load_mcq_items(lines: Iterable[str]) -> list[McqItem]:
    items = []
    for line_number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            items.append(McqItem(
                item_id=obj["item_id"],
                stem=obj["stem"],
                options=tuple(obj["options"]),
                answer_index=int(obj["answer_index"]),
            ))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(line_number, str(exc)) from exc
    return items


# --- note completion -----------------------------------------------------------------

@dataclass(frozen=True)
class NoteCompletionResult:
    rows: tuple[dict, ...]
    means: dict[str, float]
    aborted_after: str | None = None  # case_id of last scored item on abort


def _mean(rows: Sequence[Mapping[str, float]], key: str) -> float:
    return sum(row[key] for row in rows) / len(rows) if rows else 0.0


def run_note_completion(
    items: Sequence[NoteCompletionItem],
    engine: EvidenceEngine,
    client: LlmClient,
    toggles: EvidenceToggles,
    *,
    k_patients: int | None = None,
    k_communities: int | None = None,
    weights: HybridWeights | None = None,
) -> NoteCompletionResult:
    """Generate a plan per item via the full pipeline and score it.

    The item's own case_id is excluded from retrieval (self-exclusion),
    so planted near-duplicates rather than the item itself supply
    evidence. Client failures abort the run; rows scored so far are
    returned flagged.
    """
    rows: list[dict] = []
    for item in items:
        query = item.query_case()
        analysis = engine.analyze(query)
        evidence = engine.retrieve(
            analysis, toggles, k_patients=k_patients,
            k_communities=k_communities, weights=weights,
        )
        package = build_prompt_package(
            engine, analysis.case, evidence, PLAN_INSTRUCTION
        )
        try:
            candidate = client.complete(package.render(), {})
        except Exception:
            logger.exception("LLM client failed on item %s", item.case_id)
            return NoteCompletionResult(
                rows=tuple(rows),
                means={key: _mean(rows, key) for key in METRIC_KEYS},
                aborted_after=rows[-1]["case_id"] if rows else None,
            )
        metrics = generation_metrics(candidate, item.reference_plan)
        rows.append({
            "case_id": item.case_id,
            "candidate": candidate,
            "retrieved_patients": [h.case_id for h in evidence.patient_hits],
            **metrics,
        })
    return NoteCompletionResult(
        rows=tuple(rows),
        means={key: _mean(rows, key) for key in METRIC_KEYS},
    )


def run_ablation_grid(
    items: Sequence[NoteCompletionItem],
    engine: EvidenceEngine,
    client: LlmClient,
    *,
    k_patients: int | None = None,
    k_communities: int | None = None,
) -> dict[str, dict[str, float]]:
    """Mean metrics for the four toggle combinations."""
    grid = {}
    for name, toggles in ABLATION_ROWS:
        result = run_note_completion(
            items, engine, client, toggles,
            k_patients=k_patients, k_communities=k_communities,
        )
        grid[name] = result.means
    return grid


# --- multiple choice -------------------------------------------------------------------

_LETTERS = string.ascii_uppercase


def format_mcq_question(item: McqItem) -> str:
    lines = [item.stem, ""]
    for i, option in enumerate(item.options):
        lines.append(f"{_LETTERS[i]}. {option}")
    lines.append("")
    lines.append("Answer with the letter of the correct option.")
    return "\n".join(lines)


def parse_option_letter(output: str, option_count: int) -> int | None:
    """First standalone option letter in the output, or None."""
    allowed = _LETTERS[:option_count]
    for match in re.finditer(r"\b([A-Za-z])\b", output):
        letter = match.group(1).upper()
        if letter in allowed:
            return allowed.index(letter)
    return None


@dataclass(frozen=True)
class McqResult:
    accuracy: float
    rows: tuple[dict, ...]


def run_mcq(
    items: Sequence[McqItem],
    engine: EvidenceEngine,
    client: LlmClient,
    toggles: EvidenceToggles,
    *,
    k_patients: int | None = None,
    k_communities: int | None = None,
    weights: HybridWeights | None = None,
) -> McqResult:
    """Accuracy over lettered multiple-choice items.

    The stem runs through the same retrieval pipeline as a free-text
    case; an unparseable client answer counts as wrong and is logged.
    """
    rows = []
    correct = 0
    for item in items:
        query = parse_soap(item.stem, case_id=f"mcq-{item.item_id}",
                           source="synthetic")
        analysis = engine.analyze(query)
        evidence = engine.retrieve(
            analysis, toggles, k_patients=k_patients,
            k_communities=k_communities, weights=weights,
        )
        package = build_prompt_package(
            engine, analysis.case, evidence, format_mcq_question(item)
        )
        output = client.complete(package.render(), {})
        parsed = parse_option_letter(output, len(item.options))
        if parsed is None:
            logger.warning(
                "unparseable MCQ answer for item %s: %r", item.item_id, output
            )
        is_correct = parsed == item.answer_index
        correct += int(is_correct)
        rows.append({
            "item_id": item.item_id,
            "output": output,
            "parsed_index": parsed,
            "correct": is_correct,
        })
    accuracy = correct / len(items) if items else 0.0
    return McqResult(accuracy=accuracy, rows=tuple(rows))


# --- lambda sweep -----------------------------------------------------------------------

DEFAULT_LAMBDA_GRID = tuple(round(0.1 * i, 1) for i in range(11))


@dataclass(frozen=True)
class SweepResult:
    best_lambda: float
    table: tuple[tuple[float, float], ...]  # (lambda, metric)
    metric_name: str


def tune_lambda(
    items: Sequence[NoteCompletionItem] | Sequence[McqItem],
    engine: EvidenceEngine,
    client: LlmClient,
    *,
    mode: str = "note",
    grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    toggles: EvidenceToggles | None = None,
    k_patients: int | None = None,
    k_communities: int | None = None,
) -> SweepResult:
    """Sweep the mixing weight over a grid and return the argmax.

    Note mode scores mean ROUGE-L F1; MCQ mode scores accuracy. Ties
    resolve toward the smaller lambda. The full sweep table is returned
    for reporting.
    """
    if mode not in ("note", "mcq"):
        raise ValueError("mode must be 'note' or 'mcq'")
    toggles = toggles or EvidenceToggles(use_patients=True, use_guidelines=False)
    base = engine.config.weights()
    table = []
    for lambda_ in grid:
        weights = base.with_lambda(lambda_)
        if mode == "note":
            result = run_note_completion(
                items, engine, client, toggles,  # type: ignore[arg-type]
                k_patients=k_patients, k_communities=k_communities,
                weights=weights,
            )
            metric = result.means["rougeL_f1"]
        else:
            metric = run_mcq(
                items, engine, client, toggles,  # type: ignore[arg-type]
                k_patients=k_patients, k_communities=k_communities,
                weights=weights,
            ).accuracy
        table.append((float(lambda_), metric))
    best_lambda = min(table, key=lambda row: (-row[1], row[0]))[0]
    return SweepResult(
        best_lambda=best_lambda,
        table=tuple(table),
        metric_name="rougeL_f1" if mode == "note" else "accuracy",
    )
