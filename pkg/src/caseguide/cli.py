"""Operator entry points: ingest, index, query, eval, serve.

Exit codes: 0 success, 1 generic failure, 2 bad input, 3 external
dependency unavailable. Configuration precedence is flags > environment
(CASEGUIDE_*) > config file > defaults.
"""
from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from .concepts import Vocabulary, annotate_case
from .config import EngineConfig, load_config
from .corpus import ingest_cases, ingest_guidelines, parse_soap
from .embedding import HashedNgramProvider, RemoteEmbeddingProvider
from .engine import STORE_FILES, EvidenceEngine
from .errors import CaseguideError, ExternalServiceError, InputError
from .graph import RelationRuleSet, SegmentConfig, extract_graph, segment_corpus
from .retrieval import EvidenceToggles
from .service import (
    CopyTopPatientPlanClient,
    MockLlmClient,
    RemoteLlmClient,
    StaticClient,
    render_evidence,
)

EXIT_GENERIC = 1
EXIT_INPUT = 2
EXIT_EXTERNAL = 3


def _fail(exc: CaseguideError) -> None:
    click.echo(f"error [{exc.code}]: {exc.message}", err=True)
    if isinstance(exc, ExternalServiceError):
        sys.exit(EXIT_EXTERNAL)
    if isinstance(exc, InputError):
        sys.exit(EXIT_INPUT)
    sys.exit(EXIT_GENERIC)


def _provider_from_flag(embedder: str, config: EngineConfig):
    if embedder == "default":
        return HashedNgramProvider(dim=config.embedding_dim)
    return RemoteEmbeddingProvider(embedder, dim=config.embedding_dim)


def _client_from_flag(llm: str, config: EngineConfig):
    if llm == "mock":
        return MockLlmClient()
    if llm == "copy-plan":
        return CopyTopPatientPlanClient()
    if llm.startswith("static:"):
        return StaticClient(llm[len("static:"):])
    endpoint = llm if llm != "remote" else config.llm_endpoint
    if not endpoint:
        raise InputError("no LLM endpoint configured")
    return RemoteLlmClient(endpoint, api_key=os.environ.get(config.api_key_env))


@click.group()
def main() -> None:
    """Dual-evidence clinical retrieval over guidelines and patient cases."""


@main.command()
@click.option("--cases", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--guidelines", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--vocab", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rules", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--qualifiers", type=click.Path(exists=True, dir_okay=False),
              help="Optional qualifier-pattern rule file.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def ingest(cases, guidelines, vocab, rules, qualifiers, out, config_path) -> None:
    """Parse and validate corpora, extract the graph, write store files."""
    try:
        config = load_config(config_path)
        repo = ingest_cases(
            Path(cases).read_text(encoding="utf-8").splitlines()
        )
        corpus = ingest_guidelines(
            Path(guidelines).read_text(encoding="utf-8").splitlines()
        )
        vocab_text = Path(vocab).read_text(encoding="utf-8")
        vocabulary = Vocabulary.from_lines(vocab_text.splitlines())
        rule_set = RelationRuleSet.from_lines(
            Path(rules).read_text(encoding="utf-8").splitlines(),
            Path(qualifiers).read_text(encoding="utf-8").splitlines()
            if qualifiers else (),
        )
        annotated = {
            case.case_id: annotate_case(case, vocabulary) for case in repo
        }
        repo.cases = annotated
        units = segment_corpus(corpus, SegmentConfig(
            max_unit_chars=config.max_unit_chars,
            min_unit_chars=config.min_unit_chars,
        ))
        graph = extract_graph(units, vocabulary, rule_set)

        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "cases.jsonl").write_text(repo.to_jsonl(), encoding="utf-8")
        (out_dir / "guidelines.jsonl").write_text(
            corpus.to_jsonl(), encoding="utf-8"
        )
        (out_dir / "vocab.tsv").write_text(vocab_text, encoding="utf-8")
        (out_dir / "graph.json").write_text(graph.to_json(), encoding="utf-8")
        click.echo(
            f"ingested {len(repo)} cases, {len(corpus)} guidelines, "
            f"{len(graph.unit_index)} units, {len(graph.nodes)} entities, "
            f"{len(graph.edges)} relations -> {out_dir}"
        )
    except CaseguideError as exc:
        _fail(exc)


@main.command()
@click.option("--store", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--embedder", default="default", show_default=True,
              help="'default' or an HTTP embedding endpoint URL.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def index(store, embedder, seed, out, config_path) -> None:
    """Build communities, summaries, and the embedding index from a store."""
    try:
        config = load_config(config_path)
        store_dir = Path(store)
        for name in STORE_FILES:
            if not (store_dir / name).exists():
                raise InputError(f"store is missing {name}")
        repo = ingest_cases(
            (store_dir / "cases.jsonl").read_text(encoding="utf-8").splitlines()
        )
        corpus = ingest_guidelines(
            (store_dir / "guidelines.jsonl").read_text(encoding="utf-8").splitlines()
        )
        vocab_text = (store_dir / "vocab.tsv").read_text(encoding="utf-8")
        vocabulary = Vocabulary.from_lines(vocab_text.splitlines())
        # Segmentation and extraction are deterministic, so the engine
        # rebuilds the graph from the same inputs; rules are already baked
        # into graph.json, which load() uses directly.
        from .graph import KnowledgeGraph

        graph = KnowledgeGraph.from_json(
            (store_dir / "graph.json").read_text(encoding="utf-8")
        )
        provider = _provider_from_flag(embedder, config)
        from .communities import CommunityAssignment, detect_communities, summarize_all
        from .index import build_index

        if graph.nodes:
            assignment = detect_communities(graph, seed=seed)
            summaries = summarize_all(
                graph, assignment, char_budget=config.summary_char_budget
            )
        else:
            assignment = CommunityAssignment(community_of={}, communities={})
            summaries = {}
        evidence_index = build_index(repo, graph, summaries, provider, seed=seed)
        engine = EvidenceEngine(
            repo=repo, corpus=corpus, vocabulary=vocabulary,
            vocab_text=vocab_text, graph=graph, assignment=assignment,
            summaries=summaries, index=evidence_index, provider=provider,
            config=config,
        )
        engine.save(out)
        counts = {m: len(evidence_index.partitions[m]) for m in evidence_index.partitions}
        click.echo(f"index written to {out}: {counts}")
    except CaseguideError as exc:
        _fail(exc)


def _load_engine(index_dir: str, config: EngineConfig) -> EvidenceEngine:
    return EvidenceEngine.load(index_dir, config=config)


@main.command()
@click.option("--index", "index_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--case", "case_file", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="File with raw SOAP-labeled case text.")
@click.option("--patients/--no-patients", default=True, show_default=True)
@click.option("--guidelines/--no-guidelines", default=True, show_default=True)
@click.option("--k-patients", type=int, default=None)
@click.option("--k-communities", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, default=False)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def query(index_dir, case_file, patients, guidelines, k_patients,
          k_communities, as_json, config_path) -> None:
    """One-shot retrieval for a case file; prints the evidence set."""
    try:
        config = load_config(config_path)
        engine = _load_engine(index_dir, config)
        raw = Path(case_file).read_text(encoding="utf-8")
        case = parse_soap(raw, case_id="query", source="synthetic")
        analysis = engine.analyze(case)
        evidence = engine.retrieve(
            analysis,
            EvidenceToggles(use_patients=patients, use_guidelines=guidelines),
            k_patients=k_patients,
            k_communities=k_communities,
        )
        payload = render_evidence(engine, analysis, evidence)
        if as_json:
            click.echo(json.dumps(payload, ensure_ascii=False, sort_keys=True))
            return
        click.echo(f"query concepts: {sorted(analysis.concepts)}")
        click.echo(f"patient hits ({len(payload['patient_hits'])}):")
        for hit in payload["patient_hits"]:
            matched = ", ".join(
                m["concept_id"] for m in hit["matched_concepts"]
            ) or "-"
            click.echo(
                f"  {hit['case_id']}: hybrid={hit['hybrid']:.4f} "
                f"kw={hit['kw']:.4f} sem={hit['sem']:.4f} matched=[{matched}]"
            )
        click.echo(f"guideline hits ({len(payload['guideline_hits'])}):")
        for hit in payload["guideline_hits"]:
            click.echo(
                f"  community {hit['community_id']}: score={hit['score']:.4f} "
                f"support_units={len(hit['support'])} "
                f"relations={len(hit['relations'])}"
            )
    except CaseguideError as exc:
        _fail(exc)


@main.command("eval")
@click.option("--index", "index_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--items", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["note", "mcq", "sweep"]),
              default="note", show_default=True)
@click.option("--llm", default="mock", show_default=True,
              help="mock | copy-plan | static:<text> | <endpoint URL>")
@click.option("--patients/--no-patients", default=True, show_default=True)
@click.option("--guidelines/--no-guidelines", default=True, show_default=True)
@click.option("--ablation", is_flag=True, default=False,
              help="Note mode: also run the four toggle combinations.")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def eval_command(index_dir, items, mode, llm, patients, guidelines,
                 ablation, out, config_path) -> None:
    """Run an evaluation protocol and write results, table, and figures."""
    from . import evaluation as ev
    from . import report

    try:
        config = load_config(config_path)
        engine = _load_engine(index_dir, config)
        client = _client_from_flag(llm, config)
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        lines = Path(items).read_text(encoding="utf-8").splitlines()
        toggles = EvidenceToggles(use_patients=patients, use_guidelines=guidelines)

        if mode == "note":
            note_items = ev.load_note_items(lines)
            result = ev.run_note_completion(note_items, engine, client, toggles)
            summary: dict = {"mode": "note", **result.means}
            if result.aborted_after is not None:
                summary["aborted_after"] = result.aborted_after
            report.write_results_jsonl(out_dir / "results.jsonl",
                                       result.rows, summary)
            table_rows = {"run": result.means}
            if ablation:
                grid = ev.run_ablation_grid(note_items, engine, client)
                table_rows = dict(grid)
                report.plot_ablation(grid, "rougeL_f1", out_dir / "ablation.png")
            (out_dir / "table.txt").write_text(
                report.format_table(table_rows, list(ev.METRIC_KEYS)),
                encoding="utf-8",
            )
            report.plot_score_distribution(
                [row["rougeL_f1"] for row in result.rows],
                "rougeL_f1", out_dir / "scores.png",
            )
            click.echo(f"note eval: mean rougeL_f1={result.means['rougeL_f1']:.4f}")
        elif mode == "mcq":
            mcq_items = ev.load_mcq_items(lines)
            result = ev.run_mcq(mcq_items, engine, client, toggles)
            report.write_results_jsonl(
                out_dir / "results.jsonl", result.rows,
                {"mode": "mcq", "accuracy": result.accuracy},
            )
            (out_dir / "table.txt").write_text(
                report.format_table({"run": {"accuracy": result.accuracy}},
                                    ["accuracy"]),
                encoding="utf-8",
            )
            click.echo(f"mcq eval: accuracy={result.accuracy:.4f}")
        else:
            note_items = ev.load_note_items(lines)
            sweep = ev.tune_lambda(note_items, engine, client, mode="note",
                                   toggles=toggles)
            rows = [
                {"lambda": lam, sweep.metric_name: value}
                for lam, value in sweep.table
            ]
            report.write_results_jsonl(
                out_dir / "results.jsonl", rows,
                {"mode": "sweep", "best_lambda": sweep.best_lambda},
            )
            report.plot_lambda_sweep(sweep.table, sweep.metric_name,
                                     out_dir / "sweep.png")
            (out_dir / "table.txt").write_text(
                report.format_table(
                    {f"lambda={lam:.1f}": {sweep.metric_name: value}
                     for lam, value in sweep.table},
                    [sweep.metric_name],
                ),
                encoding="utf-8",
            )
            click.echo(f"sweep: best lambda={sweep.best_lambda}")
    except CaseguideError as exc:
        _fail(exc)


@main.command()
@click.option("--index", "index_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--llm", default="mock", show_default=True)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
def serve(index_dir, host, port, llm, config_path) -> None:
    """Start the evidence HTTP service over a built index."""
    import uvicorn

    from .service import create_app

    try:
        config = load_config(config_path, index_dir=index_dir)
        engine = _load_engine(index_dir, config)
        client = _client_from_flag(llm, config)
        app = create_app(engine, llm_client=client, config=config)
    except CaseguideError as exc:
        _fail(exc)
        return
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
