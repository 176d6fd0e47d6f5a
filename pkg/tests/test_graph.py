import json
import random

import pytest

from caseguide.corpus import GuidelineDoc, Authority, OutlineEntry, ingest_guidelines
from caseguide.errors import EmptyDocument, UnknownUnitId
from caseguide.graph import (
    KnowledgeGraph,
    RelationRuleSet,
    RelationType,
    SegmentConfig,
    extract_graph,
    resolve_provenance,
    segment_corpus,
    segment_guideline,
)

from conftest import (
    PLANTED_EDGES,
    QUALIFIER_RULES_TSV,
    TRIGGER_RULES_TSV,
    planted_guideline_record,
    synth_guideline_lines,
)


def _doc(body, outline, doc_id="d1"):
    return GuidelineDoc(
        doc_id=doc_id, authority=Authority.WHO, title="T", body=body,
        outline=tuple(OutlineEntry(*row) for row in outline),
    )


class TestSegmentation:
    def test_short_section_is_one_unit(self):
        body = "x" * 80
        units = segment_guideline(
            _doc(body, [("Intro", 0, 0, 80)]),
            SegmentConfig(max_unit_chars=200, min_unit_chars=50),
        )
        assert len(units) == 1
        assert units[0].text == body
        assert units[0].section_path == ("Intro",)
        assert units[0].span.char_start == 0
        assert units[0].span.char_end == 80

    def test_long_section_splits_at_sentence_bounds_and_reconstructs(self):
        rng = random.Random(3)
        sentences = [
            "".join(rng.choice("abcdefg ") for _ in range(84)).strip() + "."
            for _ in range(5)
        ]
        body = " ".join(sentences)
        assert len(body) > 400
        config = SegmentConfig(max_unit_chars=200, min_unit_chars=50)
        units = segment_guideline(_doc(body, [("Sec", 0, 0, len(body))]), config)
        assert len(units) > 1
        # Reconstruct-and-compare oracle: concatenation is lossless.
        assert "".join(u.text for u in units) == body
        for u in units:
            assert len(u.text) <= 200
            assert u.text == body[u.span.char_start:u.span.char_end]

    def test_nested_sections_get_full_paths(self):
        body = "a" * 30 + "b" * 30 + "c" * 40
        outline = [
            ("Root", 0, 0, 100),
            ("Mid", 1, 0, 60),
            ("LeafA", 2, 0, 30),
            ("LeafB", 2, 30, 60),
            ("MidTwo", 1, 60, 100),
        ]
        units = segment_guideline(
            _doc(body, outline), SegmentConfig(max_unit_chars=200, min_unit_chars=10)
        )
        paths = {u.span.section_title: u.section_path for u in units}
        assert paths["LeafA"] == ("Root", "Mid", "LeafA")
        assert paths["LeafB"] == ("Root", "Mid", "LeafB")
        assert paths["MidTwo"] == ("Root", "MidTwo")
        for u in units:
            if u.section_path[-1].startswith("Leaf"):
                assert len(u.section_path) == 3

    def test_empty_body_raises(self):
        with pytest.raises(EmptyDocument):
            segment_guideline(_doc("", []), SegmentConfig(300, 100))

    def test_document_without_outline_uses_whole_body(self):
        units = segment_guideline(
            _doc("some guidance text", []),
            SegmentConfig(max_unit_chars=200, min_unit_chars=10),
        )
        assert len(units) == 1
        assert units[0].text == "some guidance text"
        assert units[0].section_path == ("T",)

    def test_oversized_sentence_hard_splits_at_cap(self):
        body = "x" * 500  # no sentence breaks at all
        units = segment_guideline(
            _doc(body, [("Sec", 0, 0, 500)]),
            SegmentConfig(max_unit_chars=200, min_unit_chars=50),
        )
        assert [len(u.text) for u in units] == [200, 200, 100]
        assert "".join(u.text for u in units) == body

    def test_leaf_concatenation_lossless_on_synthetic_corpus(self):
        corpus = ingest_guidelines(synth_guideline_lines(8, seed=19))
        config = SegmentConfig(max_unit_chars=300, min_unit_chars=40)
        units = segment_corpus(corpus, config)
        by_leaf: dict[tuple, list] = {}
        for u in units:
            by_leaf.setdefault(
                (u.doc_id, u.section_path, u.span.section_title), []
            ).append(u)
        for (doc_id, _path, title), leaf_units in by_leaf.items():
            doc = corpus.get(doc_id)
            entry = next(e for e in doc.outline if e.title == title)
            got = "".join(
                u.text for u in sorted(leaf_units, key=lambda u: u.span.char_start)
            )
            assert got == doc.body[entry.char_start:entry.char_end]

    def test_unit_ids_unique_across_corpus(self):
        corpus = ingest_guidelines(synth_guideline_lines(5, seed=29))
        units = segment_corpus(corpus, SegmentConfig(300, 40))
        ids = [u.unit_id for u in units]
        assert len(ids) == len(set(ids))


@pytest.fixture(scope="module")
def planted_units(vocabulary):
    corpus = ingest_guidelines([json.dumps(planted_guideline_record())])
    return segment_corpus(corpus, SegmentConfig(max_unit_chars=200, min_unit_chars=10))


@pytest.fixture(scope="module")
def planted_graph(planted_units, vocabulary, rules):
    return extract_graph(planted_units, vocabulary, rules)


class TestExtractGraph:
    def test_single_trigger_fires(self, vocabulary, rules):
        body = "Aspirin is contraindicated in renal failure."
        corpus = ingest_guidelines([json.dumps({
            "doc_id": "d1", "authority": "WHO", "title": "T",
            "body": body,
            "outline": [["S", 0, 0, len(body)]],
        })])
        units = segment_corpus(corpus, SegmentConfig(200, 10))
        graph = extract_graph(units, vocabulary, rules)
        assert len(graph.edges) == 1
        edge = graph.edges[0]
        assert (edge.src, edge.dst, edge.relation) == (
            "C_ASA", "C_RF", RelationType.CONTRAINDICATION
        )
        assert edge.supporting_units == {units[0].unit_id}

    def test_isolated_concepts_make_nodes_but_no_edges(self, vocabulary, rules):
        corpus = ingest_guidelines([json.dumps({
            "doc_id": "d1", "authority": "WHO", "title": "T",
            "body": "Discuss aspirin.\nReview sepsis.\n",
            "outline": [["A", 0, 0, 17], ["B", 0, 17, 32]],
        })])
        units = segment_corpus(corpus, SegmentConfig(200, 5))
        graph = extract_graph(units, vocabulary, rules)
        assert set(graph.nodes) == {"C_ASA", "C_SEPSIS"}
        assert graph.edges == ()

    def test_planted_fixture_recovers_exact_edge_set(self, planted_graph):
        got = {
            (e.src, e.dst, e.relation.value)
            for e in planted_graph.edges
        }
        assert got == PLANTED_EDGES  # precision = recall = 1.0

    def test_cooccurrence_fallback_without_triggers(self, vocabulary, rules):
        corpus = ingest_guidelines([json.dumps({
            "doc_id": "d1", "authority": "NICE", "title": "T",
            "body": "Patients with sepsis often need dialysis.",
            "outline": [["S", 0, 0, len("Patients with sepsis often need dialysis.")]],
        })])
        units = segment_corpus(corpus, SegmentConfig(200, 10))
        graph = extract_graph(units, vocabulary, rules)
        assert len(graph.edges) == 1
        edge = graph.edges[0]
        assert edge.relation is RelationType.CO_OCCURS
        assert {edge.src, edge.dst} == {"C_SEPSIS", "C_DIAL"}

    def test_duplicate_edges_merge_supports(self, vocabulary, rules):
        body = ("Aspirin is contraindicated in renal failure.\n"
                "Remember: aspirin is contraindicated in renal failure.\n")
        first_len = len("Aspirin is contraindicated in renal failure.\n")
        corpus = ingest_guidelines([json.dumps({
            "doc_id": "d1", "authority": "WHO", "title": "T",
            "body": body,
            "outline": [["A", 0, 0, first_len], ["B", 0, first_len, len(body)]],
        })])
        units = segment_corpus(corpus, SegmentConfig(200, 10))
        graph = extract_graph(units, vocabulary, rules)
        assert len(graph.edges) == 1
        assert len(graph.edges[0].supporting_units) == 2

    def test_qualifier_pattern_lands_on_edge(self, vocabulary, rules):
        corpus = ingest_guidelines([json.dumps({
            "doc_id": "d1", "authority": "WHO", "title": "T",
            "body": "Aspirin is contraindicated in renal failure under 18 years.",
            "outline": [["S", 0, 0,
                         len("Aspirin is contraindicated in renal failure under 18 years.")]],
        })])
        units = segment_corpus(corpus, SegmentConfig(200, 10))
        graph = extract_graph(units, vocabulary, rules)
        assert graph.edges[0].qualifier_map() == {"age_limit": "under 18 years"}

    def test_extraction_monotone_under_new_units(self, vocabulary, rules, planted_units):
        graph_small = extract_graph(planted_units[:6], vocabulary, rules)
        graph_full = extract_graph(planted_units, vocabulary, rules)
        for entity_id, node in graph_small.nodes.items():
            assert entity_id in graph_full.nodes
            assert node.supporting_units <= graph_full.nodes[entity_id].supporting_units
        small_keys = {(e.src, e.dst, e.relation) for e in graph_small.edges}
        full_keys = {(e.src, e.dst, e.relation) for e in graph_full.edges}
        assert small_keys <= full_keys

    def test_serialization_is_deterministic_and_round_trips(
        self, planted_units, vocabulary, rules
    ):
        first = extract_graph(planted_units, vocabulary, rules)
        second = extract_graph(list(planted_units), vocabulary, rules)
        assert first.to_json() == second.to_json()
        reloaded = KnowledgeGraph.from_json(first.to_json())
        assert reloaded.to_json() == first.to_json()

    def test_referential_integrity(self, planted_graph):
        planted_graph.validate()
        for edge in planted_graph.edges:
            assert edge.src in planted_graph.nodes
            assert edge.dst in planted_graph.nodes
            for unit_id in edge.supporting_units:
                assert unit_id in planted_graph.unit_index
        for node in planted_graph.nodes.values():
            assert node.supporting_units
            for unit_id in node.supporting_units:
                assert unit_id in planted_graph.unit_index


class TestResolveProvenance:
    def test_known_unit(self, planted_graph, planted_units):
        unit = planted_units[0]
        result = resolve_provenance(planted_graph, unit.unit_id)
        assert result.doc_id == unit.doc_id
        assert result.section_path == unit.section_path
        assert result.text == unit.text

    def test_unknown_unit(self, planted_graph):
        with pytest.raises(UnknownUnitId):
            resolve_provenance(planted_graph, "nope:0000")

    def test_every_unit_resolves_to_exact_body_substring(self, vocabulary, rules):
        lines = synth_guideline_lines(6, seed=37)
        corpus = ingest_guidelines(lines)
        units = segment_corpus(corpus, SegmentConfig(250, 30))
        graph = extract_graph(units, vocabulary, rules)
        for unit in units:
            provenance = resolve_provenance(graph, unit.unit_id)
            body = corpus.get(provenance.doc_id).body
            assert provenance.text == body[unit.span.char_start:unit.span.char_end]


class TestRuleParsing:
    def test_rule_files_parse(self):
        rule_set = RelationRuleSet.from_lines(
            TRIGGER_RULES_TSV.splitlines(), QUALIFIER_RULES_TSV.splitlines()
        )
        assert len(rule_set.triggers) == 4
        assert len(rule_set.qualifiers) == 2

    def test_bad_relation_type_rejected(self):
        from caseguide.errors import InputError
        with pytest.raises(InputError):
            RelationRuleSet.from_lines(["x\tnot-a-relation\tmedication\tdiagnosis"])

    def test_bad_regex_rejected(self):
        from caseguide.errors import InputError
        with pytest.raises(InputError):
            RelationRuleSet.from_lines([], ["([bad\tkey"])
