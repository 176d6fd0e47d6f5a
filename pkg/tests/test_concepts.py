import random

import pytest
from hypothesis import given, settings, strategies as st

from caseguide.concepts import (
    Category,
    Vocabulary,
    annotate_case,
    concept_multiset,
    extract_concepts,
)
from caseguide.corpus import SoapCase, Source
from caseguide.errors import VocabularyError

from conftest import VOCAB_ROWS, VOCAB_TSV, DIAGNOSES, MEDICATIONS, SYMPTOMS
from oracles import brute_force_extract


@pytest.fixture(scope="module")
def mini_vocab():
    return Vocabulary.from_lines([
        "myocardial infarction\tMI\tdiagnosis",
        "acute myocardial infarction\tAMI\tdiagnosis",
        "aspirin\tASA\tmedication",
    ])


class TestVocabulary:
    def test_from_tsv(self, vocabulary):
        assert len(vocabulary) == len(VOCAB_ROWS)
        assert vocabulary.category_of("C_ASA") is Category.MEDICATION
        assert vocabulary.canonical_term("C_MI") == "myocardial infarction"

    def test_term_mapping_must_be_functional(self):
        with pytest.raises(VocabularyError):
            Vocabulary.from_lines([
                "aspirin\tASA\tmedication",
                "Aspirin\tACETYLSALICYLIC\tmedication",
            ])

    def test_concept_category_must_be_consistent(self):
        with pytest.raises(VocabularyError):
            Vocabulary.from_lines([
                "mi\tMI\tdiagnosis",
                "myocardial infarction\tMI\tsymptom",
            ])

    def test_empty_term_rejected(self):
        with pytest.raises(VocabularyError):
            Vocabulary.from_lines(["\tX\tdiagnosis"])

    def test_unknown_category_rejected(self):
        with pytest.raises(VocabularyError):
            Vocabulary.from_lines(["aspirin\tASA\tdrug"])

    def test_comments_and_blanks_skipped(self):
        vocab = Vocabulary.from_lines([
            "# comment", "", "aspirin\tASA\tmedication",
        ])
        assert len(vocab) == 1


class TestExtractConcepts:
    def test_longest_match_wins(self, mini_vocab):
        mentions = extract_concepts(
            "acute myocardial infarction treated with aspirin", mini_vocab
        )
        assert [(m.concept_id, m.surface) for m in mentions] == [
            ("AMI", "acute myocardial infarction"),
            ("ASA", "aspirin"),
        ]
        assert mentions[0].start == 0
        assert mentions[0].end == len("acute myocardial infarction")

    def test_empty_text(self, mini_vocab):
        assert extract_concepts("", mini_vocab) == []

    def test_case_insensitive_preserves_surface(self, mini_vocab):
        mentions = extract_concepts("ASPIRIN given", mini_vocab)
        assert mentions[0].surface == "ASPIRIN"
        assert mentions[0].concept_id == "ASA"

    def test_word_boundaries(self):
        vocab = Vocabulary.from_lines(["pain\tPAIN\tsymptom"])
        assert extract_concepts("visited Spain", vocab) == []
        assert len(extract_concepts("in pain.", vocab)) == 1
        assert len(extract_concepts("pain", vocab)) == 1

    def test_no_overlapping_mentions(self, vocabulary):
        text = ("acute myocardial infarction with myocardial infarction "
                "history and chest pain")
        mentions = extract_concepts(text, vocabulary)
        spans = [(m.start, m.end) for m in mentions]
        for i, (s1, e1) in enumerate(spans):
            for s2, e2 in spans[i + 1:]:
                assert e1 <= s2 or e2 <= s1

    def test_matches_brute_force_oracle_on_synthetic_notes(self, vocabulary):
        rng = random.Random(41)
        words = (DIAGNOSES + MEDICATIONS + SYMPTOMS
                 + ["review", "ward", "today", "later", "spain", "painless"])
        entries = [(t, c, cat) for t, c, cat, _ in VOCAB_ROWS]
        for _ in range(20):
            text = " ".join(rng.choice(words) for _ in range(500))
            mentions = extract_concepts(text, vocabulary)
            expected = brute_force_extract(text, entries)
            got = [(m.start, m.end, m.concept_id, m.category.value)
                   for m in mentions]
            assert got == expected

    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=30, deadline=None)
    def test_vocab_order_does_not_change_output(self, seed):
        rng = random.Random(seed)
        rows = list(VOCAB_ROWS)
        rng.shuffle(rows)
        shuffled = Vocabulary.from_lines(
            "\t".join(c for c in row if c) for row in rows
        )
        baseline = Vocabulary.from_lines(VOCAB_TSV.splitlines())
        text = ("chest pain with acute myocardial infarction on aspirin "
                "and metformin for type 2 diabetes")
        assert extract_concepts(text, shuffled) == extract_concepts(text, baseline)

    def test_every_concept_id_exists_in_vocabulary(self, vocabulary):
        text = " ".join(DIAGNOSES + MEDICATIONS)
        for m in extract_concepts(text, vocabulary):
            assert m.concept_id in vocabulary


class TestConceptMultiset:
    def test_counts_across_sections(self, mini_vocab):
        case = SoapCase(
            case_id="c1", source=Source.SYNTHETIC,
            subjective="felt unwell",
            objective="gave aspirin today",
            assessment="stable",
            plan="continue aspirin",
        )
        result = concept_multiset(case, mini_vocab)
        assert result == {"ASA": (Category.MEDICATION, 2)}

    def test_no_hits_gives_empty_map(self, mini_vocab):
        case = SoapCase(
            case_id="c1", source=Source.SYNTHETIC,
            subjective="nothing relevant", objective="", assessment="", plan="",
        )
        assert concept_multiset(case, mini_vocab) == {}

    def test_hand_counted_fixture(self, vocabulary):
        # Hand count: chest pain x1 (S), aspirin x2 (O, P), sepsis x1 (A),
        # intubation x1 (P).
        case = SoapCase(
            case_id="c1", source=Source.SYNTHETIC,
            subjective="complains of chest pain",
            objective="on aspirin drip",
            assessment="worsening sepsis",
            plan="continue aspirin; prepare intubation",
        )
        result = concept_multiset(case, vocabulary)
        assert result == {
            "C_ASA": (Category.MEDICATION, 2),
            "C_CP": (Category.SYMPTOM, 1),
            "C_INTUB": (Category.PROCEDURE, 1),
            "C_SEPSIS": (Category.DIAGNOSIS, 1),
        }
        assert list(result) == sorted(result)

    def test_annotate_case_tags_sections(self, vocabulary):
        case = SoapCase(
            case_id="c1", source=Source.SYNTHETIC,
            subjective="chest pain", objective="", assessment="sepsis",
            plan="aspirin",
        )
        annotated = annotate_case(case, vocabulary)
        by_section = {(m.section, m.concept_id) for m in annotated.concepts}
        assert by_section == {
            ("subjective", "C_CP"), ("assessment", "C_SEPSIS"),
            ("plan", "C_ASA"),
        }
        for m in annotated.concepts:
            section_text = getattr(annotated, m.section)
            assert section_text[m.start:m.end].lower() == m.surface.lower()
