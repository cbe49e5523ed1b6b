import random

import pytest

from conftest import build_tokenizer

from tokmend.candidates import (
    AffixSpan,
    CandidateSet,
    budget_schedule,
    enumerate_affixes,
    extract_candidate_words,
)
from tokmend.errors import InputError


class TestExtractCandidateWords:
    def test_contractions_are_single_words(self):
        cand = extract_candidate_words(["can't stop can't stop can't"], min_freq=3)
        assert cand.words == [("can't", 3)]

    def test_hyphenated_forms(self):
        cand = extract_candidate_words(["self-aware self-aware"], min_freq=2)
        assert cand.words == [("self-aware", 2)]

    def test_threshold_above_max_is_empty(self):
        cand = extract_candidate_words(["a b c"], min_freq=2)
        assert cand.words == []

    def test_empty_corpus(self):
        with pytest.raises(InputError):
            extract_candidate_words([], 1)

    def test_ordering_frequency_then_lexicographic(self):
        cand = extract_candidate_words(["b b a a c"], min_freq=1)
        assert cand.words == [("a", 2), ("b", 2), ("c", 1)]

    def test_sequence_order_invariance(self):
        rng = random.Random(5)
        lines = ["alpha beta", "beta gamma", "gamma alpha alpha"]
        base = extract_candidate_words(lines, 1)
        for _ in range(5):
            shuffled = lines[:]
            rng.shuffle(shuffled)
            assert extract_candidate_words(shuffled, 1).words == base.words

    def test_tsv_round_trip(self, tmp_path):
        cand = extract_candidate_words(["red red blue"], 1)
        path = tmp_path / "cand.tsv"
        cand.to_tsv(path)
        again = CandidateSet.from_tsv(path, cand.source_corpus_size)
        assert again.words == cand.words


class TestEnumerateAffixes:
    def test_three_token_word(self, layla_tokenizer):
        spans = enumerate_affixes("Layla", layla_tokenizer)
        # 6 spans minus 3 single-token ones; none of the joins are in vocab.
        assert len(spans) == 3
        by_span = {s.token_span: s.surface for s in spans}
        assert by_span == {(1, 2): "Lay", (2, 3): "ayla", (1, 3): "Layla"}

    def test_full_word_span_included(self, layla_tokenizer):
        spans = enumerate_affixes("Layla", layla_tokenizer)
        full = [s for s in spans if s.is_full_word]
        assert len(full) == 1 and full[0].token_span == (1, 3)

    def test_single_token_word(self, layla_tokenizer):
        assert enumerate_affixes("la", layla_tokenizer) == []

    def test_excludes_spans_already_in_vocab(self):
        tok = build_tokenizer([("a", "b"), ("c", "d"), ("ab", "cd")])
        # "abcd" encodes as [abcd]... use a word that stays multi-token.
        spans = enumerate_affixes("abcde", tok)
        surfaces = {s.surface for s in spans}
        assert "abcd" not in surfaces  # already a single vocab token
        assert "abcde" in surfaces

    def test_surfaces_are_substrings_at_offsets(self, byte_tokenizer):
        rng = random.Random(9)
        for _ in range(30):
            word = "".join(rng.choice("abcXYZ") for _ in range(rng.randrange(1, 7)))
            for span in enumerate_affixes(word, byte_tokenizer):
                assert span.surface in word
                i, j = span.token_span
                assert word[i - 1 : j] == span.surface  # byte tokens = chars here

    def test_count_bound(self, byte_tokenizer):
        word = "abcdef"
        n = len(byte_tokenizer.base_token_ids(word))
        assert len(enumerate_affixes(word, byte_tokenizer)) <= n * (n + 1) // 2

    def test_multibyte_partial_spans_dropped(self, byte_tokenizer):
        # Every span here splits a 3-byte Devanagari char unless it covers
        # whole characters.
        spans = enumerate_affixes("अआ", byte_tokenizer)
        for span in spans:
            assert span.surface in "अआ" or span.surface == "अआ"

    def test_empty_word(self, byte_tokenizer):
        with pytest.raises(InputError):
            enumerate_affixes("", byte_tokenizer)

    def test_invalid_span(self):
        with pytest.raises(InputError):
            AffixSpan("word", (2, 1), "rd")


class TestBudgetSchedule:
    def test_full_budget(self):
        assert budget_schedule(584, [1.0])[0] == 584

    def test_smallest_fraction(self):
        assert budget_schedule(584, [0.03125]) == [18]

    def test_clamp_to_one(self):
        assert budget_schedule(1, [1.0, 0.5, 0.03125]) == [1]

    def test_paper_style_schedule(self):
        fractions = [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125]
        assert budget_schedule(584, fractions) == [584, 292, 146, 73, 36, 18]

    def test_fraction_out_of_range(self):
        with pytest.raises(InputError):
            budget_schedule(10, [0.0])
        with pytest.raises(InputError):
            budget_schedule(10, [1.5])

    def test_deduplicated_descending(self):
        out = budget_schedule(10, [1.0, 0.99, 0.5])
        assert out == sorted(set(out), reverse=True)
