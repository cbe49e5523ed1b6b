import itertools
import json
import random
import re
import string
from pathlib import Path

import pytest

from tokmend.candidates import AffixSpan
from tokmend.detok import (
    ActivationRef,
    DetokOutcome,
    SelectionConfig,
    evaluate_affix,
    evaluate_word,
    select_expansion,
    substring_match,
    word_boundary_match,
)
from tokmend.errors import InputError, SchemaError
from tokmend.traces import TraceRecord

FIXTURES = Path(__file__).parent / "fixtures"


def make_trace(word="Layla", token_ids=(10, 20, 30), layers=6, generations=None):
    return TraceRecord(word, tuple(token_ids), layers, generations or {})


class TestBoundaryMatcher:
    def test_plain_occurrence(self):
        assert word_boundary_match("Layla, Layla, Layla", "Layla")

    def test_embedded_occurrence_rejected(self):
        assert not word_boundary_match("Laylas everywhere", "Layla")
        assert not word_boundary_match("aLayla", "Layla")

    def test_punctuation_is_a_boundary(self):
        assert word_boundary_match("so: Layla!", "Layla")

    def test_case_sensitivity(self):
        assert not word_boundary_match("layla", "Layla")
        assert word_boundary_match("layla", "Layla", case_sensitive=False)

    def test_against_regex_oracle(self):
        rng = random.Random(17)
        alphabet = string.ascii_letters + string.digits + " .,!-"
        for _ in range(100):
            word = "".join(rng.choice(string.ascii_letters) for _ in range(rng.randrange(1, 6)))
            text = "".join(rng.choice(alphabet) for _ in range(rng.randrange(0, 40)))
            oracle = re.search(rf"(?<!\w){re.escape(word)}(?!\w)", text) is not None
            assert word_boundary_match(text, word) == oracle, (text, word)

    def test_substring_matcher_ignores_boundaries(self):
        assert substring_match("Laylas", "Layla")
        assert not substring_match("Lay la", "Layla")


class TestEvaluateWord:
    def test_all_empty_generations(self):
        trace = make_trace(generations={(1, 1): "", (3, 2): ""})
        out = evaluate_word(trace, last_token_only=False)
        assert out.success is False and out.earliest_layer is None

    def test_match_at_last_token(self):
        trace = make_trace(generations={(3, 5): "Layla, Layla, Layla"})
        out = evaluate_word(trace, last_token_only=True)
        assert out.success and out.earliest_layer == 5 and out.position == 3

    def test_boundary_rule_blocks_superstrings(self):
        trace = make_trace(generations={(3, 2): "Laylas only here"})
        assert not evaluate_word(trace, last_token_only=False).success

    def test_last_token_only_restricts(self):
        trace = make_trace(generations={(1, 1): "Layla"})
        assert evaluate_word(trace, last_token_only=False).success
        assert not evaluate_word(trace, last_token_only=True).success

    def test_earliest_layer_and_position(self):
        trace = make_trace(
            generations={(2, 4): "Layla", (1, 2): "Layla", (3, 2): "Layla"}
        )
        out = evaluate_word(trace, last_token_only=False)
        assert (out.earliest_layer, out.position) == (2, 1)

    def test_permutation_invariance(self):
        gens = {(1, 3): "x Layla x", (2, 1): "no", (3, 2): "Layla"}
        orders = list(gens.items())
        base = evaluate_word(make_trace(generations=dict(orders)), last_token_only=False)
        for perm in itertools.permutations(orders):
            again = evaluate_word(
                make_trace(generations=dict(perm)), last_token_only=False
            )
            assert again == base

    def test_monotonicity_of_restriction(self):
        rng = random.Random(23)
        for _ in range(100):
            gens = {}
            for i in range(1, 4):
                for l in range(1, 5):
                    if rng.random() < 0.3:
                        gens[(i, l)] = "Layla" if rng.random() < 0.5 else "nope"
            trace = make_trace(generations=gens)
            if evaluate_word(trace, last_token_only=True).success:
                assert evaluate_word(trace, last_token_only=False).success

    def test_malformed_trace(self):
        trace = make_trace(generations={(9, 1): "Layla"})
        with pytest.raises(SchemaError):
            evaluate_word(trace)


class TestEvaluateAffix:
    def span(self, i, j, surface):
        return AffixSpan("Layla", (i, j), surface)

    def test_prefix_detokenized_early(self):
        trace = make_trace(generations={(2, 1): "Lay over Lay"})
        out = evaluate_affix(trace, self.span(1, 2, "Lay"))
        assert out.success and out.earliest_layer == 1 and out.position == 2

    def test_only_final_position_counts(self):
        trace = make_trace(generations={(1, 1): "Lay", (3, 1): "Lay"})
        assert not evaluate_affix(trace, self.span(1, 2, "Lay")).success

    def test_full_word_span_equals_last_token_word_eval(self):
        gens = {(3, 4): "Layla here", (1, 1): "Layla"}
        trace = make_trace(generations=gens)
        via_affix = evaluate_affix(trace, self.span(1, 3, "Layla"))
        via_word = evaluate_word(trace, last_token_only=True)
        assert via_affix.success == via_word.success
        assert via_affix.earliest_layer == via_word.earliest_layer

    def test_substring_semantics(self):
        trace = make_trace(generations={(2, 3): "Layover"})
        assert evaluate_affix(trace, self.span(1, 2, "Lay")).success

    def test_span_out_of_range(self):
        trace = make_trace()
        with pytest.raises(InputError):
            evaluate_affix(trace, self.span(1, 4, "Layla?"))

    def test_wrong_word(self):
        trace = make_trace(word="other", token_ids=(1, 2, 3))
        with pytest.raises(InputError):
            evaluate_affix(trace, self.span(1, 2, "Lay"))


class TestTruthTable:
    def test_enumerated_grid(self):
        """All 64 generation patterns over a 2-token, 3-layer trace."""
        word = "zok"
        cells = [(i, l) for i in (1, 2) for l in (1, 2, 3)]
        n_checked = 0
        for bits in itertools.product([False, True], repeat=6):
            hits = {c for c, b in zip(cells, bits) if b}
            gens = {
                c: (f"a {word} b" if c in hits else "nothing") for c in cells
            }
            trace = TraceRecord(word, (5, 6), 3, gens)

            out_any = evaluate_word(trace, last_token_only=False)
            assert out_any.success == bool(hits)
            if hits:
                assert out_any.earliest_layer == min(l for _, l in hits)

            out_last = evaluate_word(trace, last_token_only=True)
            last_hits = {(i, l) for i, l in hits if i == 2}
            assert out_last.success == bool(last_hits)
            if last_hits:
                assert out_last.earliest_layer == min(l for _, l in last_hits)
            n_checked += 1
        assert n_checked == 64


def outcome(target, success, layer, pos, source):
    return DetokOutcome(target, success, layer, pos, source)


class TestSelection:
    def test_single_successful_word(self):
        out = outcome("house", True, 2, 3, "house")
        sel = select_expansion([out], SelectionConfig(min_length_chars=0))
        assert sel == [
            type(sel[0])("house", (ActivationRef("house", 3, 2),))
        ]

    def test_earliest_picks_argmin_layer(self):
        outs = [
            outcome("the", True, 2, 2, "they"),
            outcome("the", True, 1, 3, "either"),
        ]
        sel = select_expansion(outs, SelectionConfig("earliest", 0, False))
        assert sel[0].refs == (ActivationRef("either", 3, 1),)

    def test_full_word_preference_beats_earlier_layer(self):
        outs = [
            outcome("cat", True, 4, 1, "cat"),
            outcome("cat", True, 1, 2, "caterpillar"),
        ]
        sel = select_expansion(outs, SelectionConfig("earliest", 0, True))
        assert sel[0].refs == (ActivationRef("cat", 1, 4),)

    def test_failures_dropped(self):
        outs = [outcome("word", False, None, None, "word")]
        assert select_expansion(outs, SelectionConfig()) == []

    def test_min_length_filter(self):
        outs = [outcome("ab", True, 1, 1, "abba")]
        assert select_expansion(outs, SelectionConfig(min_length_chars=3)) == []
        assert len(select_expansion(outs, SelectionConfig(min_length_chars=0))) == 1

    def test_output_unique_and_filtered(self):
        rng = random.Random(31)
        surfaces = ["alpha", "beta", "gamma", "xy"]
        outs = []
        for _ in range(40):
            s = rng.choice(surfaces)
            ok = rng.random() < 0.7
            outs.append(
                outcome(s, ok, rng.randrange(1, 5) if ok else None,
                        rng.randrange(1, 4) if ok else None, s + "src")
            )
        cfg = SelectionConfig("earliest", 3, False)
        sel = select_expansion(outs, cfg)
        names = [it.surface for it in sel]
        assert len(names) == len(set(names))
        assert all(len(n) >= 3 for n in names)
        successful = {o.target for o in outs if o.success}
        assert set(names) <= successful

    def test_earliest_layer_equals_group_minimum(self):
        rng = random.Random(37)
        outs = []
        for k in range(30):
            outs.append(outcome("item", True, rng.randrange(1, 9), 1, f"w{k}"))
        sel = select_expansion(outs, SelectionConfig("earliest", 0, False))
        assert sel[0].refs[0].layer == min(o.earliest_layer for o in outs)

    def test_grid_fixture(self):
        """The committed hand-enumerated expectations for all six configs."""
        fixture = json.loads((FIXTURES / "selection_grid.json").read_text())
        outs = [
            outcome(t, ok, layer, pos, src)
            for t, ok, layer, pos, src in fixture["outcomes"]
        ]
        for name, cfg_kw in fixture["configs"].items():
            got = select_expansion(outs, SelectionConfig(**cfg_kw))
            want = [
                (surface, tuple(ActivationRef(w, p, l) for w, p, l in refs))
                for surface, refs in fixture["expected"][name]
            ]
            assert [(it.surface, it.refs) for it in got] == want, name

    def test_inconsistent_outcome_rejected(self):
        with pytest.raises(InputError):
            DetokOutcome("x", True, None, None, "x")
