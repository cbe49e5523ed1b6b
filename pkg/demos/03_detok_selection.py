"""Detokenization verdicts and the selection grid.

Builds hand-written traces (as a model run would produce), evaluates the
word- and affix-level success conditions, and compares what each reduction
configuration keeps.
"""

from tokmend import (
    SelectionConfig,
    TraceRecord,
    Tokenizer,
    evaluate_affix,
    evaluate_word,
    select_expansion,
)
from tokmend.bpe import BYTE_ENCODER
from tokmend.candidates import enumerate_affixes

# A hand-built merge table that splits "Layla" into L + ay + la.
vocab = {BYTE_ENCODER[b]: b for b in range(256)}
merges = [("a", "y"), ("l", "a")]
for left, right in merges:
    vocab[left + right] = len(vocab)
tok = Tokenizer(vocab, merges)
ids = tok.base_token_ids("Layla")
print("Layla ->", [tok.token_string(i) for i in ids])

# The trace: the prefix "Lay" is reproduced already at layer 1 when patching
# the second token's state; the whole word only at layer 5 on the last token.
trace = TraceRecord(
    word="Layla",
    token_ids=tuple(ids),
    layers=6,
    generations={
        (2, 1): "Lay, Lay, Lay",
        (3, 5): "Layla, Layla, Layla",
    },
)

word_verdict = evaluate_word(trace, last_token_only=True)
print(f"word verdict: success={word_verdict.success} layer={word_verdict.earliest_layer}")

for span in enumerate_affixes("Layla", tok):
    verdict = evaluate_affix(trace, span)
    print(f"affix {span.surface!r} span={span.token_span}: "
          f"success={verdict.success} layer={verdict.earliest_layer}")

# Selection over a richer synthetic outcome pool: same surface detokenized
# from several words, a standalone word shadowing its affix occurrence, and
# a too-short surface.
from tokmend.detok import DetokOutcome

outcomes = [
    DetokOutcome("cat", True, 4, 1, "cat"),
    DetokOutcome("cat", True, 1, 2, "caterpillar"),
    DetokOutcome("the", True, 2, 2, "they"),
    DetokOutcome("the", True, 1, 3, "either"),
    DetokOutcome("ab", True, 1, 2, "abba"),
]

for label, cfg in [
    ("mean, no filters", SelectionConfig("mean", 0, False)),
    ("earliest, no filters", SelectionConfig("earliest", 0, False)),
    ("earliest + length>=3", SelectionConfig("earliest", 3, False)),
    ("earliest + length>=3 + full-word pref", SelectionConfig("earliest", 3, True)),
]:
    chosen = select_expansion(outcomes, cfg)
    desc = {it.surface: [(r.word, r.layer) for r in it.refs] for it in chosen}
    print(f"{label:40s} -> {desc}")
