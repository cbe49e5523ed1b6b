"""Measuring token over-fragmentation on a parallel corpus.

Uses a byte-level tokenizer on a toy three-language parallel corpus; the
non-Latin script pays a visibly higher per-sentence token price because its
characters cost three bytes each.
"""

from tokmend import ParallelCorpus, fragmentation_report, train_bpe

corpus = ParallelCorpus(
    {
        "eng": [
            "the family eats together",
            "my house is small",
            "water is essential for life",
        ],
        "deu": [
            "die familie isst zusammen",
            "mein haus ist klein",
            "wasser ist lebenswichtig",
        ],
        "hin": [
            "परिवार साथ खाता है",
            "मेरा घर छोटा है",
            "जल जीवन के लिए आवश्यक है",
        ],
    },
    reference="eng",
)

tok = train_bpe(corpus["eng"] + corpus["deu"], n_merges=60)
report = fragmentation_report(tok, corpus)

print(f"{'lang':<6}{'tokens_ratio':>14}{'chars_ratio':>14}{'tokens':>8}{'chars':>8}")
for lang, m in sorted(report.per_language.items()):
    print(
        f"{lang:<6}{m.tokens_ratio:>14.2f}{m.characters_ratio:>14.2f}"
        f"{m.token_count:>8}{m.character_count:>8}"
    )

hin = report.per_language["hin"]
print(
    f"\nhin needs {hin.tokens_ratio:.1f}x the tokens for "
    f"{hin.characters_ratio:.1f}x the characters: "
    f"a {hin.tokens_ratio / hin.characters_ratio:.1f}x premium over byte parity"
)
