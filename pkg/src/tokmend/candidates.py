"""Candidate vocabulary items: frequent words, token affix spans, budgets."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import regex

from .bpe import BYTE_DECODER, Tokenizer
from .errors import InputError

__all__ = [
    "CandidateSet",
    "AffixSpan",
    "extract_candidate_words",
    "enumerate_affixes",
    "budget_schedule",
]

# A word is a maximal run of non-punctuation, non-space characters; single
# hyphens and apostrophes bind when flanked by such characters, so
# hyphenated and contracted forms count as one word.  Scripts without
# whitespace come out as whole inter-space chunks (a documented limitation).
_WORD = regex.compile(r"[^\p{P}\s]+(?:['-][^\p{P}\s]+)*")


@dataclass
class CandidateSet:
    """Frequency-filtered unique words, ordered by (-frequency, surface)."""

    words: list[tuple[str, int]]
    source_corpus_size: int

    def surfaces(self) -> list[str]:
        return [w for w, _ in self.words]

    def to_tsv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, delimiter="\t")
            for surface, freq in self.words:
                w.writerow([surface, freq])

    @classmethod
    def from_tsv(cls, path: str | Path, source_corpus_size: int = 0) -> "CandidateSet":
        words = []
        with open(path, encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh, delimiter="\t"):
                if row:
                    words.append((row[0], int(row[1])))
        return cls(words, source_corpus_size)


def extract_candidate_words(corpus: list[str], min_freq: int = 5) -> CandidateSet:
    """Count word-boundary tokens across the corpus and keep the frequent ones."""
    if not corpus:
        raise InputError("corpus is empty")
    if min_freq < 1:
        raise InputError("min_freq must be >= 1")
    counts: Counter = Counter()
    for seq in corpus:
        counts.update(_WORD.findall(seq))
    kept = [(w, c) for w, c in counts.items() if c >= min_freq]
    kept.sort(key=lambda wc: (-wc[1], wc[0]))
    return CandidateSet(kept, len(corpus))


@dataclass(frozen=True)
class AffixSpan:
    """A contiguous token span (1-based, inclusive) of a word's tokenization."""

    word: str
    token_span: tuple[int, int]
    surface: str

    def __post_init__(self):
        i, j = self.token_span
        if not 1 <= i <= j:
            raise InputError(f"invalid token span {self.token_span}")

    @property
    def is_full_word(self) -> bool:
        return self.surface == self.word


def enumerate_affixes(word: str, tok: Tokenizer) -> list[AffixSpan]:
    """All multi-token contiguous spans of ``word``'s base tokenization.

    Spans whose concatenation is already a single base-vocab token are
    dropped (priority matching would make them no-ops), as are spans whose
    bytes do not decode to whole UTF-8 characters.  The full-word span is
    included.
    """
    if not word:
        raise InputError("word is empty")
    ids = tok.base_token_ids(word)
    strings = [tok.token_string(i) for i in ids]
    n = len(ids)
    spans: list[AffixSpan] = []
    for i in range(1, n + 1):
        for j in range(i, n + 1):
            if i == j:
                continue
            joined = "".join(strings[i - 1 : j])
            if joined in tok.vocab:
                continue
            try:
                surface = bytes(BYTE_DECODER[c] for c in joined).decode("utf-8")
            except UnicodeDecodeError:
                continue
            spans.append(AffixSpan(word, (i, j), surface))
    return spans


def budget_schedule(max_budget: int, fractions: list[float]) -> list[int]:
    """Item budgets round(f * max_budget), clamped to >= 1, deduped, descending."""
    if max_budget < 1:
        raise InputError("max_budget must be >= 1")
    budgets = set()
    for f in fractions:
        if not 0 < f <= 1:
            raise InputError(f"fraction {f} outside (0, 1]")
        budgets.add(max(1, round(f * max_budget)))
    return sorted(budgets, reverse=True)
