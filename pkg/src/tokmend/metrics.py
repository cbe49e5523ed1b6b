"""Token-fragmentation and expansion-efficiency metrics.

All ratios aggregate over summed corpus totals (total tokens of language X
over total tokens of the reference), not per-sentence means.  Characters are
unicode scalar values.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

from .bpe import Tokenizer
from .errors import DegenerateInputError, InputError, SchemaError

__all__ = [
    "ParallelCorpus",
    "LanguageMetrics",
    "MetricReport",
    "tokens_ratio",
    "characters_ratio",
    "fragmentation_report",
    "token_reduction",
    "perversity_audit",
    "performance_conservation",
]


@dataclass
class ParallelCorpus:
    """Index-aligned sentences per language code."""

    sentences: dict[str, list[str]]
    reference: str = "eng"

    def __post_init__(self):
        if self.reference not in self.sentences:
            raise InputError(f"reference language {self.reference!r} missing")
        lengths = {lang: len(s) for lang, s in self.sentences.items()}
        if len(set(lengths.values())) > 1:
            raise SchemaError(f"language lists are not aligned: {lengths}")

    def languages(self) -> list[str]:
        return sorted(self.sentences)

    def __getitem__(self, lang: str) -> list[str]:
        if lang not in self.sentences:
            raise InputError(f"language {lang!r} not in corpus")
        return self.sentences[lang]

    @classmethod
    def from_dir(cls, directory: str | Path, reference: str = "eng") -> "ParallelCorpus":
        """One UTF-8 text file per language (<lang>.txt, one sentence per line)."""
        directory = Path(directory)
        files = sorted(directory.glob("*.txt"))
        if not files:
            raise InputError(f"no *.txt corpus files in {directory}")
        sentences = {
            f.stem: f.read_text(encoding="utf-8").splitlines() for f in files
        }
        return cls(sentences, reference)

    @classmethod
    def from_tsv(cls, path: str | Path, reference: str = "eng") -> "ParallelCorpus":
        """Single TSV of (lang, index, text) rows."""
        rows: dict[str, dict[int, str]] = {}
        with open(path, encoding="utf-8", newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh, delimiter="\t"), 1):
                if not row:
                    continue
                if len(row) != 3:
                    raise SchemaError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
                lang, index, text = row
                rows.setdefault(lang, {})[int(index)] = text
        sentences = {
            lang: [by_idx[i] for i in sorted(by_idx)] for lang, by_idx in rows.items()
        }
        return cls(sentences, reference)


@dataclass
class LanguageMetrics:
    tokens_ratio: float
    characters_ratio: float
    token_count: int
    character_count: int


@dataclass
class MetricReport:
    reference: str
    per_language: dict[str, LanguageMetrics] = field(default_factory=dict)

    def to_json(self, path: str | Path) -> None:
        data = {
            "reference": self.reference,
            "languages": {
                lang: vars(m) for lang, m in sorted(self.per_language.items())
            },
        }
        Path(path).write_text(json.dumps(data, indent=2), encoding="utf-8")

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["language", "tokens_ratio", "characters_ratio", "token_count", "character_count"]
            )
            for lang, m in sorted(self.per_language.items()):
                w.writerow(
                    [lang, repr(m.tokens_ratio), repr(m.characters_ratio),
                     m.token_count, m.character_count]
                )


def _total_tokens(tok: Tokenizer, sentences: list[str]) -> int:
    return sum(len(tok.encode(s)) for s in sentences)


def tokens_ratio(tok: Tokenizer, corpus: ParallelCorpus, lang: str) -> float:
    """Total tokens for ``lang`` over total tokens for the reference."""
    ref_total = _total_tokens(tok, corpus[corpus.reference])
    if ref_total == 0:
        raise DegenerateInputError("reference language encodes to zero tokens")
    return _total_tokens(tok, corpus[lang]) / ref_total


def characters_ratio(corpus: ParallelCorpus, lang: str) -> float:
    """Unicode scalar count for ``lang`` over the reference; tokenizer-free."""
    ref_total = sum(len(s) for s in corpus[corpus.reference])
    if ref_total == 0:
        raise DegenerateInputError("reference language has zero characters")
    return sum(len(s) for s in corpus[lang]) / ref_total


def fragmentation_report(tok: Tokenizer, corpus: ParallelCorpus) -> MetricReport:
    ref_tokens = _total_tokens(tok, corpus[corpus.reference])
    ref_chars = sum(len(s) for s in corpus[corpus.reference])
    if ref_tokens == 0 or ref_chars == 0:
        raise DegenerateInputError("reference language is empty")
    report = MetricReport(corpus.reference)
    for lang in corpus.languages():
        n_tok = _total_tokens(tok, corpus[lang])
        n_chr = sum(len(s) for s in corpus[lang])
        report.per_language[lang] = LanguageMetrics(
            tokens_ratio=n_tok / ref_tokens,
            characters_ratio=n_chr / ref_chars,
            token_count=n_tok,
            character_count=n_chr,
        )
    return report


def token_reduction(orig: Tokenizer, exp: Tokenizer, dataset: list[str]) -> float:
    """1 - expanded/original total tokens; negative means the expansion hurt."""
    if not dataset:
        raise InputError("dataset is empty")
    orig_total = _total_tokens(orig, dataset)
    if orig_total == 0:
        raise DegenerateInputError("original tokenizer encodes dataset to zero tokens")
    return 1.0 - _total_tokens(exp, dataset) / orig_total


def perversity_audit(
    orig: Tokenizer, exp: Tokenizer, words: list[str]
) -> list[tuple[str, int, int]]:
    """Words the expanded tokenizer splits into strictly more tokens."""
    flagged = []
    for word in words:
        n_orig = len(orig.encode(word))
        n_exp = len(exp.encode(word))
        if n_exp > n_orig:
            flagged.append((word, n_orig, n_exp))
    return flagged


def performance_conservation(expanded_score: float, original_score: float) -> float:
    if original_score <= 0:
        raise InputError("original score must be positive")
    return expanded_score / original_score
