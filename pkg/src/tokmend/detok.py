"""Detokenization success conditions and expansion-set selection.

A word counts as detokenized when it appears (at word boundaries) in any
patched generation across its token positions and layers; restricting to
the last token position is the default for expansion runs.  Affix spans
match as plain substrings, but only in generations at the span's final
token position.  Selection then filters and reduces the successful
occurrences into one vocabulary item per surface.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass

from .candidates import AffixSpan
from .errors import InputError
from .traces import TraceRecord

__all__ = [
    "ActivationRef",
    "DetokOutcome",
    "SelectionConfig",
    "SelectedItem",
    "word_boundary_match",
    "substring_match",
    "evaluate_word",
    "evaluate_affix",
    "select_expansion",
]


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch == "_"


def word_boundary_match(text: str, target: str, case_sensitive: bool = True) -> bool:
    """True when ``target`` occurs in ``text`` not flanked by word characters."""
    if not target:
        return False
    if not case_sensitive:
        text, target = text.lower(), target.lower()
    start = 0
    while True:
        pos = text.find(target, start)
        if pos < 0:
            return False
        before_ok = pos == 0 or not _is_word_char(text[pos - 1])
        end = pos + len(target)
        after_ok = end == len(text) or not _is_word_char(text[end])
        if before_ok and after_ok:
            return True
        start = pos + 1


def substring_match(text: str, target: str, case_sensitive: bool = True) -> bool:
    if not target:
        return False
    if not case_sensitive:
        text, target = text.lower(), target.lower()
    return target in text


@dataclass(frozen=True)
class ActivationRef:
    """Points at one stored hidden vector: (source word, position, layer)."""

    word: str
    position: int
    layer: int


@dataclass(frozen=True)
class DetokOutcome:
    """Verdict for one (target surface, source word) occurrence."""

    target: str
    success: bool
    earliest_layer: int | None
    position: int | None
    source_word: str

    def __post_init__(self):
        if self.success != (self.earliest_layer is not None):
            raise InputError("success and earliest_layer must agree")

    @property
    def is_full_word(self) -> bool:
        return self.target == self.source_word

    @property
    def ref(self) -> ActivationRef:
        if not self.success:
            raise InputError(f"{self.target!r}: failed outcome has no activation")
        return ActivationRef(self.source_word, self.position, self.earliest_layer)


@dataclass(frozen=True)
class SelectionConfig:
    """Filters and the reduction strategy applied to successful outcomes.

    reduction "earliest" keeps the occurrence detokenized at the lowest
    layer; "mean" keeps every occurrence for downstream averaging.
    min_length_chars drops short surfaces (0 disables).  With
    full_word_preference, full-word occurrences of a surface shadow its
    affix occurrences.
    """

    reduction: str = "earliest"
    min_length_chars: int = 3
    full_word_preference: bool = True
    last_token_only: bool = True

    def __post_init__(self):
        if self.reduction not in ("earliest", "mean"):
            raise InputError(f"unknown reduction {self.reduction!r}")
        if self.min_length_chars < 0:
            raise InputError("min_length_chars must be >= 0")


def evaluate_word(
    trace: TraceRecord,
    last_token_only: bool = True,
    case_sensitive: bool = True,
    matcher=word_boundary_match,
) -> DetokOutcome:
    """Did any patched generation reproduce the whole word?

    Scans all (position, layer) generations, or only the last token's when
    ``last_token_only``.  Returns the earliest successful layer (ties to the
    lowest position).
    """
    trace.validate()
    n = trace.n_tokens
    best: tuple[int, int] | None = None
    for (i, l), text in trace.generations.items():
        if last_token_only and i != n:
            continue
        if matcher(text, trace.word, case_sensitive):
            if best is None or (l, i) < best:
                best = (l, i)
    if best is None:
        return DetokOutcome(trace.word, False, None, None, trace.word)
    return DetokOutcome(trace.word, True, best[0], best[1], trace.word)


def evaluate_affix(
    trace: TraceRecord,
    span: AffixSpan,
    case_sensitive: bool = True,
    matcher=substring_match,
) -> DetokOutcome:
    """Did the span's surface appear in any generation at its final token?"""
    trace.validate()
    if span.word != trace.word:
        raise InputError(f"span is for {span.word!r}, trace is for {trace.word!r}")
    i, j = span.token_span
    if j > trace.n_tokens:
        raise InputError(f"span {span.token_span} outside word of {trace.n_tokens} tokens")
    earliest: int | None = None
    for (pos, l), text in trace.generations.items():
        if pos != j:
            continue
        if matcher(text, span.surface, case_sensitive):
            if earliest is None or l < earliest:
                earliest = l
    if earliest is None:
        return DetokOutcome(span.surface, False, None, None, trace.word)
    return DetokOutcome(span.surface, True, earliest, j, trace.word)


@dataclass(frozen=True)
class SelectedItem:
    """One expansion item and the activation(s) that will initialize it."""

    surface: str
    refs: tuple[ActivationRef, ...]


def select_expansion(
    outcomes: list[DetokOutcome], cfg: SelectionConfig
) -> list[SelectedItem]:
    """Reduce successful outcomes to a deduplicated expansion set.

    Failures are dropped, then surfaces shorter than the length threshold.
    Outcomes group by surface; under full-word preference a group containing
    any full-word occurrence keeps only those.  "earliest" picks the single
    occurrence with the lowest layer (first-in-input on ties), "mean" keeps
    the whole group.  Output order is first appearance in the input.
    """
    groups: dict[str, list[DetokOutcome]] = defaultdict(list)
    order: list[str] = []
    for out in outcomes:
        if not out.success:
            continue
        if cfg.min_length_chars and len(out.target) < cfg.min_length_chars:
            continue
        if out.target not in groups:
            order.append(out.target)
        groups[out.target].append(out)

    selected: list[SelectedItem] = []
    for surface in order:
        group = groups[surface]
        if cfg.full_word_preference and any(o.is_full_word for o in group):
            group = [o for o in group if o.is_full_word]
        if cfg.reduction == "earliest":
            group = [min(group, key=lambda o: o.earliest_layer)]
        selected.append(SelectedItem(surface, tuple(o.ref for o in group)))
    return selected
