"""Byte-level BPE tokenizer with merge continuation and priority added items.

The encode pipeline is fixed: (1) pretokenize, (2) match added-item surfaces
inside each pretoken (leftmost-longest), (3) byte-encode the residual spans
and merge by BPE rank, lowest rank first, leftmost occurrence on rank ties.
Matched added-item spans are never re-merged with their neighbors, which is
what makes expansion able to *worsen* fragmentation (see
``metrics.perversity_audit``).

Tokenizers are immutable after construction; training, merge extension, and
vocabulary expansion all return new instances.
"""

from __future__ import annotations

import functools
import heapq
import json
import unicodedata
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import regex

from .errors import ConflictError, InputError, SchemaError

__all__ = [
    "AddedItem",
    "PretokenRule",
    "Tokenizer",
    "train_bpe",
    "extend_merges",
    "expand_vocabulary",
    "load_tokenizer",
    "save_tokenizer",
    "lint_added_items",
]


def _build_byte_encoder() -> dict[int, str]:
    # GPT-2-style fixed remap of all 256 byte values onto printable unicode
    # chars, so every token string is printable and merges stay textual.
    printable = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    chars = printable[:]
    n = 0
    for b in range(256):
        if b not in printable:
            printable.append(b)
            chars.append(256 + n)
            n += 1
    return dict(zip(printable, (chr(c) for c in chars)))


BYTE_ENCODER: dict[int, str] = _build_byte_encoder()
BYTE_DECODER: dict[str, int] = {c: b for b, c in BYTE_ENCODER.items()}


@functools.lru_cache(maxsize=32)
def _compiled(pattern: str):
    return regex.compile(pattern)


def _char_class(ch: str) -> int:
    if ch.isspace():
        return 0
    # Combining marks ride with the word class so scripts like Devanagari
    # keep whole words in one pretoken.
    if ch.isalnum() or unicodedata.category(ch).startswith("M"):
        return 1
    return 2


@dataclass(frozen=True)
class PretokenRule:
    """How raw text is partitioned before byte-level tokenization.

    ``whitespace_punct`` splits into maximal runs of one character class
    (whitespace / alphanumeric / other).  ``regex`` uses a pattern's matches
    as pretokens; any gaps the pattern leaves unmatched become pretokens of
    their own so the split is always a partition of the input.
    """

    mode: str = "whitespace_punct"
    pattern: str | None = None

    def __post_init__(self):
        if self.mode not in ("whitespace_punct", "regex"):
            raise InputError(f"unknown pretokenizer mode {self.mode!r}")
        if self.mode == "regex" and not self.pattern:
            raise InputError("regex pretokenizer requires a pattern")

    def split(self, text: str) -> list[str]:
        if not text:
            return []
        if self.mode == "regex":
            parts: list[str] = []
            last = 0
            for m in _compiled(self.pattern).finditer(text):
                if m.start() > last:
                    parts.append(text[last : m.start()])
                if m.group():
                    parts.append(m.group())
                last = m.end()
            if last < len(text):
                parts.append(text[last:])
            return parts
        parts = []
        start = 0
        cls = _char_class(text[0])
        for i in range(1, len(text)):
            c = _char_class(text[i])
            if c != cls:
                parts.append(text[start:i])
                start, cls = i, c
        parts.append(text[start:])
        return parts

    def to_dict(self) -> dict:
        out = {"mode": self.mode}
        if self.pattern is not None:
            out["pattern"] = self.pattern
        return out


@dataclass(frozen=True)
class AddedItem:
    """A surface string granted encoding priority over BPE merges."""

    surface: str
    id: int


class Tokenizer:
    """Immutable byte-level BPE tokenizer state.

    vocab maps token strings (in the printable byte alphabet) to dense ids
    in [0, |vocab|).  Added items occupy the ids directly after the base
    vocabulary, in insertion order.
    """

    def __init__(
        self,
        vocab: dict[str, int],
        merges: list[tuple[str, str]],
        pretokenizer: PretokenRule | None = None,
        added_items: list[str] | None = None,
    ):
        self.vocab: dict[str, int] = dict(vocab)
        self.merges: list[tuple[str, str]] = [tuple(m) for m in merges]
        self.pretokenizer = pretokenizer or PretokenRule()
        self._validate_vocab()
        base = len(self.vocab)
        surfaces = list(added_items or [])
        for s in surfaces:
            if not isinstance(s, str) or not s:
                raise InputError("added item surfaces must be non-empty strings")
        if len(set(surfaces)) != len(surfaces):
            dupes = sorted({s for s in surfaces if surfaces.count(s) > 1})
            raise ConflictError(f"duplicate added items: {dupes}", dupes)
        self.added_items: tuple[AddedItem, ...] = tuple(
            AddedItem(s, base + k) for k, s in enumerate(surfaces)
        )

        self._ranks = {pair: r for r, pair in enumerate(self.merges)}
        self._id_to_token: list[str] = [""] * base
        for tok, i in self.vocab.items():
            self._id_to_token[i] = tok
        self._added_by_id = {it.id: it.surface for it in self.added_items}
        # Added-surface index for leftmost-longest matching: first char ->
        # surfaces sorted longest first.
        by_first: dict[str, list[AddedItem]] = {}
        for it in self.added_items:
            by_first.setdefault(it.surface[0], []).append(it)
        for lst in by_first.values():
            lst.sort(key=lambda it: -len(it.surface))
        self._added_by_first = by_first
        self._pretoken_cache: dict[str, tuple[int, ...]] = {}

    def _validate_vocab(self):
        ids = self.vocab.values()
        if len(set(ids)) != len(self.vocab):
            raise SchemaError("vocab ids are not unique")
        if self.vocab and (min(ids) != 0 or max(ids) != len(self.vocab) - 1):
            raise SchemaError("vocab ids are not dense in [0, |vocab|)")
        missing = [b for b in range(256) if BYTE_ENCODER[b] not in self.vocab]
        if missing:
            raise SchemaError(
                f"vocab lacks {len(missing)} single-byte tokens; "
                "byte-level fallback would not be total"
            )
        for left, right in self.merges:
            if left not in self.vocab or right not in self.vocab:
                raise SchemaError(f"merge ({left!r}, {right!r}) references unknown token")
            if left + right not in self.vocab:
                raise SchemaError(f"merge output {left + right!r} missing from vocab")

    # -- sizes ---------------------------------------------------------

    @property
    def base_size(self) -> int:
        return len(self.vocab)

    @property
    def total_size(self) -> int:
        return len(self.vocab) + len(self.added_items)

    def added_id(self, surface: str) -> int:
        for it in self.added_items:
            if it.surface == surface:
                return it.id
        raise InputError(f"{surface!r} is not an added item")

    # -- encoding ------------------------------------------------------

    def encode(self, text: str) -> list[int]:
        """Encode text to token ids; total for every valid UTF-8 string."""
        try:
            text.encode("utf-8")
        except UnicodeEncodeError as e:
            raise InputError(f"text is not valid UTF-8: {e}") from e
        ids: list[int] = []
        for pretoken in self.pretokenizer.split(text):
            cached = self._pretoken_cache.get(pretoken)
            if cached is None:
                cached = tuple(self._encode_pretoken(pretoken))
                if len(self._pretoken_cache) < 1_000_000:
                    self._pretoken_cache[pretoken] = cached
            ids.extend(cached)
        return ids

    def _encode_pretoken(self, pretoken: str) -> list[int]:
        ids: list[int] = []
        for kind, span in self._match_added(pretoken):
            if kind == "added":
                ids.append(span)
            else:
                ids.extend(self._merge_span(span))
        return ids

    def _match_added(self, pretoken: str):
        """Split a pretoken on added-item occurrences, leftmost-longest."""
        if not self._added_by_first:
            yield "text", pretoken
            return
        pos = 0
        residual_start = 0
        n = len(pretoken)
        while pos < n:
            hit = None
            for it in self._added_by_first.get(pretoken[pos], ()):
                if pretoken.startswith(it.surface, pos):
                    hit = it
                    break
            if hit is None:
                pos += 1
                continue
            if pos > residual_start:
                yield "text", pretoken[residual_start:pos]
            yield "added", hit.id
            pos += len(hit.surface)
            residual_start = pos
        if residual_start < n:
            yield "text", pretoken[residual_start:]

    def _merge_span(self, span: str) -> list[int]:
        syms = [BYTE_ENCODER[b] for b in span.encode("utf-8")]
        if len(syms) > 1 and self._ranks:
            syms = self._apply_merges(syms)
        return [self.vocab[s] for s in syms]

    def _apply_merges(self, syms: list[str]) -> list[str]:
        # Doubly-linked list over symbol slots plus a lazy heap of
        # (rank, left-slot) candidates.  Slot indices never move, so heap
        # order (rank, slot) realizes "lowest rank first, leftmost on ties"
        # one merge at a time.
        n = len(syms)
        nxt = list(range(1, n)) + [-1]
        prv = [-1] + list(range(n - 1))
        alive = [True] * n
        ranks = self._ranks
        heap: list[tuple[int, int]] = []
        for i in range(n - 1):
            r = ranks.get((syms[i], syms[i + 1]))
            if r is not None:
                heap.append((r, i))
        heapq.heapify(heap)
        while heap:
            r, i = heapq.heappop(heap)
            if not alive[i]:
                continue
            j = nxt[i]
            if j == -1 or not alive[j]:
                continue
            if ranks.get((syms[i], syms[j])) != r:
                continue
            syms[i] = syms[i] + syms[j]
            alive[j] = False
            k = nxt[j]
            nxt[i] = k
            if k != -1:
                prv[k] = i
            p = prv[i]
            if p != -1:
                pr = ranks.get((syms[p], syms[i]))
                if pr is not None:
                    heapq.heappush(heap, (pr, p))
            if k != -1:
                nr = ranks.get((syms[i], syms[k]))
                if nr is not None:
                    heapq.heappush(heap, (nr, i))
        return [syms[i] for i in range(n) if alive[i]]

    def base_token_ids(self, text: str) -> list[int]:
        """Encode ignoring added items: the base tokenization of ``text``."""
        ids: list[int] = []
        for pretoken in self.pretokenizer.split(text):
            ids.extend(self._merge_span(pretoken))
        return ids

    def merge_token_string(self, symbol_string: str) -> list[int]:
        """Apply this tokenizer's merges to a printable-alphabet string.

        Lets callers re-tokenize another tokenizer's token (whose bytes may
        not decode to text) under this tokenizer's merge table.
        """
        syms = list(symbol_string)
        for s in syms:
            if s not in BYTE_DECODER:
                raise InputError(f"{s!r} is not a byte-alphabet symbol")
        if len(syms) > 1 and self._ranks:
            syms = self._apply_merges(syms)
        return [self.vocab[s] for s in syms]

    # -- decoding ------------------------------------------------------

    def token_bytes(self, token_id: int) -> bytes:
        if 0 <= token_id < len(self._id_to_token):
            s = self._id_to_token[token_id]
            return bytes(BYTE_DECODER[c] for c in s)
        surface = self._added_by_id.get(token_id)
        if surface is None:
            raise InputError(f"token id {token_id} out of range (< {self.total_size})")
        return surface.encode("utf-8")

    def decode(self, ids: list[int]) -> str:
        buf = b"".join(self.token_bytes(i) for i in ids)
        return buf.decode("utf-8", errors="replace")

    def token_string(self, token_id: int) -> str:
        """Printable-alphabet form of a base token (surface for added ids)."""
        if 0 <= token_id < len(self._id_to_token):
            return self._id_to_token[token_id]
        surface = self._added_by_id.get(token_id)
        if surface is None:
            raise InputError(f"token id {token_id} out of range")
        return surface

    # -- persistence ---------------------------------------------------

    def save(self, path: str | Path) -> None:
        save_tokenizer(self, path)

    def added_surfaces(self) -> list[str]:
        return [it.surface for it in self.added_items]

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Tokenizer)
            and self.vocab == other.vocab
            and self.merges == other.merges
            and self.pretokenizer == other.pretokenizer
            and self.added_items == other.added_items
        )


def _byte_vocab() -> dict[str, int]:
    return {BYTE_ENCODER[b]: b for b in range(256)}


def _count_pairs(words: Counter) -> Counter:
    pairs: Counter = Counter()
    for syms, freq in words.items():
        for a, b in zip(syms, syms[1:]):
            pairs[(a, b)] += freq
    return pairs


def _merge_word(syms: tuple[str, ...], pair: tuple[str, str]) -> tuple[str, ...]:
    out: list[str] = []
    merged = pair[0] + pair[1]
    i = 0
    while i < len(syms):
        if i + 1 < len(syms) and syms[i] == pair[0] and syms[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return tuple(out)


def _run_merge_training(
    words: Counter,
    vocab: dict[str, int],
    merges: list[tuple[str, str]],
    budget: int,
) -> None:
    """Greedy pair merging in place; ties broken by smallest (left, right)."""
    for _ in range(budget):
        pairs = _count_pairs(words)
        if not pairs:
            break
        best_count = max(pairs.values())
        pair = min(p for p, c in pairs.items() if c == best_count)
        merges.append(pair)
        token = pair[0] + pair[1]
        if token not in vocab:
            vocab[token] = len(vocab)
        affected = [w for w in words if pair[0] in w and pair[1] in w]
        for w in affected:
            new = _merge_word(w, pair)
            if new != w:
                freq = words.pop(w)
                words[new] += freq


def train_bpe(
    corpus: list[str],
    n_merges: int,
    pretokenizer: PretokenRule | None = None,
) -> Tokenizer:
    """Train a byte-level BPE tokenizer from scratch.

    Greedily merges the most frequent adjacent symbol pair ``n_merges``
    times (or until no pair repeats), starting from the 256 byte symbols.
    Frequency ties break to the lexicographically smallest (left, right).
    """
    if not corpus:
        raise InputError("training corpus is empty")
    if n_merges < 0:
        raise InputError("n_merges must be >= 0")
    rule = pretokenizer or PretokenRule()
    words: Counter = Counter()
    for seq in corpus:
        for pre in rule.split(seq):
            words[tuple(BYTE_ENCODER[b] for b in pre.encode("utf-8"))] += 1
    vocab = _byte_vocab()
    merges: list[tuple[str, str]] = []
    _run_merge_training(words, vocab, merges, n_merges)
    return Tokenizer(vocab, merges, rule)


def extend_merges(tok: Tokenizer, corpus: list[str], budget: int) -> Tokenizer:
    """Continue BPE training on a new corpus, appending up to ``budget`` merges.

    Existing vocab and merges are untouched; new merges rank below all
    original ones.  Added items carry over (their ids shift to stay after
    the now-larger base vocabulary).
    """
    if budget < 0:
        raise InputError("budget must be >= 0")
    if budget == 0:
        return Tokenizer(tok.vocab, tok.merges, tok.pretokenizer, tok.added_surfaces())
    if not corpus:
        raise InputError("training corpus is empty")
    pretokens: Counter = Counter()
    for seq in corpus:
        pretokens.update(tok.pretokenizer.split(seq))
    words: Counter = Counter()
    for pre, freq in pretokens.items():
        syms = tuple(tok.token_string(i) for i in tok._merge_span(pre))
        words[syms] += freq
    vocab = dict(tok.vocab)
    merges = list(tok.merges)
    _run_merge_training(words, vocab, merges, budget)
    return Tokenizer(vocab, merges, tok.pretokenizer, tok.added_surfaces())


def expand_vocabulary(tok: Tokenizer, items: list[str]) -> Tokenizer:
    """Append ``items`` as priority added items, preserving order."""
    existing = set(tok.added_surfaces())
    counts = Counter(items)
    offenders = sorted(
        {s for s, c in counts.items() if c > 1} | (set(items) & existing)
    )
    if offenders:
        raise ConflictError(f"duplicate vocabulary items: {offenders}", offenders)
    for s in items:
        if not isinstance(s, str) or not s:
            raise InputError("vocabulary items must be non-empty strings")
    return Tokenizer(
        tok.vocab, tok.merges, tok.pretokenizer, tok.added_surfaces() + list(items)
    )


def lint_added_items(tok: Tokenizer) -> list[str]:
    """Flag added items that duplicate what the base tokenizer already does."""
    notes = []
    for it in tok.added_items:
        base = tok.base_token_ids(it.surface)
        if len(base) == 1:
            notes.append(
                f"added item {it.surface!r} already encodes to a single base token"
            )
    return notes


# -- tokenizer files ----------------------------------------------------

_KNOWN_FIELDS = {"vocab", "merges", "added_tokens", "pretokenizer"}


def save_tokenizer(tok: Tokenizer, path: str | Path) -> None:
    data = {
        "vocab": tok.vocab,
        "merges": [f"{l} {r}" for l, r in tok.merges],
        "added_tokens": [
            {"content": it.surface, "id": it.id} for it in tok.added_items
        ],
        "pretokenizer": tok.pretokenizer.to_dict(),
    }
    Path(path).write_text(
        json.dumps(data, ensure_ascii=False, sort_keys=True), encoding="utf-8"
    )


def _split_merge(entry) -> tuple[str, str]:
    if isinstance(entry, (list, tuple)) and len(entry) == 2:
        return (entry[0], entry[1])
    if isinstance(entry, str):
        parts = entry.split(" ")
        if len(parts) == 2:
            return (parts[0], parts[1])
    raise SchemaError(f"malformed merge entry {entry!r}")


def _pretokenizer_from_hf(node: dict | None) -> PretokenRule:
    # GPT-2's split pattern; used by ByteLevel(use_regex=true) tokenizers.
    gpt2_pattern = (
        r"'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"
    )
    if node is None:
        return PretokenRule()
    kind = node.get("type")
    if kind == "Sequence":
        for child in node.get("pretokenizers", []):
            rule = _pretokenizer_from_hf(child)
            if rule.mode == "regex":
                return rule
        return PretokenRule()
    if kind == "Split":
        pat = node.get("pattern", {})
        if isinstance(pat, dict) and "Regex" in pat:
            return PretokenRule("regex", pat["Regex"])
        if isinstance(pat, dict) and "String" in pat:
            return PretokenRule("regex", regex.escape(pat["String"]))
    if kind == "ByteLevel":
        if node.get("use_regex", True):
            return PretokenRule("regex", gpt2_pattern)
        return PretokenRule()
    warnings.warn(f"unsupported pre_tokenizer {kind!r}; using whitespace_punct")
    return PretokenRule()


def load_tokenizer(path: str | Path) -> Tokenizer:
    """Load a tokenizer file, accepting both the native layout and the
    prevalent published layout (vocab/merges nested under "model")."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise SchemaError(f"{path}: expected a JSON object")

    if "model" in data:
        model = data["model"]
        vocab = model.get("vocab")
        merges = [_split_merge(m) for m in model.get("merges", [])]
        rule = _pretokenizer_from_hf(data.get("pre_tokenizer"))
        added = data.get("added_tokens", [])
        extra = sorted(k for k in set(data) - {"model", "added_tokens", "pre_tokenizer"}
                       if data[k] is not None)
    else:
        vocab = data.get("vocab")
        merges = [_split_merge(m) for m in data.get("merges", [])]
        pre = data.get("pretokenizer") or {}
        rule = PretokenRule(pre.get("mode", "whitespace_punct"), pre.get("pattern"))
        added = data.get("added_tokens", [])
        extra = sorted(set(data) - _KNOWN_FIELDS)
    if extra:
        warnings.warn(f"{path}: ignoring unsupported fields {extra}")

    if not isinstance(vocab, dict):
        raise SchemaError(f"{path}: missing or malformed vocab")

    surfaces: list[str] = []
    next_id = len(vocab)
    for entry in added:
        content = entry.get("content")
        if not content:
            raise SchemaError(f"{path}: added token without content")
        if content in vocab:
            warnings.warn(
                f"{path}: added token {content!r} already in base vocab; skipping"
            )
            continue
        declared = entry.get("id")
        if declared is not None and declared != next_id:
            warnings.warn(
                f"{path}: added token {content!r} id {declared} renumbered to {next_id}"
            )
        surfaces.append(content)
        next_id += 1
    return Tokenizer(vocab, merges, rule, surfaces)
