"""Model-trace files: JSON-lines records plus a float32 binary sidecar.

Line 1 of the JSONL is a header fixing the hidden dimension, layer count,
model identifier, and sidecar filename.  Every following line is one word's
trace: its token ids, per-(position, layer) generated strings, and
(position, layer) -> (offset, length) references into the sidecar, which
holds raw little-endian float32 vectors and must round-trip bit-exactly.
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import MissingHiddenError, SchemaError

__all__ = [
    "TraceRecord",
    "TraceStore",
    "write_trace_file",
    "validate_trace_file",
]

FORMAT_NAME = "tokmend.trace"
FORMAT_VERSION = 1


@dataclass
class TraceRecord:
    """One word's trace.  Keys of ``generations``/``hidden`` are (position, layer),
    both 1-based; positions run over the word's tokens, layers over the model's."""

    word: str
    token_ids: tuple[int, ...]
    layers: int
    generations: dict[tuple[int, int], str] = field(default_factory=dict)
    hidden: Mapping = field(default_factory=dict)

    @property
    def n_tokens(self) -> int:
        return len(self.token_ids)

    def validate(self) -> None:
        if not self.word:
            raise SchemaError("trace record has empty word")
        if not self.token_ids:
            raise SchemaError(f"{self.word!r}: empty token_ids")
        if self.layers < 1:
            raise SchemaError(f"{self.word!r}: layers must be >= 1")
        n = self.n_tokens
        for (i, l) in list(self.generations) + list(self.hidden.keys()):
            if not 1 <= i <= n:
                raise SchemaError(f"{self.word!r}: position {i} outside [1, {n}]")
            if not 1 <= l <= self.layers:
                raise SchemaError(f"{self.word!r}: layer {l} outside [1, {self.layers}]")


class _LazyHidden(Mapping):
    """Mapping view over sidecar-backed hidden vectors, read on access."""

    def __init__(self, sidecar: Path, refs: dict[tuple[int, int], tuple[int, int]], dim: int):
        self._sidecar = sidecar
        self._refs = refs
        self._dim = dim

    def __getitem__(self, key) -> np.ndarray:
        offset, length = self._refs[key]
        with open(self._sidecar, "rb") as fh:
            fh.seek(offset)
            buf = fh.read(length)
        if len(buf) != length:
            raise SchemaError(f"sidecar truncated at offset {offset}")
        return np.frombuffer(buf, dtype="<f4").copy()

    def __iter__(self):
        return iter(self._refs)

    def __len__(self):
        return len(self._refs)


class TraceStore:
    """Reader for a trace file; records are held in memory, vectors are not."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.dim: int = 0
        self.layers: int = 0
        self.model: str = ""
        self.sidecar: Path | None = None
        self._records: dict[str, TraceRecord] = {}
        self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            header_line = fh.readline()
            header = _parse_header(self.path, header_line)
            self.dim = header["dim"]
            self.layers = header["layers"]
            self.model = header.get("model", "")
            sidecar_name = header.get("sidecar")
            if sidecar_name:
                self.sidecar = self.path.parent / sidecar_name
            for lineno, line in enumerate(fh, 2):
                if not line.strip():
                    continue
                rec = self._parse_record(line, lineno)
                self._records[rec.word] = rec

    def _parse_record(self, line: str, lineno: int) -> TraceRecord:
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            raise SchemaError(f"{self.path}:{lineno}: bad JSON: {e}") from e
        try:
            word = raw["word"]
            token_ids = tuple(int(t) for t in raw["token_ids"])
            generations = {(int(i), int(l)): y for i, l, y in raw.get("generations", [])}
            refs = {
                (int(i), int(l)): (int(off), int(ln))
                for i, l, off, ln in raw.get("hidden", [])
            }
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"{self.path}:{lineno}: malformed record: {e}") from e
        hidden: Mapping = {}
        if refs:
            if self.sidecar is None:
                raise SchemaError(f"{self.path}:{lineno}: hidden refs but no sidecar")
            hidden = _LazyHidden(self.sidecar, refs, self.dim)
        rec = TraceRecord(word, token_ids, self.layers, generations, hidden)
        rec.validate()
        return rec

    def words(self) -> list[str]:
        return list(self._records)

    def __contains__(self, word: str) -> bool:
        return word in self._records

    def record(self, word: str) -> TraceRecord:
        if word not in self._records:
            raise SchemaError(f"no trace record for {word!r}")
        return self._records[word]

    def hidden_vector(self, word: str, position: int, layer: int) -> np.ndarray:
        """The stored vector for (word, position, layer); missing is an error."""
        rec = self.record(word)
        if (position, layer) not in rec.hidden:
            raise MissingHiddenError(
                f"no hidden vector for {word!r} at position {position}, layer {layer}"
            )
        return rec.hidden[(position, layer)]


def _parse_header(path, line: str) -> dict:
    try:
        header = json.loads(line)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: bad header line: {e}") from e
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise SchemaError(f"{path}: not a {FORMAT_NAME} file")
    if header.get("version") != FORMAT_VERSION:
        raise SchemaError(f"{path}: unsupported version {header.get('version')}")
    for key in ("dim", "layers"):
        if not isinstance(header.get(key), int) or header[key] < 1:
            raise SchemaError(f"{path}: header {key} must be a positive integer")
    return header


def write_trace_file(
    path: str | Path,
    records: list[TraceRecord],
    dim: int,
    layers: int,
    model: str = "",
    sidecar_name: str | None = None,
) -> Path:
    """Write records and their hidden vectors; returns the sidecar path."""
    path = Path(path)
    sidecar_name = sidecar_name or path.stem + ".f32"
    sidecar = path.parent / sidecar_name
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "dim": dim,
        "layers": layers,
        "model": model,
        "sidecar": sidecar_name,
    }
    offset = 0
    with open(path, "w", encoding="utf-8") as fh, open(sidecar, "wb") as side:
        fh.write(json.dumps(header, ensure_ascii=False) + "\n")
        for rec in records:
            rec.validate()
            refs = []
            for (i, l), vec in rec.hidden.items():
                arr = np.ascontiguousarray(vec, dtype="<f4")
                if arr.shape != (dim,):
                    raise SchemaError(
                        f"{rec.word!r}: hidden vector at {(i, l)} has shape "
                        f"{arr.shape}, expected ({dim},)"
                    )
                buf = arr.tobytes()
                side.write(buf)
                refs.append([i, l, offset, len(buf)])
                offset += len(buf)
            line = {
                "word": rec.word,
                "token_ids": list(rec.token_ids),
                "generations": [[i, l, y] for (i, l), y in rec.generations.items()],
                "hidden": refs,
            }
            fh.write(json.dumps(line, ensure_ascii=False) + "\n")
    return sidecar


_RECORD_FIELDS = {"word", "token_ids", "generations", "hidden"}


def validate_trace_file(path: str | Path) -> list[str]:
    """Validate a trace file and its sidecar; returns advisory warnings.

    Hard schema violations raise SchemaError.  Warnings cover tolerated
    oddities: unknown fields, duplicate entries, unreferenced sidecar bytes.
    """
    path = Path(path)
    warnings: list[str] = []
    store = TraceStore(path)  # raises SchemaError on structural problems
    sidecar_size = None
    if store.sidecar is not None:
        if not store.sidecar.exists():
            raise SchemaError(f"{path}: sidecar {store.sidecar} does not exist")
        sidecar_size = store.sidecar.stat().st_size

    referenced = 0
    with open(path, encoding="utf-8") as fh:
        fh.readline()
        for lineno, line in enumerate(fh, 2):
            if not line.strip():
                warnings.append(f"line {lineno}: blank line")
                continue
            raw = json.loads(line)
            for key in sorted(set(raw) - _RECORD_FIELDS):
                warnings.append(f"line {lineno}: unknown field {key!r}")
            seen_gen = set()
            for i, l, _ in raw.get("generations", []):
                if (i, l) in seen_gen:
                    warnings.append(f"line {lineno}: duplicate generation at {(i, l)}")
                seen_gen.add((i, l))
            seen_hidden = set()
            for i, l, off, ln in raw.get("hidden", []):
                if (i, l) in seen_hidden:
                    warnings.append(f"line {lineno}: duplicate hidden ref at {(i, l)}")
                seen_hidden.add((i, l))
                if ln != 4 * store.dim:
                    raise SchemaError(
                        f"{path}:{lineno}: hidden length {ln} != {4 * store.dim}"
                    )
                if sidecar_size is not None and off + ln > sidecar_size:
                    raise SchemaError(
                        f"{path}:{lineno}: hidden ref [{off}, {off + ln}) "
                        f"exceeds sidecar size {sidecar_size}"
                    )
                referenced += ln
    if sidecar_size is not None and referenced < sidecar_size:
        warnings.append(
            f"sidecar has {sidecar_size - referenced} unreferenced bytes"
        )
    return warnings
