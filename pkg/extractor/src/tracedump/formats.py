"""Writers for the toolkit's on-disk interfaces.

The extractor talks to the analysis toolkit only through files, so the
trace, embedding, and tokenizer formats are implemented here against their
published layout: a JSONL trace file with a float32 little-endian sidecar,
binary embedding matrices with a magic/role/tied header, and the tokenizer
JSON with vocab, merges, added_tokens, and pretokenizer at the top level.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

TRACE_FORMAT = "tokmend.trace"
TRACE_VERSION = 1
EMB_MAGIC = b"TMEMB001"

GPT2_SPLIT_PATTERN = (
    r"'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"
)


class TraceWriter:
    """Streams trace records and their hidden vectors to disk."""

    def __init__(self, path: str | Path, dim: int, layers: int, model: str = ""):
        self.path = Path(path)
        self.sidecar = self.path.parent / (self.path.stem + ".f32")
        self.dim = dim
        self._offset = 0
        header = {
            "format": TRACE_FORMAT,
            "version": TRACE_VERSION,
            "dim": dim,
            "layers": layers,
            "model": model,
            "sidecar": self.sidecar.name,
        }
        self._fh = open(self.path, "w", encoding="utf-8")
        self._side = open(self.sidecar, "wb")
        self._fh.write(json.dumps(header, ensure_ascii=False) + "\n")

    def add(
        self,
        word: str,
        token_ids: list[int],
        generations: dict[tuple[int, int], str],
        hidden: dict[tuple[int, int], np.ndarray],
    ) -> None:
        refs = []
        for (i, l), vec in hidden.items():
            arr = np.ascontiguousarray(vec, dtype="<f4")
            if arr.shape != (self.dim,):
                raise ValueError(
                    f"{word!r}: hidden at {(i, l)} has shape {arr.shape}, "
                    f"expected ({self.dim},)"
                )
            buf = arr.tobytes()
            self._side.write(buf)
            refs.append([i, l, self._offset, len(buf)])
            self._offset += len(buf)
        record = {
            "word": word,
            "token_ids": list(token_ids),
            "generations": [[i, l, y] for (i, l), y in generations.items()],
            "hidden": refs,
        }
        self._fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def close(self) -> None:
        self._fh.close()
        self._side.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_embedding_matrix(
    path: str | Path, role: str, data: np.ndarray, tied: bool = False
) -> None:
    if role not in ("input", "output"):
        raise ValueError(f"role must be input or output, got {role!r}")
    arr = np.ascontiguousarray(data, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("embedding data must be 2-dimensional")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(b"E" if role == "input" else b"U")
        fh.write(struct.pack("<B", 1 if tied else 0))
        fh.write(struct.pack("<QQ", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes(order="C"))


def _pretokenizer_rule(node: dict | None) -> dict:
    if node is None:
        return {"mode": "whitespace_punct"}
    kind = node.get("type")
    if kind == "Sequence":
        for child in node.get("pretokenizers", []):
            rule = _pretokenizer_rule(child)
            if rule["mode"] == "regex":
                return rule
        return {"mode": "whitespace_punct"}
    if kind == "Split":
        pattern = node.get("pattern", {})
        if isinstance(pattern, dict) and "Regex" in pattern:
            return {"mode": "regex", "pattern": pattern["Regex"]}
    if kind == "ByteLevel" and node.get("use_regex", True):
        return {"mode": "regex", "pattern": GPT2_SPLIT_PATTERN}
    return {"mode": "whitespace_punct"}


def convert_tokenizer_json(source: dict) -> dict:
    """Flatten a fast-tokenizer JSON into the toolkit's tokenizer layout."""
    model = source.get("model", {})
    if model.get("type") != "BPE":
        raise ValueError(f"only BPE tokenizers are exportable, got {model.get('type')!r}")
    vocab: dict[str, int] = model["vocab"]
    merges = []
    for entry in model.get("merges", []):
        if isinstance(entry, str):
            left, right = entry.split(" ")
        else:
            left, right = entry
        merges.append(f"{left} {right}")
    added = []
    next_id = len(vocab)
    for tok in source.get("added_tokens", []):
        content = tok["content"]
        if content in vocab:
            continue
        added.append({"content": content, "id": next_id})
        next_id += 1
    return {
        "vocab": vocab,
        "merges": merges,
        "added_tokens": added,
        "pretokenizer": _pretokenizer_rule(source.get("pre_tokenizer")),
    }


def write_tokenizer_json(source: dict, path: str | Path) -> None:
    converted = convert_tokenizer_json(source)
    Path(path).write_text(
        json.dumps(converted, ensure_ascii=False, sort_keys=True), encoding="utf-8"
    )
