"""Embedding initialization for expanded vocabularies.

Covers the heuristic initializers (normal sampling around the embedding
statistics, constituent-subword averaging, sparse convex combinations) and
the activation-mapped route: per-layer orthogonal maps fitted from hidden
states to embedding rows, with RMS normalization before the map and an
RMS-mean rescale after.
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bpe import Tokenizer
from .errors import (
    ConditioningWarning,
    ConsistencyError,
    InputError,
    InsufficientStatsError,
    SchemaError,
)
from .traces import TraceStore

__all__ = [
    "EmbeddingMatrix",
    "LayerMapper",
    "MapperSet",
    "init_random",
    "init_fvt",
    "init_sparse_combo",
    "fit_procrustes",
    "fit_mappers",
    "init_from_trace",
    "assemble_expanded",
    "read_alpha_weights",
]

_EMB_MAGIC = b"TMEMB001"
_MAP_MAGIC = b"TMMAP001"
_ROLES = ("input", "output")


@dataclass
class EmbeddingMatrix:
    """Role-tagged (|V|, d) float32 matrix; id_map sends token id to row."""

    role: str
    data: np.ndarray
    id_map: dict[int, int] = field(default_factory=dict)
    tied: bool = False

    def __post_init__(self):
        if self.role not in _ROLES:
            raise InputError(f"role must be one of {_ROLES}, got {self.role!r}")
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise InputError("embedding data must be 2-dimensional")
        if not np.isfinite(self.data).all():
            raise SchemaError("embedding matrix contains non-finite entries")
        if not self.id_map:
            self.id_map = {i: i for i in range(self.data.shape[0])}
        if len(self.id_map) != self.data.shape[0]:
            raise ConsistencyError("id_map size does not match row count")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def row(self, token_id: int) -> np.ndarray:
        if token_id not in self.id_map:
            raise InputError(f"token id {token_id} not present in embedding matrix")
        return self.data[self.id_map[token_id]]

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(_EMB_MAGIC)
            fh.write(b"E" if self.role == "input" else b"U")
            fh.write(struct.pack("<B", 1 if self.tied else 0))
            fh.write(struct.pack("<QQ", self.n_rows, self.dim))
            fh.write(self.data.astype("<f4").tobytes(order="C"))

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingMatrix":
        raw = Path(path).read_bytes()
        if len(raw) < 26 or raw[:8] != _EMB_MAGIC:
            raise SchemaError(f"{path}: not an embedding file")
        role_byte = raw[8:9]
        if role_byte not in (b"E", b"U"):
            raise SchemaError(f"{path}: unknown role byte {role_byte!r}")
        role = "input" if role_byte == b"E" else "output"
        tied = bool(raw[9])
        n, d = struct.unpack("<QQ", raw[10:26])
        expected = 26 + n * d * 4
        if len(raw) != expected:
            raise SchemaError(f"{path}: expected {expected} bytes, found {len(raw)}")
        data = np.frombuffer(raw, dtype="<f4", offset=26).reshape(n, d).copy()
        return cls(role, data, tied=tied)


def init_random(E: EmbeddingMatrix, n_new: int, seed: int) -> np.ndarray:
    """Sample rows from per-dimension Normal(mean, std) of the existing rows."""
    if n_new < 1:
        raise InputError("n_new must be >= 1")
    if E.n_rows < 2:
        raise InsufficientStatsError("need at least 2 rows to estimate statistics")
    mu = E.data.mean(axis=0, dtype=np.float64)
    sigma = E.data.std(axis=0, dtype=np.float64)
    rng = np.random.default_rng(seed)
    return rng.normal(mu, sigma, size=(n_new, E.dim))


def init_fvt(E: EmbeddingMatrix, tok: Tokenizer, surface: str) -> np.ndarray:
    """Mean of the constituent subword rows under the original tokenizer."""
    ids = tok.base_token_ids(surface)
    if not ids:
        raise InputError(f"{surface!r} tokenizes to zero base tokens")
    rows = np.stack([E.row(i) for i in ids]).astype(np.float64)
    return rows.mean(axis=0)


def init_sparse_combo(E: EmbeddingMatrix, weights: dict[int, float]) -> np.ndarray:
    """Convex combination of existing rows with externally supplied weights."""
    if not weights:
        raise InputError("weight vector is empty")
    total = 0.0
    for token_id, alpha in weights.items():
        if alpha < 0:
            raise InputError(f"negative weight {alpha} for id {token_id}")
        total += alpha
    if abs(total - 1.0) > 1e-6:
        raise InputError(f"weights sum to {total}, expected 1 within 1e-6")
    out = np.zeros(E.dim, dtype=np.float64)
    for token_id, alpha in weights.items():
        out += alpha * E.row(token_id).astype(np.float64)
    return out


def _row_rms(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(np.square(a), axis=-1))


def fit_procrustes(hidden: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, float]:
    """Fit the orthogonal map from RMS-normalized hidden rows onto targets.

    Returns (T, rescale) with T = argmin over orthogonal matrices of
    ||A_hat @ T.T - B||_F, obtained from the SVD of B.T @ A_hat, and
    rescale = mean row RMS of the targets.  T is applied to column vectors
    (see init_from_trace).
    """
    A = np.asarray(hidden, dtype=np.float64)
    B = np.asarray(targets, dtype=np.float64)
    if A.ndim != 2 or A.shape != B.shape:
        raise InputError(f"hidden {A.shape} and targets {B.shape} must match (n, d)")
    if A.shape[0] < 2:
        raise InputError("need at least 2 rows to fit")
    rms = _row_rms(A)
    if np.any(rms == 0):
        raise InputError("hidden rows with zero RMS cannot be normalized")
    A_hat = A / rms[:, None]
    M = B.T @ A_hat
    U, s, Vt = np.linalg.svd(M)
    if s[0] == 0 or s[-1] / s[0] < 1e-12:
        warnings.warn(
            "rank-deficient fit; the transform is orthogonal but poorly determined",
            ConditioningWarning,
        )
    T = U @ Vt
    rescale = float(_row_rms(B).mean())
    return T, rescale


@dataclass
class LayerMapper:
    transform_in: np.ndarray
    transform_out: np.ndarray
    rescale_in: float
    rescale_out: float

    def transform(self, role: str) -> np.ndarray:
        return self.transform_in if role == "input" else self.transform_out

    def rescale(self, role: str) -> float:
        return self.rescale_in if role == "input" else self.rescale_out


class MapperSet:
    """Per-layer orthogonal transforms (input and output) plus RMS rescales."""

    def __init__(self, dim: int, layers: dict[int, LayerMapper]):
        self.dim = dim
        self.layers = dict(layers)
        for l, m in self.layers.items():
            for T in (m.transform_in, m.transform_out):
                if T.shape != (dim, dim):
                    raise ConsistencyError(f"layer {l}: transform shape {T.shape}")
                defect = np.abs(T.T @ T - np.eye(dim)).max()
                if defect > 1e-4:
                    raise ConsistencyError(
                        f"layer {l}: transform not orthogonal (defect {defect:.2e})"
                    )
            if m.rescale_in <= 0 or m.rescale_out <= 0:
                raise ConsistencyError(f"layer {l}: rescale must be positive")

    def layer(self, l: int) -> LayerMapper:
        if l not in self.layers:
            raise InputError(f"no mapper fitted for layer {l}")
        return self.layers[l]

    def save(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(_MAP_MAGIC)
            fh.write(struct.pack("<QQ", self.dim, len(self.layers)))
            for l in sorted(self.layers):
                m = self.layers[l]
                fh.write(struct.pack("<I", l))
                fh.write(m.transform_in.astype("<f4").tobytes(order="C"))
                fh.write(m.transform_out.astype("<f4").tobytes(order="C"))
                fh.write(struct.pack("<ff", m.rescale_in, m.rescale_out))

    @classmethod
    def load(cls, path: str | Path) -> "MapperSet":
        raw = Path(path).read_bytes()
        if len(raw) < 24 or raw[:8] != _MAP_MAGIC:
            raise SchemaError(f"{path}: not a mapper file")
        dim, n_layers = struct.unpack("<QQ", raw[8:24])
        block = 4 + 2 * dim * dim * 4 + 8
        if len(raw) != 24 + n_layers * block:
            raise SchemaError(f"{path}: truncated mapper file")
        layers = {}
        pos = 24
        for _ in range(n_layers):
            (l,) = struct.unpack("<I", raw[pos : pos + 4])
            pos += 4
            t_in = np.frombuffer(raw, dtype="<f4", count=dim * dim, offset=pos)
            pos += dim * dim * 4
            t_out = np.frombuffer(raw, dtype="<f4", count=dim * dim, offset=pos)
            pos += dim * dim * 4
            r_in, r_out = struct.unpack("<ff", raw[pos : pos + 8])
            pos += 8
            layers[l] = LayerMapper(
                t_in.reshape(dim, dim).astype(np.float64),
                t_out.reshape(dim, dim).astype(np.float64),
                r_in,
                r_out,
            )
        return cls(dim, layers)


def fit_mappers(
    store: TraceStore,
    E: EmbeddingMatrix,
    U: EmbeddingMatrix,
    layers: list[int] | None = None,
) -> MapperSet:
    """Fit per-layer mappers from single-token trace records.

    Uses every record whose word is a single token with an embedding row;
    the hidden state at (position 1, layer l) pairs with that token's input
    and output rows.
    """
    if E.dim != U.dim:
        raise ConsistencyError("input and output embeddings disagree on dim")
    singles = [
        store.record(w) for w in store.words() if len(store.record(w).token_ids) == 1
    ]
    singles = [r for r in singles if r.token_ids[0] in E.id_map]
    if len(singles) < 2:
        raise InsufficientStatsError(
            "mapper fitting needs at least 2 single-token records with embeddings"
        )
    wanted = layers or list(range(1, store.layers + 1))
    fitted: dict[int, LayerMapper] = {}
    for l in wanted:
        rows = [r for r in singles if (1, l) in r.hidden]
        if len(rows) < 2:
            continue
        A = np.stack([r.hidden[(1, l)] for r in rows])
        B_in = np.stack([E.row(r.token_ids[0]) for r in rows])
        B_out = np.stack([U.row(r.token_ids[0]) for r in rows])
        T_in, s_in = fit_procrustes(A, B_in)
        T_out, s_out = fit_procrustes(A, B_out)
        fitted[l] = LayerMapper(T_in, T_out, s_in, s_out)
    if not fitted:
        raise InsufficientStatsError("no layer had enough hidden vectors to fit")
    return MapperSet(E.dim, fitted)


def init_from_trace(
    mappers: MapperSet,
    h: np.ndarray,
    layer: int,
    role: str,
    normalize: bool = True,
) -> np.ndarray:
    """Map a hidden vector into embedding space via the fitted layer transform."""
    if role not in _ROLES:
        raise InputError(f"role must be one of {_ROLES}")
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (mappers.dim,):
        raise InputError(f"hidden vector shape {h.shape}, expected ({mappers.dim},)")
    m = mappers.layer(layer)
    if normalize:
        rms = float(_row_rms(h))
        if rms == 0:
            raise InputError("cannot normalize a zero hidden vector")
        h = h / rms
    return m.rescale(role) * (m.transform(role) @ h)


def assemble_expanded(
    E: EmbeddingMatrix,
    U: EmbeddingMatrix,
    new_items: list[tuple[str, np.ndarray, np.ndarray]],
    tok: Tokenizer | None = None,
) -> tuple[EmbeddingMatrix, EmbeddingMatrix]:
    """Append initialized rows for the added items; original rows untouched.

    When the expanded tokenizer is supplied, item surfaces must match its
    added items in order, and new rows take the added-item ids.
    """
    if E.n_rows != U.n_rows or E.dim != U.dim:
        raise ConsistencyError("input and output matrices disagree on shape")
    if tok is not None:
        added = tok.added_surfaces()
        got = [s for s, _, _ in new_items]
        if added != got:
            raise ConsistencyError(
                f"items {got!r} do not match tokenizer added items {added!r}"
            )
    for surface, e_vec, u_vec in new_items:
        for vec in (e_vec, u_vec):
            if np.asarray(vec).shape != (E.dim,):
                raise InputError(f"{surface!r}: vector shape {np.asarray(vec).shape}")

    def build(base: EmbeddingMatrix, idx: int) -> EmbeddingMatrix:
        if not new_items:
            return EmbeddingMatrix(base.role, base.data.copy(), dict(base.id_map))
        rows = np.stack([np.asarray(item[idx], dtype=np.float64) for item in new_items])
        data = np.concatenate([base.data, rows.astype(np.float32)], axis=0)
        id_map = dict(base.id_map)
        next_id = max(id_map) + 1 if id_map else 0
        for k, item in enumerate(new_items):
            item_id = tok.added_items[k].id if tok is not None else next_id + k
            id_map[item_id] = base.n_rows + k
        return EmbeddingMatrix(base.role, data, id_map)

    return build(E, 1), build(U, 2)


def read_alpha_weights(path: str | Path) -> dict[str, dict[int, float]]:
    """Read a JSONL file of {"surface": ..., "weights": {id: alpha}} lines."""
    out: dict[str, dict[int, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                surface = raw["surface"]
                weights = {int(k): float(v) for k, v in raw["weights"].items()}
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
                raise SchemaError(f"{path}:{lineno}: malformed weight line: {e}") from e
            out[surface] = weights
    return out
