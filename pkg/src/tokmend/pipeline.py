"""End-to-end experiment orchestration, Pareto analysis, and reporting.

An experiment reads a declarative config, produces an expanded tokenizer
plus initialized embedding matrices as atomically written artifacts, and
appends one row to a results ledger.  Performance numbers are always
ingested, never computed here.
"""

from __future__ import annotations

import csv
import fcntl
import hashlib
import json
import os
import tempfile
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import bpe, candidates, detok, embeddings, metrics
from .errors import ConsistencyError, InputError, SchemaError
from .traces import TraceStore

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "select_items",
    "run_experiment",
    "pareto_front",
    "write_ledger",
    "read_ledger",
    "append_ledger",
    "render_scatter_svg",
    "write_report",
]

METHODS = ("bpe_extend", "tokens2words", "fragmend")
INITS = ("random", "fvt", "sparse_combo", "trace_mapped")
_TRACE_METHODS = ("tokens2words", "fragmend")


@dataclass
class ExperimentConfig:
    language: str
    tokenizer_path: str
    train_corpus: str
    method: str
    init: str
    output_dir: str
    eval_corpus: str | None = None
    budget: int | None = None
    seed: int = 0
    min_freq: int = 5
    selection: detok.SelectionConfig = field(default_factory=detok.SelectionConfig)
    trace_path: str | None = None
    mapper_trace_path: str | None = None
    mapper_path: str | None = None
    input_embeddings_path: str | None = None
    output_embeddings_path: str | None = None
    alpha_weights_path: str | None = None
    performance: float | None = None
    metric: str = ""
    higher_is_better: bool = True

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.init not in INITS:
            raise InputError(f"init must be one of {INITS}, got {self.init!r}")
        if self.method in _TRACE_METHODS and not self.trace_path:
            raise InputError(f"method {self.method!r} requires trace_path")
        if self.init == "trace_mapped":
            if not self.trace_path:
                raise InputError("init trace_mapped requires trace_path")
            if not (self.mapper_trace_path or self.mapper_path):
                raise InputError(
                    "init trace_mapped requires mapper_path or mapper_trace_path"
                )
        if self.init == "sparse_combo" and not self.alpha_weights_path:
            raise InputError("init sparse_combo requires alpha_weights_path")
        if self.budget is not None and self.budget < 0:
            raise InputError("budget must be >= 0")

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}: config is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise SchemaError(f"{path}: config must be a JSON object")
        known = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
        for key in sorted(set(raw) - known):
            warnings.warn(f"{path}: ignoring unknown config key {key!r}")
            raw.pop(key)
        sel = raw.pop("selection", None)
        missing = {"language", "tokenizer_path", "train_corpus", "method", "init",
                   "output_dir"} - set(raw)
        if missing:
            raise InputError(f"{path}: missing config keys: {sorted(missing)}")
        cfg = cls(**raw)
        if sel is not None:
            cfg.selection = detok.SelectionConfig(**sel)
        return cfg

    def fingerprint(self) -> str:
        payload = asdict(self)
        canonical = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


@dataclass
class ResultRow:
    fingerprint: str
    language: str
    method: str
    init: str
    items_added: int
    token_reduction: float
    performance: float | None = None
    metric: str = ""
    higher_is_better: bool = True

    def __post_init__(self):
        if self.items_added < 0:
            raise InputError("items_added must be >= 0")
        if self.token_reduction >= 1.0:
            raise InputError("token_reduction must be < 1")


def _read_corpus(path: str) -> list[str]:
    p = Path(path)
    if not p.exists():
        raise InputError(f"corpus file {path} does not exist")
    return p.read_text(encoding="utf-8").splitlines()


def _atomic_bytes(path: Path, data: bytes) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write(path: Path, render) -> None:
    """Render into a temp file and move it into place."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    os.close(fd)
    try:
        render(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def select_items(
    cfg: ExperimentConfig,
    tok: bpe.Tokenizer,
    corpus: list[str],
    cand: candidates.CandidateSet | None = None,
) -> list[detok.SelectedItem]:
    """Candidate extraction plus trace evaluation for the trace-based methods.

    A precomputed candidate set (e.g. from a cache) can be supplied to skip
    re-counting the corpus.
    """
    store = TraceStore(cfg.trace_path)
    if cand is None:
        cand = candidates.extract_candidate_words(corpus, cfg.min_freq)
    outcomes: list[detok.DetokOutcome] = []
    missing = 0
    for word in cand.surfaces():
        if word not in store:
            missing += 1
            continue
        rec = store.record(word)
        if cfg.method == "tokens2words":
            outcomes.append(
                detok.evaluate_word(rec, last_token_only=cfg.selection.last_token_only)
            )
        else:
            for span in candidates.enumerate_affixes(word, tok):
                outcomes.append(detok.evaluate_affix(rec, span))
    if missing:
        warnings.warn(f"{missing} candidate words have no trace record; skipped")
    selected = detok.select_expansion(outcomes, cfg.selection)
    if cfg.budget is not None:
        selected = selected[: cfg.budget]
    return selected


def _init_vectors(
    cfg: ExperimentConfig,
    tok_orig: bpe.Tokenizer,
    E: embeddings.EmbeddingMatrix,
    U: embeddings.EmbeddingMatrix,
    items: list[detok.SelectedItem],
) -> list[tuple[str, np.ndarray, np.ndarray]]:
    if not items:
        return []
    if cfg.init == "random":
        e_rows = embeddings.init_random(E, len(items), cfg.seed)
        u_rows = embeddings.init_random(U, len(items), cfg.seed + 1)
        return [(it.surface, e_rows[k], u_rows[k]) for k, it in enumerate(items)]
    if cfg.init == "fvt":
        return [
            (
                it.surface,
                embeddings.init_fvt(E, tok_orig, it.surface),
                embeddings.init_fvt(U, tok_orig, it.surface),
            )
            for it in items
        ]
    if cfg.init == "sparse_combo":
        alphas = embeddings.read_alpha_weights(cfg.alpha_weights_path)
        out = []
        for it in items:
            if it.surface not in alphas:
                raise InputError(f"no alpha weights for item {it.surface!r}")
            w = alphas[it.surface]
            out.append(
                (it.surface, embeddings.init_sparse_combo(E, w),
                 embeddings.init_sparse_combo(U, w))
            )
        return out
    # trace_mapped
    store = TraceStore(cfg.trace_path)
    if cfg.mapper_path:
        mappers = embeddings.MapperSet.load(cfg.mapper_path)
    else:
        mappers = embeddings.fit_mappers(TraceStore(cfg.mapper_trace_path), E, U)
    out = []
    for it in items:
        e_parts, u_parts = [], []
        for ref in it.refs:
            h = store.hidden_vector(ref.word, ref.position, ref.layer)
            e_parts.append(embeddings.init_from_trace(mappers, h, ref.layer, "input"))
            u_parts.append(embeddings.init_from_trace(mappers, h, ref.layer, "output"))
        out.append(
            (it.surface, np.mean(e_parts, axis=0), np.mean(u_parts, axis=0))
        )
    return out


def _bpe_extend_vectors(
    cfg: ExperimentConfig,
    tok: bpe.Tokenizer,
    expanded: bpe.Tokenizer,
    E: embeddings.EmbeddingMatrix,
    U: embeddings.EmbeddingMatrix,
) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Initialize rows for the vocab entries new merges created."""
    new_ids = range(tok.base_size, expanded.base_size)
    surfaces = [expanded.decode([i]) for i in new_ids]
    if cfg.init == "random":
        e_rows = embeddings.init_random(E, len(surfaces), cfg.seed) if surfaces else []
        u_rows = embeddings.init_random(U, len(surfaces), cfg.seed + 1) if surfaces else []
        return [(s, e_rows[k], u_rows[k]) for k, s in enumerate(surfaces)]
    if cfg.init == "fvt":
        out = []
        for i, s in zip(new_ids, surfaces):
            # Constituents are the new token's bytes under the *original*
            # merge table; the decoded surface may be lossy mid-character.
            ids = tok.merge_token_string(expanded.token_string(i))
            rows_e = np.stack([E.row(t) for t in ids]).astype(np.float64)
            rows_u = np.stack([U.row(t) for t in ids]).astype(np.float64)
            out.append((s, rows_e.mean(axis=0), rows_u.mean(axis=0)))
        return out
    if cfg.init == "sparse_combo":
        alphas = embeddings.read_alpha_weights(cfg.alpha_weights_path)
        out = []
        for s in surfaces:
            if s not in alphas:
                raise InputError(f"no alpha weights for item {s!r}")
            out.append(
                (s, embeddings.init_sparse_combo(E, alphas[s]),
                 embeddings.init_sparse_combo(U, alphas[s]))
            )
        return out
    raise InputError("trace_mapped init is not defined for bpe_extend items")


def run_experiment(cfg: ExperimentConfig) -> ResultRow:
    """Select items, initialize embeddings, assemble artifacts, measure."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tok = bpe.load_tokenizer(cfg.tokenizer_path)
    corpus = _read_corpus(cfg.train_corpus)
    eval_corpus = _read_corpus(cfg.eval_corpus) if cfg.eval_corpus else corpus
    E, U = _load_embeddings(cfg)

    if cfg.method == "bpe_extend":
        if cfg.budget is None:
            raise InputError("method bpe_extend requires a budget")
        expanded = bpe.extend_merges(tok, corpus, cfg.budget)
        new_rows = _bpe_extend_vectors(cfg, tok, expanded, E, U)
        assemble_tok = None
    else:
        selected = select_items(cfg, tok, corpus)
        expanded = bpe.expand_vocabulary(tok, [it.surface for it in selected])
        new_rows = _init_vectors(cfg, tok, E, U, selected)
        assemble_tok = expanded

    E2, U2 = embeddings.assemble_expanded(E, U, new_rows, assemble_tok)

    _atomic_write(out_dir / "expanded_tokenizer.json",
                  lambda tmp: bpe.save_tokenizer(expanded, tmp))
    _atomic_write(out_dir / "embeddings_input.bin", lambda tmp: E2.save(tmp))
    _atomic_write(out_dir / "embeddings_output.bin", lambda tmp: U2.save(tmp))
    _atomic_bytes(
        out_dir / "items.json",
        json.dumps([s for s, _, _ in new_rows], ensure_ascii=False).encode("utf-8"),
    )

    row = ResultRow(
        fingerprint=cfg.fingerprint(),
        language=cfg.language,
        method=cfg.method,
        init=cfg.init,
        items_added=len(new_rows),
        token_reduction=metrics.token_reduction(tok, expanded, eval_corpus),
        performance=cfg.performance,
        metric=cfg.metric,
        higher_is_better=cfg.higher_is_better,
    )
    append_ledger(row, out_dir / "results.csv")
    return row


def _load_embeddings(cfg: ExperimentConfig):
    if not cfg.input_embeddings_path or not cfg.output_embeddings_path:
        raise InputError("experiment requires input and output embedding paths")
    E = embeddings.EmbeddingMatrix.load(cfg.input_embeddings_path)
    U = embeddings.EmbeddingMatrix.load(cfg.output_embeddings_path)
    if E.role != "input" or U.role != "output":
        raise ConsistencyError(
            f"embedding roles are ({E.role}, {U.role}), expected (input, output)"
        )
    return E, U


# -- Pareto front and reporting -----------------------------------------


def pareto_front(rows: list[ResultRow]) -> list[ResultRow]:
    """Non-dominated rows maximizing (token_reduction, performance).

    Exact duplicates of a frontier point are all retained.  Output is
    ordered by token_reduction ascending (input order within ties).
    A row whose metric is lower-is-better contributes its negated
    performance to the dominance test.
    """
    for k, r in enumerate(rows):
        if r.performance is None:
            raise InputError(
                f"row {k} ({r.fingerprint or r.language or 'unnamed'}) has no performance"
            )

    def key(r: ResultRow) -> tuple[float, float]:
        perf = r.performance if r.higher_is_better else -r.performance
        return (r.token_reduction, perf)

    indexed = sorted(range(len(rows)), key=lambda k: (-key(rows[k])[0], -key(rows[k])[1], k))
    front_idx: list[int] = []
    best: tuple[float, float] | None = None
    for k in indexed:
        x, y = key(rows[k])
        if best is None or y > best[1]:
            front_idx.append(k)
            best = (x, y)
        elif y == best[1] and x == best[0]:
            front_idx.append(k)
    front_idx.sort(key=lambda k: (key(rows[k])[0], k))
    return [rows[k] for k in front_idx]


_LEDGER_COLUMNS = [
    "fingerprint", "language", "method", "init", "items_added",
    "token_reduction", "performance", "metric", "higher_is_better",
]


def _row_to_csv(row: ResultRow) -> list[str]:
    return [
        row.fingerprint,
        row.language,
        row.method,
        row.init,
        str(row.items_added),
        repr(row.token_reduction),
        "" if row.performance is None else repr(row.performance),
        row.metric,
        "true" if row.higher_is_better else "false",
    ]


def append_ledger(row: ResultRow, path: str | Path) -> None:
    """Append one row under an exclusive lock; writes the header when new."""
    path = Path(path)
    with open(path, "a+", encoding="utf-8", newline="") as fh:
        fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
        try:
            fh.seek(0, os.SEEK_END)
            w = csv.writer(fh)
            if fh.tell() == 0:
                w.writerow(_LEDGER_COLUMNS)
            w.writerow(_row_to_csv(row))
        finally:
            fcntl.flock(fh.fileno(), fcntl.LOCK_UN)


def write_ledger(rows: list[ResultRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_LEDGER_COLUMNS)
        for row in rows:
            w.writerow(_row_to_csv(row))


def read_ledger(path: str | Path) -> list[ResultRow]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != _LEDGER_COLUMNS:
            raise SchemaError(f"{path}: unexpected ledger header {header}")
        for rec in reader:
            if not rec:
                continue
            rows.append(
                ResultRow(
                    fingerprint=rec[0],
                    language=rec[1],
                    method=rec[2],
                    init=rec[3],
                    items_added=int(rec[4]),
                    token_reduction=float(rec[5]),
                    performance=float(rec[6]) if rec[6] else None,
                    metric=rec[7],
                    higher_is_better=rec[8] == "true",
                )
            )
    return rows


def render_scatter_svg(
    rows: list[ResultRow],
    front: list[ResultRow],
    width: int = 640,
    height: int = 480,
) -> str:
    """Scatter of (token_reduction, performance) with the front as a polyline."""
    pad = 50
    xs = [r.token_reduction for r in rows]
    ys = [r.performance for r in rows]
    x_lo, x_hi = (min(xs), max(xs)) if xs else (0.0, 1.0)
    y_lo, y_hi = (min(ys), max(ys)) if ys else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x: float) -> float:
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def py(y: float) -> float:
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" '
        'stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="{height - 10}" text-anchor="middle" '
        'font-size="12">token reduction</text>',
        f'<text x="14" y="{height / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.0f})">performance</text>',
    ]
    if front:
        pts = " ".join(
            f"{px(r.token_reduction):.2f},{py(r.performance):.2f}" for r in front
        )
        parts.append(
            f'<polyline class="front" points="{pts}" fill="none" '
            'stroke="#d62728" stroke-width="1.5"/>'
        )
    for r in rows:
        parts.append(
            f'<circle class="point" cx="{px(r.token_reduction):.2f}" '
            f'cy="{py(r.performance):.2f}" r="4" fill="#1f77b4" fill-opacity="0.8"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def write_report(
    rows: list[ResultRow],
    front: list[ResultRow],
    csv_path: str | Path,
    svg_path: str | Path,
) -> None:
    write_ledger(rows, csv_path)
    Path(svg_path).write_text(render_scatter_svg(rows, front), encoding="utf-8")
