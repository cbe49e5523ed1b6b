"""Command-line entry points.

Exit codes: 0 success, 1 input error (bad arguments, missing files),
2 validation error (malformed or inconsistent file contents).
Set TOKMEND_CACHE_DIR to cache candidate-word extraction across runs
(defaults to ~/.cache/tokmend).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import bpe, candidates, metrics, pipeline
from .errors import InputError, TokmendError


def cache_dir() -> Path:
    root = os.environ.get("TOKMEND_CACHE_DIR")
    path = Path(root) if root else Path.home() / ".cache" / "tokmend"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_corpus_arg(args) -> metrics.ParallelCorpus:
    if args.corpus_dir:
        return metrics.ParallelCorpus.from_dir(args.corpus_dir, args.reference)
    if args.corpus_tsv:
        return metrics.ParallelCorpus.from_tsv(args.corpus_tsv, args.reference)
    raise InputError("provide --corpus-dir or --corpus-tsv")


def cmd_analyze_fragmentation(args) -> int:
    tok = bpe.load_tokenizer(args.tokenizer)
    corpus = _load_corpus_arg(args)
    report = metrics.fragmentation_report(tok, corpus)
    if args.out_csv:
        report.to_csv(args.out_csv)
    if args.out_json:
        report.to_json(args.out_json)
    print(f"{'language':<10}{'tokens_ratio':>14}{'chars_ratio':>14}{'tokens':>10}")
    for lang, m in sorted(report.per_language.items()):
        print(f"{lang:<10}{m.tokens_ratio:>14.2f}{m.characters_ratio:>14.2f}{m.token_count:>10}")
    return 0


def _cached_candidates(corpus_path: str, min_freq: int) -> candidates.CandidateSet:
    lines = Path(corpus_path).read_text(encoding="utf-8").splitlines()
    digest = hashlib.sha256(
        ("\n".join(lines) + f"|min_freq={min_freq}").encode("utf-8")
    ).hexdigest()[:16]
    cached = cache_dir() / f"candidates-{digest}.tsv"
    if cached.exists():
        return candidates.CandidateSet.from_tsv(cached, len(lines))
    cand = candidates.extract_candidate_words(lines, min_freq)
    cand.to_tsv(cached)
    return cand


def cmd_select(args) -> int:
    cfg = pipeline.ExperimentConfig.from_file(args.config)
    tok = bpe.load_tokenizer(cfg.tokenizer_path)
    corpus = Path(cfg.train_corpus).read_text(encoding="utf-8").splitlines()
    if cfg.method == "bpe_extend":
        if cfg.budget is None:
            raise InputError("method bpe_extend requires a budget")
        expanded = bpe.extend_merges(tok, corpus, cfg.budget)
        items = [
            {"surface": expanded.decode([i]), "refs": []}
            for i in range(tok.base_size, expanded.base_size)
        ]
    else:
        cand = _cached_candidates(cfg.train_corpus, cfg.min_freq)
        selected = pipeline.select_items(cfg, tok, corpus, cand)
        items = [
            {
                "surface": it.surface,
                "refs": [
                    {"word": r.word, "position": r.position, "layer": r.layer}
                    for r in it.refs
                ],
            }
            for it in selected
        ]
    out = Path(args.out) if args.out else Path(cfg.output_dir) / "selection.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(items, ensure_ascii=False, indent=2), encoding="utf-8")
    print(f"selected {len(items)} items -> {out}")
    return 0


def cmd_init_embeddings(args) -> int:
    cfg = pipeline.ExperimentConfig.from_file(args.config)
    pipeline.run_experiment(cfg)
    print(f"artifacts written to {cfg.output_dir}")
    return 0


def cmd_run(args) -> int:
    cfg = pipeline.ExperimentConfig.from_file(args.config)
    row = pipeline.run_experiment(cfg)
    print(
        f"{row.fingerprint}  lang={row.language} method={row.method} "
        f"init={row.init} items={row.items_added} "
        f"token_reduction={row.token_reduction:.4f}"
    )
    return 0


def cmd_pareto(args) -> int:
    rows = pipeline.read_ledger(args.results)
    front = pipeline.pareto_front(rows)
    if args.out_csv:
        pipeline.write_ledger(front, args.out_csv)
    if args.out_svg:
        Path(args.out_svg).write_text(
            pipeline.render_scatter_svg(rows, front), encoding="utf-8"
        )
    for r in front:
        print(f"{r.fingerprint}  reduction={r.token_reduction:.4f} performance={r.performance}")
    return 0


def cmd_audit_perversity(args) -> int:
    orig = bpe.load_tokenizer(args.original)
    exp = bpe.load_tokenizer(args.expanded)
    if args.words:
        words = Path(args.words).read_text(encoding="utf-8").split()
    else:
        lines = Path(args.corpus).read_text(encoding="utf-8").splitlines()
        words = candidates.extract_candidate_words(lines, min_freq=1).surfaces()
    flagged = metrics.perversity_audit(orig, exp, words)
    for word, n_orig, n_exp in flagged:
        print(f"{word}\t{n_orig}\t{n_exp}")
    if args.out_tsv:
        with open(args.out_tsv, "w", encoding="utf-8") as fh:
            for word, n_orig, n_exp in flagged:
                fh.write(f"{word}\t{n_orig}\t{n_exp}\n")
    print(f"# {len(flagged)} of {len(words)} words got worse", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokmend",
        description="Vocabulary expansion toolkit for over-fragmented tokenizers",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "analyze-fragmentation", help="per-language token and character ratios"
    )
    p.add_argument("--tokenizer", required=True)
    p.add_argument("--corpus-dir", help="directory of <lang>.txt files")
    p.add_argument("--corpus-tsv", help="TSV of (lang, index, text)")
    p.add_argument("--reference", default="eng")
    p.add_argument("--out-csv")
    p.add_argument("--out-json")
    p.set_defaults(func=cmd_analyze_fragmentation)

    p = sub.add_parser("select", help="produce the expansion item set for a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser(
        "init-embeddings", help="select items and write expanded embedding files"
    )
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_init_embeddings)

    p = sub.add_parser("run", help="full experiment: select, init, measure, ledger")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pareto", help="non-dominated front of a results ledger")
    p.add_argument("--results", required=True)
    p.add_argument("--out-csv")
    p.add_argument("--out-svg")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser(
        "audit-perversity", help="words an expansion made strictly worse"
    )
    p.add_argument("--original", required=True)
    p.add_argument("--expanded", required=True)
    p.add_argument("--words")
    p.add_argument("--corpus")
    p.add_argument("--out-tsv")
    p.set_defaults(func=cmd_audit_perversity)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TokmendError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
