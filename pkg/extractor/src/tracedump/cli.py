"""Command-line entry points for trace extraction and asset export."""

from __future__ import annotations

import argparse
import sys

from .export import export_model_assets
from .extract import extract_traces
from .job import ExtractionJob


def _parse_layers(spec: str | None) -> list[int]:
    if not spec:
        return []
    layers: list[int] = []
    for part in spec.split(","):
        if "-" in part:
            lo, hi = part.split("-")
            layers.extend(range(int(lo), int(hi) + 1))
        else:
            layers.append(int(part))
    return layers


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracedump",
        description="Dump activation-patching traces and model assets",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="run the two-pass protocol over a word list")
    p.add_argument("--model", required=True)
    p.add_argument("--language", default="eng")
    p.add_argument("--words", required=True, help="one word per line")
    p.add_argument("--out", required=True, help="trace JSONL path")
    p.add_argument("--template", default="In English: {PH}, {PH}, {PH}, {PH},")
    p.add_argument("--placeholder", default="X")
    p.add_argument("--layers", help="e.g. 1-12 or 1,5,9 (default: all)")
    p.add_argument("--batch-first", type=int, default=16)
    p.add_argument("--batch-patched", type=int, default=2)
    p.add_argument("--max-new-tokens", type=int, default=12)
    p.add_argument("--dtype", default="float16",
                   choices=["float16", "bfloat16", "float32"])
    p.add_argument("--device", default="cpu")
    p.add_argument("--single-token-dump", action="store_true",
                   help="hidden states only, for mapper fitting")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("export-assets",
                       help="export tokenizer and embedding matrices")
    p.add_argument("--model", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def cmd_extract(args) -> int:
    job = ExtractionJob(
        model_id=args.model,
        language=args.language,
        prompt_template=args.template,
        placeholder=args.placeholder,
        word_list_path=args.words,
        batch_first=args.batch_first,
        batch_patched=args.batch_patched,
        max_new_tokens=args.max_new_tokens,
        layers=_parse_layers(args.layers),
        dtype=args.dtype,
        single_token_dump=args.single_token_dump,
        device=args.device,
    )
    sidecar = extract_traces(job, args.out)
    print(f"wrote {args.out} and {sidecar}")
    return 0


def cmd_export(args) -> int:
    paths = export_model_assets(args.model, args.out_dir)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
