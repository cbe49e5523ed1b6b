#!/usr/bin/env python3
"""Fetch the external inputs for the token-ratio acceptance test.

Downloads the published Qwen3-30B-A3B tokenizer file and the SIB200
training split for the languages under test, writing:

    <out>/qwen3_tokenizer.json
    <out>/sib200/<lang>.txt        (one sentence per line, index-aligned)

Then run:  TOKMEND_ACCEPTANCE_DATA=<out> pytest tests/test_acceptance.py -v -s

Requires network access plus the ``huggingface_hub`` and ``datasets``
packages (pip install huggingface_hub datasets).
"""

import argparse
import shutil
import sys
from pathlib import Path

MODEL_ID = "Qwen/Qwen3-30B-A3B"
DATASET_ID = "Davlan/sib200"

LANGUAGE_CONFIGS = {
    "eng": "eng_Latn",
    "hun": "hun_Latn",
    "vie": "vie_Latn",
    "pes": "pes_Arab",
    "hin": "hin_Deva",
    "srp": "srp_Cyrl",
    "gla": "gla_Latn",
    "mri": "mri_Latn",
    "tpi": "tpi_Latn",
    "sot": "sot_Latn",
    "amh": "amh_Ethi",
    "guj": "guj_Gujr",
    "ory": "ory_Orya",
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="acceptance_data")
    parser.add_argument("--model", default=MODEL_ID)
    args = parser.parse_args()

    try:
        from huggingface_hub import hf_hub_download
        from datasets import load_dataset
    except ImportError as e:
        print(f"missing dependency: {e}; pip install huggingface_hub datasets")
        return 1

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    print(f"fetching tokenizer from {args.model} ...")
    tok_file = hf_hub_download(args.model, "tokenizer.json")
    shutil.copyfile(tok_file, out / "qwen3_tokenizer.json")

    sib_dir = out / "sib200"
    sib_dir.mkdir(exist_ok=True)
    for lang, config in LANGUAGE_CONFIGS.items():
        print(f"fetching {DATASET_ID}/{config} train split ...")
        split = load_dataset(DATASET_ID, config, split="train")
        rows = sorted(zip(split["index_id"], split["text"]))
        lines = [text.replace("\n", " ") for _, text in rows]
        (sib_dir / f"{lang}.txt").write_text("\n".join(lines), encoding="utf-8")

    print(f"done; set TOKMEND_ACCEPTANCE_DATA={out.resolve()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
