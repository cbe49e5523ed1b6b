"""Export a model's tokenizer and embedding matrices as toolkit files."""

from __future__ import annotations

import json
import tempfile
from pathlib import Path

from .formats import write_embedding_matrix, write_tokenizer_json


def export_model_assets(model_id: str, out_dir: str | Path) -> dict[str, Path]:
    """Write tokenizer.json, embeddings_input.bin, embeddings_output.bin.

    Models with tied embeddings export the shared matrix under both roles
    with the tied flag set.
    """
    from transformers import AutoModelForCausalLM, AutoTokenizer

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tokenizer = AutoTokenizer.from_pretrained(model_id)
    if not tokenizer.is_fast:
        raise ValueError(f"{model_id}: only fast (BPE) tokenizers are exportable")

    with tempfile.TemporaryDirectory() as tmp:
        tokenizer.save_pretrained(tmp)
        source = json.loads((Path(tmp) / "tokenizer.json").read_text(encoding="utf-8"))
    tokenizer_path = out_dir / "tokenizer.json"
    write_tokenizer_json(source, tokenizer_path)

    model = AutoModelForCausalLM.from_pretrained(model_id)
    model.eval()
    input_weight = model.get_input_embeddings().weight
    output_module = model.get_output_embeddings()
    tied = output_module is None or (
        output_module.weight.data_ptr() == input_weight.data_ptr()
    )
    output_weight = input_weight if tied else output_module.weight

    input_path = out_dir / "embeddings_input.bin"
    output_path = out_dir / "embeddings_output.bin"
    write_embedding_matrix(
        input_path, "input", input_weight.detach().float().cpu().numpy(), tied=tied
    )
    write_embedding_matrix(
        output_path, "output", output_weight.detach().float().cpu().numpy(), tied=tied
    )
    return {
        "tokenizer": tokenizer_path,
        "embeddings_input": input_path,
        "embeddings_output": output_path,
    }
