"""Two-pass activation-patching extraction.

Pass one runs the model over each word and records the hidden state of
every token position at every requested layer.  Pass two rebuilds the probe
prompt with each recorded state written into all placeholder embeddings and
greedily generates a continuation; the generated strings are what the
analysis side matches detokenization against.
"""

from __future__ import annotations

import warnings
from pathlib import Path

import numpy as np
import torch

from .formats import TraceWriter
from .job import ExtractionJob

_DTYPES = {"float16": torch.float16, "bfloat16": torch.bfloat16, "float32": torch.float32}


def load_model(job: ExtractionJob):
    from transformers import AutoModelForCausalLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(job.model_id)
    if tokenizer.pad_token_id is None:
        tokenizer.pad_token = tokenizer.eos_token
    model = AutoModelForCausalLM.from_pretrained(
        job.model_id, dtype=_DTYPES[job.dtype]
    )
    model.to(job.device)
    model.eval()
    return model, tokenizer


def _chunks(seq, size):
    for k in range(0, len(seq), size):
        yield seq[k : k + size]


def _is_oom(err: RuntimeError) -> bool:
    return "out of memory" in str(err).lower()


class Extractor:
    def __init__(self, model, tokenizer, job: ExtractionJob):
        self.model = model
        self.tokenizer = tokenizer
        self.job = job
        self.device = job.device
        self.n_layers = int(model.config.num_hidden_layers)
        self.dim = int(model.config.hidden_size)
        self.layers = sorted(job.layers) if job.layers else list(
            range(1, self.n_layers + 1)
        )
        bad = [l for l in self.layers if not 1 <= l <= self.n_layers]
        if bad:
            raise ValueError(f"layers {bad} outside [1, {self.n_layers}]")
        self.prompt_ids, self.placeholder_positions = self._build_prompt()

    def _build_prompt(self) -> tuple[list[int], list[int]]:
        ph_ids = self.tokenizer(self.job.placeholder, add_special_tokens=False)[
            "input_ids"
        ]
        if len(ph_ids) != 1:
            raise ValueError(
                f"placeholder {self.job.placeholder!r} must be a single token, "
                f"got {len(ph_ids)}"
            )
        ids: list[int] = []
        positions: list[int] = []
        segments = self.job.prompt_template.split("{PH}")
        for k, segment in enumerate(segments):
            if k > 0:
                positions.append(len(ids))
                ids.append(ph_ids[0])
            if segment:
                ids.extend(
                    self.tokenizer(segment, add_special_tokens=False)["input_ids"]
                )
        return ids, positions

    def tokenize_word(self, word: str) -> list[int]:
        ids = self.tokenizer(word, add_special_tokens=False)["input_ids"]
        if self.tokenizer.decode(ids) != word:
            raise ValueError(
                f"tokenizer does not round-trip {word!r}; word list does not "
                "match this model's tokenizer"
            )
        return ids

    # -- pass one -------------------------------------------------------

    def first_pass(self, words: list[str]) -> list[tuple[str, list[int], dict]]:
        out = []
        batch_size = self.job.batch_first
        pending = list(words)
        retried = False
        while pending:
            batch = pending[: batch_size]
            try:
                out.extend(self._first_pass_batch(batch))
            except RuntimeError as err:
                if _is_oom(err) and not retried:
                    batch_size = max(1, batch_size // 2)
                    retried = True
                    warnings.warn(f"retrying first pass with batch size {batch_size}")
                    continue
                raise
            pending = pending[len(batch):]
        return out

    def _first_pass_batch(self, words: list[str]):
        encoded = [self.tokenize_word(w) for w in words]
        pad_id = self.tokenizer.pad_token_id or 0
        longest = max(len(ids) for ids in encoded)
        input_ids = torch.full((len(words), longest), pad_id, dtype=torch.long)
        mask = torch.zeros((len(words), longest), dtype=torch.long)
        for row, ids in enumerate(encoded):
            input_ids[row, : len(ids)] = torch.tensor(ids)
            mask[row, : len(ids)] = 1
        with torch.no_grad():
            outputs = self.model(
                input_ids=input_ids.to(self.device),
                attention_mask=mask.to(self.device),
                output_hidden_states=True,
            )
        results = []
        for row, (word, ids) in enumerate(zip(words, encoded)):
            hidden = {
                (i, l): outputs.hidden_states[l][row, i - 1]
                for i in range(1, len(ids) + 1)
                for l in self.layers
            }
            results.append((word, ids, hidden))
        return results

    # -- pass two -------------------------------------------------------

    def patched_generations(
        self, hidden: dict[tuple[int, int], torch.Tensor]
    ) -> dict[tuple[int, int], str]:
        keys = list(hidden)
        generations: dict[tuple[int, int], str] = {}
        batch_size = self.job.batch_patched
        pending = keys
        retried = False
        while pending:
            batch = pending[: batch_size]
            try:
                generations.update(self._patched_batch(batch, hidden))
            except RuntimeError as err:
                if _is_oom(err) and not retried:
                    batch_size = max(1, batch_size // 2)
                    retried = True
                    warnings.warn(f"retrying patched pass with batch size {batch_size}")
                    continue
                raise
            pending = pending[len(batch):]
        return generations

    def _patched_batch(self, keys, hidden):
        emb = self.model.get_input_embeddings()
        prompt = torch.tensor([self.prompt_ids], device=self.device)
        with torch.no_grad():
            base = emb(prompt)
            inputs = base.repeat(len(keys), 1, 1).clone()
            for row, key in enumerate(keys):
                vec = hidden[key].to(device=self.device, dtype=base.dtype)
                inputs[row, self.placeholder_positions] = vec
            generated = self.model.generate(
                inputs_embeds=inputs,
                attention_mask=torch.ones(
                    inputs.shape[:2], dtype=torch.long, device=self.device
                ),
                max_new_tokens=self.job.max_new_tokens,
                do_sample=False,
                pad_token_id=self.tokenizer.pad_token_id,
            )
        texts = self.tokenizer.batch_decode(generated, skip_special_tokens=True)
        return dict(zip(keys, texts))


def extract_traces(job: ExtractionJob, out_path: str | Path) -> Path:
    """Run the full protocol over the job's word list; returns the sidecar path."""
    model, tokenizer = load_model(job)
    extractor = Extractor(model, tokenizer, job)
    words = [
        w for w in Path(job.word_list_path).read_text(encoding="utf-8").splitlines()
        if w.strip()
    ]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with TraceWriter(
        out_path, dim=extractor.dim, layers=extractor.n_layers, model=job.model_id
    ) as writer:
        for word, ids, hidden in extractor.first_pass(words):
            if job.single_token_dump or len(ids) == 1:
                if len(ids) > 1 and job.single_token_dump:
                    warnings.warn(f"{word!r} is not a single token; dumping anyway")
                if len(ids) == 1 and not job.single_token_dump:
                    warnings.warn(
                        f"{word!r} is a single token; trace is usable only for "
                        "mapper fitting"
                    )
                generations: dict[tuple[int, int], str] = {}
            else:
                generations = extractor.patched_generations(hidden)
            hidden_np = {
                key: value.float().cpu().numpy() for key, value in hidden.items()
            }
            writer.add(word, ids, generations, hidden_np)
    return writer.sidecar
