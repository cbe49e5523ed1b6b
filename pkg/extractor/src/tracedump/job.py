"""Extraction job configuration."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ExtractionJob:
    """One extraction run over a word list with a fixed probe prompt.

    The prompt template must contain at least one placeholder marker (the
    literal "{PH}"); every marker's input embedding gets replaced by the
    patched hidden state.  The placeholder string itself must encode to a
    single token of the model vocabulary.
    """

    model_id: str
    language: str = "eng"
    prompt_template: str = "In English: {PH}, {PH}, {PH}, {PH},"
    placeholder: str = "X"
    word_list_path: str = ""
    batch_first: int = 16
    batch_patched: int = 2
    max_new_tokens: int = 12
    layers: list[int] = field(default_factory=list)  # empty: all layers
    dtype: str = "float16"
    single_token_dump: bool = False
    device: str = "cpu"

    def __post_init__(self):
        if "{PH}" not in self.prompt_template:
            raise ValueError("prompt template needs at least one {PH} placeholder")
        if self.batch_first < 1 or self.batch_patched < 1:
            raise ValueError("batch sizes must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")
