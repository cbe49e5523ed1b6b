"""Builds a tiny local causal LM + byte-level BPE tokenizer for the tests.

Everything is constructed on the fly (random weights, tokenizer trained on
a synthetic corpus), so no network or model hub access is needed.
"""

import warnings

import pytest
import torch

TRAINING_TEXT = [
    "the quick brown fox jumps over the lazy dog",
    "a tokenizer splits rare words into many small pieces",
    "extraction of hidden states is the first pass",
    "patched prompts generate continuations in the second pass",
    "vocabulary expansion reduces fragmentation for some languages",
] * 40

PROBE_TEXT = [
    "the fox jumps over extraction",
    "rare words become many pieces",
    "hidden states generate prompts",
    "don't split this, it's a test!",
    "numbers 12345 and symbols #@!",
] * 200


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    from tokenizers import Regex, decoders, models, pre_tokenizers, trainers
    from transformers import GPT2Config, GPT2LMHeadModel, PreTrainedTokenizerFast

    pattern = r"'(?:[sdmt]|ll|ve|re)| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"
    backend = models.BPE()
    tok = __import__("tokenizers").Tokenizer(backend)
    tok.pre_tokenizer = pre_tokenizers.Sequence(
        [
            pre_tokenizers.Split(Regex(pattern), behavior="isolated", invert=False),
            pre_tokenizers.ByteLevel(add_prefix_space=False, use_regex=False),
        ]
    )
    tok.decoder = decoders.ByteLevel()
    trainer = trainers.BpeTrainer(
        vocab_size=420,
        special_tokens=["<|endoftext|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
        show_progress=False,
    )
    tok.train_from_iterator(TRAINING_TEXT, trainer)
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok, eos_token="<|endoftext|>", pad_token="<|endoftext|>"
    )

    eos = fast.convert_tokens_to_ids("<|endoftext|>")
    config = GPT2Config(
        vocab_size=len(fast),
        n_layer=2,
        n_head=2,
        n_embd=32,
        n_positions=256,
        bos_token_id=eos,
        eos_token_id=eos,
    )
    torch.manual_seed(1234)
    model = GPT2LMHeadModel(config)
    model.eval()

    path = tmp_path_factory.mktemp("tiny_model")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fast.save_pretrained(path)
        model.save_pretrained(path)
    return path


@pytest.fixture(scope="session")
def multi_token_words(tiny_model_dir):
    from transformers import AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(tiny_model_dir)
    pool = [
        "elephant", "umbrella", "crocodile", "synthesis", "quantum",
        "xylophone", "paradox", "labyrinth",
    ]
    words = [
        w for w in pool
        if len(tokenizer(w, add_special_tokens=False)["input_ids"]) >= 2
    ]
    assert len(words) >= 4, "tiny tokenizer unexpectedly fused the probe words"
    return words[:6]
