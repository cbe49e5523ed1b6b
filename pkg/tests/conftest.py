import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tokmend.bpe import Tokenizer, _byte_vocab


def build_tokenizer(merges: list[tuple[str, str]], added: list[str] | None = None) -> Tokenizer:
    vocab = _byte_vocab()
    for left, right in merges:
        token = left + right
        if token not in vocab:
            vocab[token] = len(vocab)
    return Tokenizer(vocab, merges, added_items=added or [])


@pytest.fixture
def dev_tokenizer() -> Tokenizer:
    """Encodes "development" as [deve, lop, ment] and "dev" as [de, v]."""
    return build_tokenizer(
        [("d", "e"), ("l", "o"), ("lo", "p"), ("m", "e"),
         ("n", "t"), ("me", "nt"), ("v", "e"), ("de", "ve")]
    )


@pytest.fixture
def layla_tokenizer() -> Tokenizer:
    """Encodes "Layla" as [L, ay, la]."""
    return build_tokenizer([("a", "y"), ("l", "a")])


@pytest.fixture
def byte_tokenizer() -> Tokenizer:
    return build_tokenizer([])
