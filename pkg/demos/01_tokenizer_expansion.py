"""Byte-level BPE, merge continuation, and priority added items.

Walks the two expansion routes side by side: continuing merge training on
new data versus adding whole surfaces with encoding priority, and shows how
priority items can backfire on words they only partially cover.
"""

from tokmend import Tokenizer, expand_vocabulary, extend_merges, train_bpe
from tokmend.bpe import BYTE_ENCODER
from tokmend.metrics import perversity_audit, token_reduction

corpus = [
    "the development of new vocabulary takes development effort",
    "development is iterative and development is measurable",
    "elopement is a rare word compared to development",
] * 10


def show(tok, text):
    print(f"  {text!r} -> {[tok.token_string(i) for i in tok.encode(text)]}")


# Route 1: train a small tokenizer, then continue merge training on the
# same data.  New merges rank strictly after the originals.
tok = train_bpe(corpus, n_merges=8)
print(f"trained {len(tok.merges)} merges, vocab size {tok.base_size}")
show(tok, "development")

extended = extend_merges(tok, corpus, budget=10)
print(f"extended by {len(extended.merges) - len(tok.merges)} merges")
show(extended, "development")
print(f"  token reduction on training data: "
      f"{token_reduction(tok, extended, corpus):.3f}\n")

# Route 2: priority added items.  Start from a hand-built merge table whose
# base split of "development" is [deve, lop, ment].
vocab = {BYTE_ENCODER[b]: b for b in range(256)}
merges = [("d", "e"), ("l", "o"), ("lo", "p"), ("m", "e"),
          ("n", "t"), ("me", "nt"), ("v", "e"), ("de", "ve")]
for left, right in merges:
    vocab[left + right] = len(vocab)
base = Tokenizer(vocab, merges)
show(base, "development")

# Adding the whole word collapses it to one id.
whole = expand_vocabulary(base, ["development"])
show(whole, "development")

# Adding a fragment backfires: "elop" outranks the merges that used to
# build "deve" and "lop", so the word splits into MORE pieces than before.
perverse = expand_vocabulary(base, ["elop"])
show(perverse, "development")
flagged = perversity_audit(base, perverse, ["development", "elopement"])
print(f"\nwords made strictly worse by adding 'elop': {flagged}")
