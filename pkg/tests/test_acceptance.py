"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its runtime (run with ``pytest tests/test_acceptance.py -v -s``).

The token-ratio reproduction test needs externally fetched data (a published
tokenizer file and a parallel corpus); point TOKMEND_ACCEPTANCE_DATA at a
directory containing qwen3_tokenizer.json and sib200/<lang>.txt, e.g. via
scripts/fetch_acceptance_data.py.  It skips when the data is absent.
"""

import itertools
import json
import os
import random
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from conftest import build_tokenizer
from oracles import brute_force_bpe, pareto_oracle, procrustes_grid_2d
from workspace import build_workspace, write_config

from tokmend import (
    ExperimentConfig,
    ParallelCorpus,
    SelectionConfig,
    TraceRecord,
    evaluate_word,
    expand_vocabulary,
    fit_procrustes,
    fragmentation_report,
    load_tokenizer,
    pareto_front,
    perversity_audit,
    run_experiment,
    select_expansion,
    token_reduction,
)
from tokmend.detok import ActivationRef, DetokOutcome
from tokmend.embeddings import EmbeddingMatrix
from tokmend.pipeline import ResultRow

FIXTURES = Path(__file__).parent / "fixtures"

TABLE_RATIOS = {
    "hun": 2.13, "vie": 1.43, "pes": 2.62, "hin": 4.46, "srp": 2.36,
    "gla": 2.41, "mri": 2.33, "tpi": 2.02, "sot": 2.20, "amh": 4.12,
    "guj": 6.80, "ory": 9.79,
}


@contextmanager
def criterion(name: str, limit_s: float):
    t0 = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - t0
    ok = elapsed < limit_s
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {elapsed:.2f}s (limit {limit_s:g}s)")
    assert ok, f"{name} exceeded the {limit_s}s budget ({elapsed:.2f}s)"


def test_token_ratio_reproduction():
    data_dir = os.environ.get("TOKMEND_ACCEPTANCE_DATA")
    if not data_dir:
        pytest.skip(
            "TOKMEND_ACCEPTANCE_DATA is not set; fetch the published tokenizer "
            "and SIB200 split with scripts/fetch_acceptance_data.py first"
        )
    data = Path(data_dir)
    tokenizer_path = data / "qwen3_tokenizer.json"
    corpus_dir = data / "sib200"
    if not tokenizer_path.exists() or not corpus_dir.is_dir():
        pytest.skip(f"{data} lacks qwen3_tokenizer.json or sib200/")

    with criterion("token-ratio reproduction", limit_s=60.0):
        tok = load_tokenizer(tokenizer_path)
        corpus = ParallelCorpus.from_dir(corpus_dir, reference="eng")
        report = fragmentation_report(tok, corpus)
        assert report.per_language["eng"].tokens_ratio == 1.0
        for lang, expected in TABLE_RATIOS.items():
            got = report.per_language[lang].tokens_ratio
            assert abs(got - expected) <= 0.20, (lang, got, expected)
        # every non-reference language pays more tokens than its character
        # count alone would predict
        for lang, m in report.per_language.items():
            if lang != "eng":
                assert m.tokens_ratio / m.characters_ratio > 1.0, lang


def test_perversity_regression(dev_tokenizer):
    with criterion("perversity regression", limit_s=1.0):
        base = [dev_tokenizer.token_string(i)
                for i in dev_tokenizer.encode("development")]
        assert base == ["deve", "lop", "ment"]
        exp = expand_vocabulary(dev_tokenizer, ["elop"])
        after = [exp.token_string(i) for i in exp.encode("development")]
        assert after == ["de", "v", "elop", "ment"]
        assert perversity_audit(dev_tokenizer, exp, ["development"]) == [
            ("development", 3, 4)
        ]


def test_bpe_oracle_equivalence():
    rng = random.Random(12345)

    def random_tokenizer():
        merges, tokens = [], list("abcd")
        while len(merges) < rng.randrange(0, 9):
            left, right = rng.choice(tokens), rng.choice(tokens)
            if (left, right) in merges or len(left + right) > 6:
                break
            merges.append((left, right))
            tokens.append(left + right)
        return build_tokenizer(merges)

    with criterion("bpe oracle equivalence (1000 cases)", limit_s=10.0):
        for case in range(1000):
            tok = random_tokenizer()
            text = "".join(rng.choice("abcd") for _ in range(rng.randrange(0, 7)))
            got = [tok.token_string(i) for i in tok.encode(text)]
            want = brute_force_bpe(text, tok.merges)
            assert got == want, (case, text, tok.merges)


def test_procrustes_recovery():
    rng = np.random.default_rng(2024)
    d, n = 16, 64

    with criterion("procrustes recovery (50 transforms + 2d grid)", limit_s=5.0):
        for _ in range(50):
            q, r = np.linalg.qr(rng.normal(size=(d, d)))
            Q = q * np.sign(np.diag(r))
            B = rng.normal(size=(n, d))
            B /= np.sqrt(np.mean(B**2, axis=1))[:, None]
            A = B @ Q  # rows are (Q.T @ target), the map to invert is Q
            T, _ = fit_procrustes(A, B)
            assert np.abs(T - Q).max() <= 1e-5
            assert np.abs(T.T @ T - np.eye(d)).max() <= 1e-6

        A2 = rng.normal(size=(48, 2))
        B2 = A2[rng.permutation(48)]
        A2_hat = A2 / np.sqrt(np.mean(A2**2, axis=1))[:, None]
        T2, _ = fit_procrustes(A2, B2)
        fitted_residual = float(np.linalg.norm(A2_hat @ T2.T - B2))
        grid_best = procrustes_grid_2d(A2_hat, B2, n_angles=10_000)
        assert fitted_residual <= grid_best + 1e-4


def test_success_condition_truth_table():
    word = "vexa"
    cells = [(i, l) for i in (1, 2) for l in (1, 2, 3)]

    with criterion("success-condition truth table (64 cases)", limit_s=1.0):
        checked = 0
        for bits in itertools.product([False, True], repeat=len(cells)):
            hits = {c for c, b in zip(cells, bits) if b}
            gens = {c: (f"say {word} now" if c in hits else "-") for c in cells}
            trace = TraceRecord(word, (3, 4), 3, gens)

            any_pos = evaluate_word(trace, last_token_only=False)
            assert any_pos.success == bool(hits)
            if hits:
                assert any_pos.earliest_layer == min(l for _, l in hits)

            last = evaluate_word(trace, last_token_only=True)
            last_hits = {(i, l) for (i, l) in hits if i == 2}
            assert last.success == bool(last_hits)
            if last_hits:
                assert last.earliest_layer == min(l for _, l in last_hits)
            checked += 1
        assert checked == 64


def test_selection_grid_fixtures():
    fixture = json.loads((FIXTURES / "selection_grid.json").read_text())
    outcomes = [
        DetokOutcome(t, ok, layer, pos, src)
        for t, ok, layer, pos, src in fixture["outcomes"]
    ]

    with criterion("selection grid (6 configurations)", limit_s=1.0):
        for name, cfg_kw in fixture["configs"].items():
            got = select_expansion(outcomes, SelectionConfig(**cfg_kw))
            want = [
                (surface, tuple(ActivationRef(w, p, l) for w, p, l in refs))
                for surface, refs in fixture["expected"][name]
            ]
            assert [(it.surface, it.refs) for it in got] == want, name


def test_pareto_correctness():
    rng = random.Random(777)
    grid = [k / 40 for k in range(-20, 40)]

    with criterion("pareto vs dominance oracle (100 x 1000 rows)", limit_s=5.0):
        for trial in range(100):
            pts = [(rng.choice(grid), rng.choice(grid)) for _ in range(1000)]
            rows = [
                ResultRow(str(k), "syn", "fragmend", "fvt", 0, x, y)
                for k, (x, y) in enumerate(pts)
            ]
            got = sorted(int(r.fingerprint) for r in pareto_front(rows))
            want = sorted(pareto_oracle(pts))
            assert got == want, trial


def test_end_to_end_synthetic_efficiency(tmp_path):
    ws = build_workspace(tmp_path / "ws")
    out = tmp_path / "out"
    cfg = ExperimentConfig.from_file(write_config(tmp_path / "cfg.json", ws, out))

    with criterion("end-to-end synthetic efficiency", limit_s=30.0):
        result = run_experiment(cfg)

        # Independent derivation of the expected reduction: count tokens of
        # both tokenizers directly over the held-out split.
        orig = load_tokenizer(ws["tokenizer"])
        exp = load_tokenizer(out / "expanded_tokenizer.json")
        heldout = Path(ws["eval"]).read_text(encoding="utf-8").splitlines()
        n_orig = sum(len(orig.encode(s)) for s in heldout)
        n_exp = sum(len(exp.encode(s)) for s in heldout)
        derived = 1.0 - n_exp / n_orig
        assert result.token_reduction == pytest.approx(derived)
        assert token_reduction(orig, exp, heldout) == pytest.approx(derived)
        assert result.token_reduction >= 0.30

        before = EmbeddingMatrix.load(ws["emb_in"])
        after = EmbeddingMatrix.load(out / "embeddings_input.bin")
        assert after.data[: before.n_rows].tobytes() == before.data.tobytes()
        before_u = EmbeddingMatrix.load(ws["emb_out"])
        after_u = EmbeddingMatrix.load(out / "embeddings_output.bin")
        assert after_u.data[: before_u.n_rows].tobytes() == before_u.data.tobytes()
