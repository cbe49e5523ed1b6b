import json

import numpy as np
import pytest

from tokmend.errors import MissingHiddenError, SchemaError
from tokmend.traces import (
    TraceRecord,
    TraceStore,
    validate_trace_file,
    write_trace_file,
)


@pytest.fixture
def records():
    rng = np.random.default_rng(1)
    recs = []
    for k, word in enumerate(["alpha", "beta"]):
        hidden = {
            (i, l): rng.normal(size=4).astype(np.float32)
            for i in (1, 2)
            for l in (1, 3)
        }
        gens = {(2, 1): f"say {word}", (1, 3): "noise"}
        recs.append(TraceRecord(word, (7 + k, 9 + k), 3, gens, hidden))
    return recs


def test_write_read_round_trip(tmp_path, records):
    path = tmp_path / "traces.jsonl"
    sidecar = write_trace_file(path, records, dim=4, layers=3, model="toy")
    store = TraceStore(path)
    assert store.dim == 4 and store.layers == 3 and store.model == "toy"
    assert sorted(store.words()) == ["alpha", "beta"]
    rec = store.record("alpha")
    assert rec.token_ids == (7, 9)
    assert rec.generations[(2, 1)] == "say alpha"
    # bit-exact hidden vectors
    for key, vec in records[0].hidden.items():
        assert store.record("alpha").hidden[key].tobytes() == vec.tobytes()
    assert sidecar.exists()


def test_sidecar_length_arithmetic(tmp_path, records):
    path = tmp_path / "traces.jsonl"
    sidecar = write_trace_file(path, records, dim=4, layers=3)
    n_entries = sum(len(r.hidden) for r in records)
    assert sidecar.stat().st_size == n_entries * 4 * 4


def test_validator_accepts_writer_output(tmp_path, records):
    path = tmp_path / "traces.jsonl"
    write_trace_file(path, records, dim=4, layers=3)
    assert validate_trace_file(path) == []


def test_validator_warns_on_unknown_field(tmp_path, records):
    path = tmp_path / "traces.jsonl"
    write_trace_file(path, records, dim=4, layers=3)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["extra"] = 1
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    warnings = validate_trace_file(path)
    assert any("extra" in w for w in warnings)


def test_validator_rejects_bad_hidden_length(tmp_path, records):
    path = tmp_path / "traces.jsonl"
    write_trace_file(path, records, dim=4, layers=3)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["hidden"][0][3] = 12  # not dim * 4
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError):
        validate_trace_file(path)


def test_validator_rejects_out_of_bounds_offset(tmp_path, records):
    path = tmp_path / "traces.jsonl"
    write_trace_file(path, records, dim=4, layers=3)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["hidden"][0][2] = 10_000
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(SchemaError):
        validate_trace_file(path)


def test_missing_hidden_is_hard_error(tmp_path):
    rec = TraceRecord("word", (1, 2), 2, {(2, 1): "word"}, {})
    path = tmp_path / "traces.jsonl"
    write_trace_file(path, [rec], dim=4, layers=2)
    store = TraceStore(path)
    with pytest.raises(MissingHiddenError):
        store.hidden_vector("word", 2, 1)


def test_position_out_of_range_rejected(tmp_path):
    rec = TraceRecord("w", (1,), 2, {(3, 1): "x"})
    with pytest.raises(SchemaError):
        write_trace_file(tmp_path / "t.jsonl", [rec], dim=4, layers=2)


def test_bad_header_rejected(tmp_path):
    path = tmp_path / "traces.jsonl"
    path.write_text('{"format": "something-else"}\n')
    with pytest.raises(SchemaError):
        TraceStore(path)


def test_unreferenced_sidecar_bytes_warn(tmp_path, records):
    path = tmp_path / "traces.jsonl"
    sidecar = write_trace_file(path, records, dim=4, layers=3)
    with open(sidecar, "ab") as fh:
        fh.write(b"\x00" * 16)
    warnings = validate_trace_file(path)
    assert any("unreferenced" in w for w in warnings)
