"""Trace data model, binary format, and synthetic generation."""

import json
import struct

import numpy as np
import pytest

from kvalloc.attnproc import ProcSettings, process_trace
from kvalloc.metrics import retention_curve
from kvalloc.trace import (
    AttentionTrace,
    SyntheticSpec,
    TraceFormatError,
    TraceHeader,
    generate_trace,
    load_trace,
    save_trace,
)

HEADER_2TOK = b'{"version":1,"layers":1,"heads":1,"seq_len":2,"dtype":"f32le"}\n'


class TestHeader:
    def test_json_line_is_canonical(self):
        header = TraceHeader(layers=1, heads=1, seq_len=2)
        assert header.to_json_line() == HEADER_2TOK

    def test_roundtrip(self):
        header = TraceHeader(layers=3, heads=4, seq_len=17)
        assert TraceHeader.from_json_line(header.to_json_line().strip()) == header

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"layers": 0, "heads": 1, "seq_len": 2},
            {"layers": 1, "heads": 0, "seq_len": 2},
            {"layers": 1, "heads": 1, "seq_len": 1},
            {"layers": 1, "heads": 1, "seq_len": 2, "version": 2},
            {"layers": 1, "heads": 1, "seq_len": 2, "dtype": "f16le"},
        ],
    )
    def test_invalid_fields_rejected(self, kwargs):
        with pytest.raises(TraceFormatError):
            TraceHeader(**kwargs)

    def test_missing_keys_rejected(self):
        with pytest.raises(TraceFormatError, match="missing keys"):
            TraceHeader.from_json_line(b'{"version":1}')

    def test_non_json_rejected(self):
        with pytest.raises(TraceFormatError, match="malformed"):
            TraceHeader.from_json_line(b"\xff\xfe not json")


class TestLoadSave:
    def test_two_token_identity_case(self, tmp_path):
        path = tmp_path / "t.bin"
        path.write_bytes(HEADER_2TOK + struct.pack("<4f", 1.0, 0.0, 0.5, 0.5))
        trace = load_trace(path)
        assert trace.layers == 1 and trace.heads == 1 and trace.seq_len == 2
        assert trace.weights.tolist() == [[[[1.0, 0.0], [0.5, 0.5]]]]

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "t.bin"
        path.write_bytes(HEADER_2TOK + struct.pack("<4f", 1.0, 0.0, 0.5, 0.5))
        (tmp_path / "cut.bin").write_bytes(path.read_bytes()[:-4])
        with pytest.raises(TraceFormatError, match="payload length"):
            load_trace(tmp_path / "cut.bin")

    def test_missing_header_line_rejected(self, tmp_path):
        path = tmp_path / "t.bin"
        path.write_bytes(b"no newline in sight")
        with pytest.raises(TraceFormatError, match="header"):
            load_trace(path)

    def test_roundtrip_bit_identical(self, tmp_path):
        spec = SyntheticSpec(layers=3, heads=2, seq_len=32, sparsity=0.2, seed=11, layer_skew=1.0)
        trace = generate_trace(spec)
        first = tmp_path / "a.bin"
        second = tmp_path / "b.bin"
        save_trace(trace, first)
        save_trace(load_trace(first), second)
        assert first.read_bytes() == second.read_bytes()

    def test_causality_violation_reported_with_coordinates(self, tmp_path):
        path = tmp_path / "t.bin"
        # row 0 puts weight on a future position
        path.write_bytes(HEADER_2TOK + struct.pack("<4f", 0.5, 0.5, 0.5, 0.5))
        with pytest.raises(TraceFormatError, match=r"layer 0, head 0, row 0"):
            load_trace(path)

    def test_row_sum_violation_reported_with_coordinates(self, tmp_path):
        path = tmp_path / "t.bin"
        path.write_bytes(HEADER_2TOK + struct.pack("<4f", 1.0, 0.0, 0.5, 0.4))
        with pytest.raises(TraceFormatError, match=r"layer 0, head 0, row 1"):
            load_trace(path)

    def test_half_precision_slack_accepted(self, tmp_path):
        # off by 5e-4: beyond the internal tolerance, within the load one
        path = tmp_path / "t.bin"
        path.write_bytes(HEADER_2TOK + struct.pack("<4f", 1.0, 0.0, 0.5005, 0.5))
        trace = load_trace(path)
        with pytest.raises(TraceFormatError):
            trace.validate()

    def test_save_refuses_invariant_violation(self, tmp_path):
        header = TraceHeader(layers=1, heads=1, seq_len=2)
        bad = AttentionTrace(header=header, weights=np.array([[[[0.5, 0.5], [0.5, 0.5]]]]))
        with pytest.raises(TraceFormatError):
            save_trace(bad, tmp_path / "bad.bin")
        assert not (tmp_path / "bad.bin").exists()

    def test_save_empty_path_is_io_error(self):
        spec = SyntheticSpec(layers=1, heads=1, seq_len=4, sparsity=1.0, seed=0)
        with pytest.raises(OSError):
            save_trace(generate_trace(spec), "")

    def test_weights_shape_must_match_header(self):
        header = TraceHeader(layers=2, heads=1, seq_len=2)
        with pytest.raises(TraceFormatError, match="shape"):
            AttentionTrace(header=header, weights=np.zeros((1, 1, 2, 2)))


class TestGenerate:
    def test_same_spec_is_bit_identical(self):
        spec = SyntheticSpec(layers=4, heads=3, seq_len=40, sparsity=0.15, seed=99, layer_skew=2.5)
        a = generate_trace(spec)
        b = generate_trace(spec)
        assert a.weights.tobytes() == b.weights.tobytes()

    def test_generated_traces_are_causal_row_stochastic(self):
        for seed in range(5):
            spec = SyntheticSpec(layers=2, heads=2, seq_len=24, sparsity=0.3, seed=seed, layer_skew=1.0)
            trace = generate_trace(spec)
            trace.validate()
            sums = trace.weights.sum(axis=3, dtype=np.float64)
            assert np.abs(sums - 1.0).max() <= 1e-5

    def test_sparsity_one_skew_zero_gives_near_uniform_rows(self):
        spec = SyntheticSpec(layers=3, heads=1, seq_len=16, sparsity=1.0, seed=5, layer_skew=0.0)
        trace = generate_trace(spec)
        for i in range(16):
            row = trace.weights[0, 0, i, : i + 1].astype(np.float64)
            assert np.all(row > 0.5 / (i + 1))
            assert row.max() / row.min() < 1.25

    def test_sparsity_one_skew_zero_retention_curves_agree_across_layers(self):
        spec = SyntheticSpec(layers=4, heads=1, seq_len=32, sparsity=1.0, seed=21, layer_skew=0.0)
        trace = generate_trace(spec)
        vectors = process_trace(trace, ProcSettings(ows=4, pool_size=1))
        curves = [retention_curve(v) for v in vectors]
        for other in curves[1:]:
            assert np.abs(other - curves[0]).max() <= 1e-6

    def test_skew_moves_heavy_column_sets_across_layers(self):
        spec = SyntheticSpec(layers=4, heads=1, seq_len=64, sparsity=0.1, seed=3, layer_skew=2.0)
        trace = generate_trace(spec)
        top8 = []
        for layer in range(4):
            mass = trace.layer_mean(layer).sum(axis=0)
            top8.append(frozenset(np.argsort(-mass, kind="stable")[:8].tolist()))
        assert len(set(top8)) >= 2

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"layers": 0, "heads": 1, "seq_len": 8},
            {"layers": 1, "heads": 1, "seq_len": 1},
            {"layers": 1, "heads": 1, "seq_len": 8, "sparsity": 0.0},
            {"layers": 1, "heads": 1, "seq_len": 8, "sparsity": 1.5},
            {"layers": 1, "heads": 1, "seq_len": 8, "layer_skew": -1.0},
        ],
    )
    def test_invalid_spec_rejected(self, kwargs):
        with pytest.raises(ValueError):
            SyntheticSpec(**kwargs)

    def test_header_matches_synthetic_spec(self):
        spec = SyntheticSpec(layers=2, heads=3, seq_len=12, sparsity=0.5, seed=1)
        trace = generate_trace(spec)
        assert trace.header == TraceHeader(layers=2, heads=3, seq_len=12)

    def test_file_header_fields(self, tmp_path):
        spec = SyntheticSpec(layers=2, heads=1, seq_len=8, sparsity=0.5, seed=1)
        path = tmp_path / "t.bin"
        save_trace(generate_trace(spec), path)
        first_line = path.read_bytes().split(b"\n", 1)[0]
        assert json.loads(first_line) == {
            "version": 1,
            "layers": 2,
            "heads": 1,
            "seq_len": 8,
            "dtype": "f32le",
        }
