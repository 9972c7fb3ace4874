"""Attention-processing pipeline: select, merge, pool."""

import numpy as np
import pytest

from kvalloc.attnproc import (
    ProcSettings,
    ScoreVector,
    causal_softmax,
    process_layer,
    process_trace,
    scores_to_csv,
    scores_to_json,
    smooth,
)
from kvalloc.trace import SyntheticSpec, generate_trace

FIG_PIPELINE_MATRIX = [
    [1.0, 0.0, 0.0, 0.0],
    [0.5, 0.5, 0.0, 0.0],
    [0.2, 0.3, 0.5, 0.0],
    [0.1, 0.2, 0.3, 0.4],
]


def uniform_causal(t: int) -> np.ndarray:
    mat = np.tri(t)
    return mat / mat.sum(axis=1, keepdims=True)


class TestSettings:
    def test_even_pool_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            ProcSettings(ows=2, pool_size=4)

    def test_nonpositive_fields_rejected(self):
        with pytest.raises(ValueError):
            ProcSettings(ows=0, pool_size=1)
        with pytest.raises(ValueError):
            ProcSettings(ows=1, pool_size=-1)

    def test_window_must_fit_sequence(self):
        with pytest.raises(ValueError, match="ows"):
            ProcSettings(ows=4, pool_size=1).check_seq_len(4)

    def test_pool_must_fit_non_window_part(self):
        with pytest.raises(ValueError, match="pool_size"):
            ProcSettings(ows=2, pool_size=3).check_seq_len(4)


class TestProcessLayer:
    def test_select_merge_hand_example(self):
        # window rows over non-window columns are [[0.2, 0.3], [0.1, 0.2]]
        sv = process_layer(np.array(FIG_PIPELINE_MATRIX), ProcSettings(ows=2, pool_size=1))
        assert sv.scores == pytest.approx([0.15, 0.25], abs=1e-12)

    def test_pool_size_one_is_identity(self):
        rng = np.random.default_rng(4)
        mat = causal_softmax(rng.normal(size=(10, 10)))
        merged = mat[8:, :8].mean(axis=0)
        sv = process_layer(mat, ProcSettings(ows=2, pool_size=1))
        assert np.array_equal(sv.scores, merged)

    def test_uniform_matrix_interior_positions_constant(self):
        sv = process_layer(uniform_causal(6), ProcSettings(ows=2, pool_size=3))
        interior = sv.scores[1:-1]
        assert np.abs(interior - interior[0]).max() <= 1e-9
        flat = process_layer(uniform_causal(6), ProcSettings(ows=2, pool_size=1))
        assert np.abs(flat.scores - flat.scores[0]).max() <= 1e-9

    def test_output_length_is_t_minus_ows_for_any_pool(self):
        mat = uniform_causal(12)
        for ps in (1, 3, 5, 7):
            assert len(process_layer(mat, ProcSettings(ows=3, pool_size=ps))) == 9

    def test_merge_mass_identity(self):
        rng = np.random.default_rng(9)
        mat = causal_softmax(rng.normal(size=(14, 14)))
        ows = 4
        sv = process_layer(mat, ProcSettings(ows=ows, pool_size=1))
        window_to_rest = mat[14 - ows :, : 14 - ows].sum()
        assert sv.scores.sum() == pytest.approx(window_to_rest / ows, abs=1e-12)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            process_layer(np.zeros((3, 4)), ProcSettings(ows=1, pool_size=1))

    def test_deterministic(self):
        mat = uniform_causal(9)
        settings = ProcSettings(ows=3, pool_size=3)
        a = process_layer(mat, settings)
        b = process_layer(mat, settings)
        assert np.array_equal(a.scores, b.scores)


class TestSmoothing:
    def test_zero_padding_at_edges(self):
        out = smooth(np.array([3.0, 3.0, 3.0, 3.0]), 3)
        assert out == pytest.approx([2.0, 3.0, 3.0, 2.0])

    def test_length_preserved(self):
        assert smooth(np.arange(10.0), 5).shape == (10,)


class TestProcessTrace:
    def test_single_head_matches_per_layer_map(self):
        trace = generate_trace(SyntheticSpec(layers=3, heads=1, seq_len=20, sparsity=0.3, seed=2))
        settings = ProcSettings(ows=4, pool_size=3)
        vectors = process_trace(trace, settings)
        for layer, sv in enumerate(vectors):
            direct = process_layer(trace.weights[layer, 0].astype(np.float64), settings, layer=layer)
            assert np.array_equal(sv.scores, direct.scores)
            assert sv.layer == layer

    def test_two_heads_reduce_to_mean(self):
        trace = generate_trace(
            SyntheticSpec(layers=2, heads=2, seq_len=18, sparsity=0.25, seed=8, layer_skew=1.0)
        )
        settings = ProcSettings(ows=3, pool_size=1)
        vectors = process_trace(trace, settings)
        for layer, sv in enumerate(vectors):
            a = trace.weights[layer, 0].astype(np.float64)
            b = trace.weights[layer, 1].astype(np.float64)
            expected = process_layer((a + b) / 2.0, settings)
            assert np.abs(sv.scores - expected.scores).max() <= 1e-15

    def test_layer_count_and_order(self):
        trace = generate_trace(SyntheticSpec(layers=3, heads=1, seq_len=10, sparsity=0.5, seed=0))
        vectors = process_trace(trace, ProcSettings(ows=2, pool_size=1))
        assert [sv.layer for sv in vectors] == [0, 1, 2]

    def test_alternative_head_reductions(self):
        trace = generate_trace(
            SyntheticSpec(layers=1, heads=3, seq_len=12, sparsity=0.4, seed=6, layer_skew=0.5)
        )
        settings = ProcSettings(ows=2, pool_size=1)
        for reduce_name, reducer in (("sum", np.sum), ("max", np.max)):
            got = process_trace(trace, settings, head_reduce=reduce_name)[0]
            expected = process_layer(
                reducer(trace.weights[0].astype(np.float64), axis=0), settings
            )
            assert np.array_equal(got.scores, expected.scores)
        with pytest.raises(ValueError, match="head_reduce"):
            process_trace(trace, settings, head_reduce="median")


class TestScoreVector:
    def test_negative_scores_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            ScoreVector(layer=0, scores=np.array([0.1, -0.2]))

    def test_matrix_rejected(self):
        with pytest.raises(ValueError, match="vector"):
            ScoreVector(layer=0, scores=np.zeros((2, 2)))

    def test_csv_and_json_serialization(self):
        vectors = [ScoreVector(layer=0, scores=np.array([0.5, 0.25]))]
        csv_text = scores_to_csv(vectors)
        lines = csv_text.strip().split("\n")
        assert lines[0] == "layer,position,score"
        assert lines[1] == "0,0,0.5"
        assert lines[2] == "0,1,0.25"
        assert scores_to_json(vectors) == '[{"layer":0,"scores":[0.5,0.25]}]'


class TestCausalSoftmax:
    def test_rows_are_causal_distributions(self):
        rng = np.random.default_rng(1)
        weights = causal_softmax(rng.normal(size=(7, 7)) * 50.0)
        assert np.triu(weights, k=1).max() == 0.0
        assert np.abs(weights.sum(axis=1) - 1.0).max() <= 1e-12

    def test_extreme_logits_stay_finite(self):
        weights = causal_softmax(np.full((4, 4), 1e6))
        assert np.isfinite(weights).all()

    def test_single_token(self):
        assert causal_softmax(np.array([[123.0]])).tolist() == [[1.0]]
