"""Consistency-weight derivation: pooling, similarity, distances, sigmoid weights."""

import json

import numpy as np
import pytest

from conmerge import (
    ActivationSet,
    Checkpoint,
    SimilarityMatrix,
    TensorRecord,
    ValidationError,
    compute_layer_weights,
    invert_normalize,
    layer_distance,
    load_activation_set,
    load_reference_similarity,
    max_pool_sequence,
    sigmoid_weights,
    similarity_matrix,
    write_container,
)


def sim_of(values, ids=None):
    values = np.asarray(values, dtype=np.float64)
    ids = ids or [str(i) for i in range(values.shape[0])]
    return SimilarityMatrix(values=values, query_ids=ids)


class TestMaxPool:
    def test_columnwise_max(self):
        np.testing.assert_array_equal(max_pool_sequence([[1, 4], [3, 2]]), [3, 4])

    def test_single_row_identity(self):
        np.testing.assert_array_equal(max_pool_sequence([[5, -1]]), [5, -1])

    def test_equal_rows(self):
        np.testing.assert_array_equal(max_pool_sequence([[2, 2, 2], [2, 2, 2]]), [2, 2, 2])

    def test_empty_rejected(self):
        with pytest.raises(ValidationError, match="empty sequence"):
            max_pool_sequence(np.zeros((0, 3)))


class TestSimilarityMatrix:
    def test_identical_rows(self):
        sim = similarity_matrix([[1.0, 2.0], [1.0, 2.0]])
        np.testing.assert_allclose(sim.values, np.ones((2, 2)))

    def test_orthogonal_rows(self):
        sim = similarity_matrix([[1.0, 0.0], [0.0, 1.0]])
        assert sim.values[0, 1] == pytest.approx(0.0)

    def test_antiparallel_rows(self):
        sim = similarity_matrix([[1.0, 0.0], [-1.0, 0.0]])
        assert sim.values[0, 1] == pytest.approx(-1.0)

    def test_zero_norm_row_rejected(self):
        with pytest.raises(ValidationError, match="zero-norm row"):
            similarity_matrix([[1.0, 0.0], [0.0, 0.0]])

    def test_single_row_rejected(self):
        with pytest.raises(ValidationError, match="at least 2 rows"):
            similarity_matrix([[1.0, 0.0]])

    def test_invariant_under_row_rescaling(self):
        rng = np.random.default_rng(0)
        acts = rng.standard_normal((5, 8))
        scales = rng.uniform(0.1, 50.0, size=5)
        base = similarity_matrix(acts).values
        scaled = similarity_matrix(acts * scales[:, None]).values
        np.testing.assert_allclose(scaled, base, atol=1e-12)

    def test_validates_invariants(self):
        with pytest.raises(ValidationError, match="not symmetric"):
            sim_of([[1.0, 0.5], [0.1, 1.0]])
        with pytest.raises(ValidationError, match="diagonal"):
            sim_of([[0.5, 0.0], [0.0, 1.0]])


class TestLayerDistance:
    def test_identical_matrices(self):
        sim = sim_of([[1.0, 0.3], [0.3, 1.0]])
        assert layer_distance(sim, sim) == 0.0

    def test_two_point_case(self):
        sim = sim_of([[1.0, 0.2], [0.2, 1.0]])
        ref = sim_of([[1.0, 0.8], [0.8, 1.0]])
        assert layer_distance(sim, ref) == pytest.approx(0.6)

    def test_three_point_mean(self):
        # upper-triangle diffs {0.1, 0.2, 0.3}, mirrored -> mean over 6 entries = 0.2
        sim = sim_of([[1.0, 0.1, 0.2], [0.1, 1.0, 0.3], [0.2, 0.3, 1.0]])
        ref = sim_of([[1.0, 0.2, 0.4], [0.2, 1.0, 0.6], [0.4, 0.6, 1.0]])
        assert layer_distance(sim, ref) == pytest.approx(0.2)

    def test_query_mismatch_rejected(self):
        sim = sim_of(np.eye(2), ids=["a", "b"])
        ref = sim_of(np.eye(2), ids=["a", "c"])
        with pytest.raises(ValidationError, match="query-set mismatch"):
            layer_distance(sim, ref)


class TestInvertNormalize:
    def test_two_models(self):
        np.testing.assert_allclose(invert_normalize([0.2, 0.6]), [1.0, 0.0])

    def test_all_equal_falls_back_to_uniform(self):
        np.testing.assert_allclose(invert_normalize([0.3, 0.3, 0.3]), [1 / 3, 1 / 3, 1 / 3])

    def test_three_models(self):
        np.testing.assert_allclose(invert_normalize([0.0, 0.1, 0.3]), [0.6, 0.4, 0.0])

    def test_ratios_sum_to_one(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            d = rng.uniform(0, 2, size=rng.integers(1, 8))
            assert invert_normalize(d).sum() == pytest.approx(1.0)

    def test_shift_invariance(self):
        rng = np.random.default_rng(2)
        d = rng.uniform(0, 1, size=5)
        np.testing.assert_allclose(invert_normalize(d), invert_normalize(d + 0.37), atol=1e-12)


class TestSigmoidWeights:
    def test_zero_maps_to_half(self):
        assert sigmoid_weights([0.0], 1.0, 0.0)[0] == pytest.approx(0.5)

    def test_sigma_of_one(self):
        np.testing.assert_allclose(sigmoid_weights([1.0, 0.0], 1.0, 0.0), [0.7310585786300049, 0.5])

    def test_a_zero_is_constant(self):
        w = sigmoid_weights([0.0, 0.4, 1.0], 0.0, -1.3)
        np.testing.assert_allclose(w, 1.0 / (1.0 + np.exp(1.3)))

    def test_strictly_increasing(self):
        r = np.linspace(0, 1, 100)
        w = sigmoid_weights(r, 4.0, 0.0)
        assert np.all(np.diff(w) > 0)


def planted_activation_sets(distances_by_model_layer, t=6, seed=0):
    """Activation sets whose per-layer similarity distance to a shared reference
    is controlled by interpolating each model's activations toward the
    reference embedding rows."""
    rng = np.random.default_rng(seed)
    ref_rows = rng.standard_normal((t, 12))
    ref = similarity_matrix(ref_rows)
    noise = rng.standard_normal((t, 12))
    sets = []
    for k, layer_alphas in enumerate(distances_by_model_layer):
        layers = {}
        for l, alpha in enumerate(layer_alphas):
            layers[l] = (1 - alpha) * ref_rows + alpha * noise
        sets.append(ActivationSet(model_id=f"m{k}", layers=layers, query_ids=ref.query_ids))
    return sets, ref


class TestComputeLayerWeights:
    def test_closest_model_gets_largest_weight_everywhere(self):
        sets, ref = planted_activation_sets([[0.0, 0.0, 0.0], [0.6, 0.7, 0.5]])
        lw = compute_layer_weights(sets, ref)
        assert np.all(lw.weights[0] > lw.weights[1])

    def test_single_model_gets_sigma_a_plus_b(self):
        sets, ref = planted_activation_sets([[0.3, 0.5]])
        lw = compute_layer_weights(sets, ref, a=4.0, b=-1.0)
        np.testing.assert_allclose(lw.weights, 1.0 / (1.0 + np.exp(-(4.0 - 1.0))))

    def test_matches_hand_computed_table(self):
        """Spreadsheet-style oracle: recompute the whole N x L table from the
        definition chain (cosine -> off-diag mean -> invert/normalize -> sigmoid)."""
        sets, ref = planted_activation_sets([[0.0, 0.4], [0.2, 0.2], [0.9, 0.1]], t=5, seed=3)
        a, b = 4.0, 0.25
        lw = compute_layer_weights(sets, ref, a=a, b=b)

        for l in range(2):
            dm = []
            for acts in sets:
                mat = acts.layers[l]
                unit = mat / np.linalg.norm(mat, axis=1)[:, None]
                sim = np.clip(unit @ unit.T, -1, 1)
                np.fill_diagonal(sim, 1.0)
                diff = np.abs(sim - ref.values)
                t = mat.shape[0]
                dm.append((diff.sum() - np.trace(diff)) / (t * (t - 1)))
            dm = np.array(dm)
            inv = dm.max() - dm
            r = inv / inv.sum() if inv.sum() else np.full(len(dm), 1 / len(dm))
            w = 1.0 / (1.0 + np.exp(-(a * r + b)))
            np.testing.assert_allclose(lw.distances[:, l], dm, atol=1e-12)
            np.testing.assert_allclose(lw.ratios[:, l], r, atol=1e-12)
            np.testing.assert_allclose(lw.weights[:, l], w, atol=1e-12)

    def test_argmin_distance_is_argmax_weight(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            dm = rng.uniform(0, 1, size=rng.integers(2, 6))
            if np.allclose(dm, dm[0]):
                continue
            w = sigmoid_weights(invert_normalize(dm), 4.0, 0.0)
            assert np.argmin(dm) == np.argmax(w)

    def test_permutation_equivariance(self):
        sets, ref = planted_activation_sets([[0.1, 0.5], [0.3, 0.2], [0.7, 0.9]], seed=6)
        lw = compute_layer_weights(sets, ref)
        perm = [2, 0, 1]
        lw_perm = compute_layer_weights([sets[i] for i in perm], ref)
        np.testing.assert_allclose(lw_perm.weights, lw.weights[perm])

    def test_weights_strictly_inside_unit_interval(self):
        # float64 sigmoid saturates to exactly 1.0 past ~36; test inside that range
        sets, ref = planted_activation_sets([[0.0, 1.0], [1.0, 0.0]], seed=8)
        lw = compute_layer_weights(sets, ref, a=20.0, b=0.0)
        assert np.all(lw.weights > 0.0) and np.all(lw.weights < 1.0)

    def test_mismatched_query_order_rejected(self):
        sets, ref = planted_activation_sets([[0.1], [0.2]])
        sets[1].query_ids = list(reversed(sets[1].query_ids))
        with pytest.raises(ValidationError, match="query order"):
            compute_layer_weights(sets, ref)


class TestActivationSetValidation:
    def test_nan_rejected(self):
        mat = np.zeros((3, 2))
        mat[1, 1] = np.nan
        with pytest.raises(ValidationError, match="NaN"):
            ActivationSet(model_id="m", layers={0: mat}, query_ids=["a", "b", "c"])

    def test_row_count_must_match_query_ids(self):
        with pytest.raises(ValidationError, match="expected 2 rows"):
            ActivationSet(model_id="m", layers={0: np.zeros((3, 2))}, query_ids=["a", "b"])

    def test_layer_indices_must_be_contiguous(self):
        layers = {0: np.zeros((2, 2)), 2: np.zeros((2, 2))}
        with pytest.raises(ValidationError, match="not contiguous"):
            ActivationSet(model_id="m", layers=layers, query_ids=["a", "b"])


class TestContainerLoaders:
    def test_activation_dump_roundtrip(self, tmp_path):
        rng = np.random.default_rng(4)
        ids = ["q0", "q1", "q2"]
        tensors = {}
        for l, d in enumerate((4, 6)):
            mat = rng.standard_normal((3, d)).astype(np.float32)
            tensors[f"layer.{l}"] = TensorRecord(name=f"layer.{l}", dtype="F32", shape=mat.shape, data=mat)
        ckpt = Checkpoint(tensors=tensors, metadata={"query_ids": json.dumps(ids)})
        path = tmp_path / "acts.st"
        write_container(ckpt, path)
        acts = load_activation_set(path, "m0")
        assert acts.query_ids == ids
        assert acts.num_layers == 2
        np.testing.assert_allclose(acts.layers[1], tensors["layer.1"].data)

    def test_reference_similarity_loader(self, tmp_path):
        rng = np.random.default_rng(5)
        emb = rng.standard_normal((4, 7)).astype(np.float32)
        ckpt = Checkpoint(
            tensors={"embeddings": TensorRecord(name="embeddings", dtype="F32", shape=emb.shape, data=emb)},
            metadata={"query_ids": json.dumps(["a", "b", "c", "d"])},
        )
        path = tmp_path / "ref.st"
        write_container(ckpt, path)
        ref = load_reference_similarity(path)
        np.testing.assert_allclose(ref.values, similarity_matrix(emb.astype(np.float64)).values, atol=1e-6)

    def test_missing_query_ids_metadata(self, tmp_path):
        emb = np.ones((2, 2), dtype=np.float32)
        ckpt = Checkpoint(tensors={"embeddings": TensorRecord(name="embeddings", dtype="F32", shape=(2, 2), data=emb)})
        path = tmp_path / "ref.st"
        write_container(ckpt, path)
        with pytest.raises(ValidationError, match="query_ids"):
            load_reference_similarity(path)
