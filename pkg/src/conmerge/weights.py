"""Layer-wise consistency weights from activation similarity structure.

For every model and layer, the pairwise cosine similarity matrix of pooled
dev-set activations is compared against a reference similarity matrix built
from external sentence embeddings.  Per layer, each model's distance (mean
off-diagonal absolute difference) is inverted against the per-layer maximum,
normalized into ratios that sum to 1, and pushed through a sigmoid to yield
the merge weight for that model's layer.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .containers import Checkpoint, read_container
from .errors import ValidationError


@dataclass
class ActivationSet:
    """Per-layer pooled activation matrices (T x D_l) for one model."""

    model_id: str
    layers: dict  # layer index -> ndarray of shape (T, D_l)
    query_ids: list

    def __post_init__(self):
        if not self.layers:
            raise ValidationError(f"model {self.model_id!r}: no layers in activation set")
        t = len(self.query_ids)
        for l, mat in self.layers.items():
            mat = np.asarray(mat, dtype=np.float64)
            if mat.ndim != 2 or mat.shape[0] != t:
                raise ValidationError(
                    f"model {self.model_id!r} layer {l}: expected {t} rows, got shape {mat.shape}"
                )
            if np.isnan(mat).any():
                raise ValidationError(f"model {self.model_id!r} layer {l}: NaN activations")
            self.layers[l] = mat
        if sorted(self.layers) != list(range(len(self.layers))):
            raise ValidationError(
                f"model {self.model_id!r}: layer indices not contiguous from 0: {sorted(self.layers)}"
            )

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass
class SimilarityMatrix:
    """Symmetric T x T matrix of pairwise similarities with unit diagonal."""

    values: np.ndarray
    query_ids: list

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        t = len(self.query_ids)
        if v.shape != (t, t):
            raise ValidationError(f"similarity matrix shape {v.shape} does not match {t} query ids")
        if not np.allclose(v, v.T, atol=1e-6):
            raise ValidationError("similarity matrix is not symmetric")
        if not np.allclose(np.diag(v), 1.0, atol=1e-6):
            raise ValidationError("similarity matrix diagonal is not 1")
        if v.min() < -1 - 1e-6 or v.max() > 1 + 1e-6:
            raise ValidationError("similarity entries outside [-1, 1]")
        self.values = v


@dataclass
class LayerWeights:
    """N x L matrix of merge weights w = sigmoid(a * r + b), plus the inputs that produced it."""

    weights: np.ndarray  # (N, L)
    a: float
    b: float
    model_ids: list = field(default_factory=list)
    distances: np.ndarray = None  # (N, L), None when weights were not derived from activations
    ratios: np.ndarray = None  # (N, L)


def max_pool_sequence(seq_activations) -> np.ndarray:
    """Columnwise max over the sequence dimension of an S x D matrix."""
    seq = np.asarray(seq_activations, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] < 1:
        raise ValidationError("empty sequence: need at least one row to pool")
    return seq.max(axis=0)


def similarity_matrix(acts, query_ids=None) -> SimilarityMatrix:
    """Pairwise cosine similarity of the rows of a T x D activation matrix."""
    mat = np.asarray(acts, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 2:
        raise ValidationError(f"need at least 2 rows for a similarity matrix, got shape {mat.shape}")
    norms = np.linalg.norm(mat, axis=1)
    if (norms <= 1e-12).any():
        bad = int(np.argmax(norms <= 1e-12))
        raise ValidationError(f"zero-norm row {bad} in activation matrix")
    unit = mat / norms[:, None]
    values = np.clip(unit @ unit.T, -1.0, 1.0)
    np.fill_diagonal(values, 1.0)
    if query_ids is None:
        query_ids = [str(i) for i in range(mat.shape[0])]
    return SimilarityMatrix(values=values, query_ids=list(query_ids))


def layer_distance(sim: SimilarityMatrix, ref: SimilarityMatrix) -> float:
    """Mean absolute difference over off-diagonal entries of two similarity matrices."""
    if list(sim.query_ids) != list(ref.query_ids):
        raise ValidationError("query-set mismatch between similarity matrix and reference")
    t = len(sim.query_ids)
    diff = np.abs(sim.values - ref.values)
    off_diag_sum = diff.sum() - np.trace(diff)
    return float(off_diag_sum / (t * (t - 1)))


def invert_normalize(distances) -> np.ndarray:
    """Invert distances against their max and normalize to ratios summing to 1.

    All-equal distances (zero total after inversion) fall back to uniform 1/N.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.size < 1:
        raise ValidationError("need at least one distance")
    if (d < 0).any():
        raise ValidationError("distances must be non-negative")
    inverted = d.max() - d
    total = inverted.sum()
    if total == 0.0:
        return np.full(d.size, 1.0 / d.size)
    return inverted / total


def sigmoid_weights(ratios, a: float, b: float) -> np.ndarray:
    """w = sigmoid(a * r + b), elementwise."""
    r = np.asarray(ratios, dtype=np.float64)
    return 1.0 / (1.0 + np.exp(-(a * r + b)))


def compute_layer_weights(activation_sets: list, ref: SimilarityMatrix, a: float = 4.0, b: float = 0.0) -> LayerWeights:
    """Derive the N x L weight matrix from per-model activation dumps and a reference.

    Per layer: cosine similarity matrices per model, distance to the
    reference, inverted normalization, sigmoid.
    """
    if not activation_sets:
        raise ValidationError("need at least one activation set")
    first = activation_sets[0]
    num_layers = first.num_layers
    for acts in activation_sets:
        if set(acts.layers) != set(first.layers):
            raise ValidationError(f"model {acts.model_id!r}: layer indices differ across models")
        if list(acts.query_ids) != list(ref.query_ids):
            raise ValidationError(f"model {acts.model_id!r}: query order does not match the reference")

    n = len(activation_sets)
    distances = np.zeros((n, num_layers))
    ratios = np.zeros((n, num_layers))
    weights = np.zeros((n, num_layers))
    for l in sorted(first.layers):
        for k, acts in enumerate(activation_sets):
            sim = similarity_matrix(acts.layers[l], acts.query_ids)
            distances[k, l] = layer_distance(sim, ref)
        ratios[:, l] = invert_normalize(distances[:, l])
        weights[:, l] = sigmoid_weights(ratios[:, l], a, b)
    return LayerWeights(
        weights=weights,
        a=a,
        b=b,
        model_ids=[acts.model_id for acts in activation_sets],
        distances=distances,
        ratios=ratios,
    )


def _query_ids_from_metadata(ckpt: Checkpoint, path) -> list:
    try:
        ids = json.loads(ckpt.metadata["query_ids"])
    except KeyError:
        raise ValidationError(f"{path}: missing query_ids metadata") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: query_ids metadata is not valid JSON ({exc})") from exc
    if not isinstance(ids, list) or not all(isinstance(q, str) for q in ids):
        raise ValidationError(f"{path}: query_ids metadata must be a JSON array of strings")
    return ids


def load_activation_set(path, model_id: str) -> ActivationSet:
    """Read an activation dump container: tensors "layer.{l}" plus query_ids metadata."""
    ckpt = read_container(path)
    ids = _query_ids_from_metadata(ckpt, path)
    layers = {}
    for name, rec in ckpt.tensors.items():
        if not name.startswith("layer."):
            continue
        layers[int(name.split(".", 1)[1])] = rec.data
    if not layers:
        raise ValidationError(f"{path}: no layer.* tensors in activation dump")
    if sorted(layers) != list(range(len(layers))):
        raise ValidationError(f"{path}: layer indices not contiguous from 0: {sorted(layers)}")
    return ActivationSet(model_id=model_id, layers=layers, query_ids=ids)


def load_reference_embeddings(path):
    """Read a reference-embedding container: tensor "embeddings" [T, E] plus query_ids."""
    ckpt = read_container(path)
    ids = _query_ids_from_metadata(ckpt, path)
    try:
        emb = ckpt.tensors["embeddings"].data
    except KeyError:
        raise ValidationError(f"{path}: missing 'embeddings' tensor") from None
    if emb.ndim != 2 or emb.shape[0] != len(ids):
        raise ValidationError(f"{path}: embeddings shape {emb.shape} does not match {len(ids)} query ids")
    return np.asarray(emb, dtype=np.float64), ids


def load_reference_similarity(path) -> SimilarityMatrix:
    """Reference similarity matrix from an external embedding container."""
    emb, ids = load_reference_embeddings(path)
    return similarity_matrix(emb, ids)
