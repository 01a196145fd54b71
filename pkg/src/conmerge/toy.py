"""Deterministic miniature layered network standing in for an LLM.

A ToyNet is a stack of affine+tanh blocks named "blocks.{l}.w"/"blocks.{l}.b"
plus "embed" and "head" tensors that fall outside the indexed layers, so
exported checkpoints exercise the same partitioning and merging paths as a
real model.  Everything is derived from keyed Philox streams: same
(seed, dims) means identical parameters, bytes included.
"""

import json
from dataclasses import dataclass

import numpy as np

from .containers import Checkpoint, TensorRecord, write_container
from .errors import ValidationError
from .rng import keyed_generator, keyed_normal
from .variations import QueryRecord, write_query_corpus

EMBED_ROWS = 16
HEAD_WIDTH = 4

# Parameters and perturbation noise live on a 2^-10 dyadic grid.  With values
# bounded well under 2^13, float32 sums of parameters and power-of-two-scaled
# deltas are exact, so recorded deltas survive checkpoint round trips
# bit-for-bit.
GRID = 1024.0


def _snap(values: np.ndarray) -> np.ndarray:
    return (np.round(values * GRID) / GRID).astype(np.float32)


@dataclass
class ToyNet:
    dims: tuple  # widths, layer l maps dims[l] -> dims[l+1]
    seed: int
    params: dict  # name -> float32 ndarray

    @property
    def num_layers(self) -> int:
        return len(self.dims) - 1


def init_toy_net(seed: int, dims) -> ToyNet:
    """Fresh network with parameters drawn from (seed, tensor name) streams."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < 2:
        raise ValidationError(f"need at least [input, output] widths, got dims={list(dims)}")
    if any(d < 1 for d in dims):
        raise ValidationError(f"widths must be positive, got dims={list(dims)}")
    params = {}
    for l in range(len(dims) - 1):
        fan_in, fan_out = dims[l], dims[l + 1]
        w = keyed_normal(seed, f"toy|blocks.{l}.w", fan_in * fan_out) / np.sqrt(fan_in)
        params[f"blocks.{l}.w"] = _snap(w).reshape(fan_in, fan_out)
        b = 0.1 * keyed_normal(seed, f"toy|blocks.{l}.b", fan_out)
        params[f"blocks.{l}.b"] = _snap(b)
    params["embed"] = _snap(keyed_normal(seed, "toy|embed", EMBED_ROWS * dims[0])).reshape(EMBED_ROWS, dims[0])
    head = keyed_normal(seed, "toy|head", dims[-1] * HEAD_WIDTH) / np.sqrt(dims[-1])
    params["head"] = _snap(head).reshape(dims[-1], HEAD_WIDTH)
    return ToyNet(dims=dims, seed=seed, params=params)


def perturb(net: ToyNet, seed: int, scale: float):
    """Add keyed noise of the given scale to every parameter.

    Returns (perturbed net, exact per-tensor delta).  Deltas scale exactly
    linearly in ``scale`` for a fixed seed; with a power-of-two scale the
    float32 addition is exact, so the delta is recoverable bit-for-bit from
    the two checkpoints.
    """
    if scale <= 0:
        raise ValidationError(f"scale must be positive, got {scale}")
    new_params = {}
    deltas = {}
    for name, value in net.params.items():
        noise = np.round(keyed_normal(seed, f"perturb|{name}", value.size) * GRID) / GRID
        delta = (np.float64(scale) * noise).astype(np.float32).reshape(value.shape)
        deltas[name] = delta
        new_params[name] = value + delta
    return ToyNet(dims=net.dims, seed=net.seed, params=new_params), deltas


def forward_with_activations(net: ToyNet, token_vectors):
    """Run the stack per token position and max-pool each layer over positions.

    Returns (output vector, {layer index -> pooled activation vector}).
    """
    h = np.asarray(token_vectors, dtype=np.float32)
    if h.ndim != 2 or h.shape[0] < 1:
        raise ValidationError(f"empty sequence: token matrix must be S x {net.dims[0]} with S >= 1")
    if h.shape[1] != net.dims[0]:
        raise ValidationError(f"token width {h.shape[1]} does not match input width {net.dims[0]}")
    pooled = {}
    for l in range(net.num_layers):
        h = np.tanh(h @ net.params[f"blocks.{l}.w"] + net.params[f"blocks.{l}.b"])
        pooled[l] = h.max(axis=0)
    output = pooled[net.num_layers - 1] @ net.params["head"]
    return output, pooled


def hash_embed(query: str, dim: int, seed: int = 0) -> np.ndarray:
    """Deterministic pseudo-random unit vector for a query string.

    Similar strings do NOT get similar vectors; this is a featurizer for
    tests and fixtures, not a semantic encoder.
    """
    if dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    v = keyed_normal(seed, f"embed|{query}", dim)
    norm = np.linalg.norm(v)
    if norm == 0.0:  # vanishing probability, but stay total
        v = np.ones(dim)
        norm = np.linalg.norm(v)
    return v / norm


def to_checkpoint(net: ToyNet) -> Checkpoint:
    """Export the network parameters as a container checkpoint."""
    tensors = {
        name: TensorRecord(name=name, dtype="F32", shape=value.shape, data=value)
        for name, value in net.params.items()
    }
    metadata = {"dims": json.dumps(list(net.dims)), "seed": str(net.seed)}
    return Checkpoint(tensors=tensors, metadata=metadata)


def default_dev_queries(count: int = 16) -> list:
    """A small synthetic dev set with varied phrasing."""
    topics = ["customer feedback", "shipment tracking", "account access", "billing statements", "contact lists"]
    stems = ["how do we handle", "how to handle", "can we review", "what is the process for"]
    return [
        QueryRecord(id=f"q{i:02d}", query=f"{stems[i % len(stems)]} {topics[i % len(topics)]} case {i}")
        for i in range(count)
    ]


def _activation_container(net: ToyNet, queries: list, token_seed: int, tokens_per_query: int = 4) -> Checkpoint:
    per_layer = {l: [] for l in range(net.num_layers)}
    for q in queries:
        tokens = np.stack(
            [hash_embed(f"{q.query}|tok{j}", net.dims[0], token_seed) for j in range(tokens_per_query)]
        )
        _, pooled = forward_with_activations(net, tokens)
        for l, vec in pooled.items():
            per_layer[l].append(vec)
    tensors = {}
    for l, rows in per_layer.items():
        mat = np.stack(rows).astype(np.float32)
        tensors[f"layer.{l}"] = TensorRecord(name=f"layer.{l}", dtype="F32", shape=mat.shape, data=mat)
    metadata = {"query_ids": json.dumps([q.id for q in queries])}
    return Checkpoint(tensors=tensors, metadata=metadata)


def make_toy_fixture(out_dir, seed: int = 0, dims=(8, 16, 16, 12, 8), num_models: int = 3,
                     num_queries: int = 16, perturb_scale: float = 0.0625, ref_dim: int = 24) -> dict:
    """Emit a complete merge scenario: base, variants, activations, reference, dev set, config.

    Returns the path map, which doubles as the merge config skeleton.
    """
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = init_toy_net(seed, dims)
    write_container(to_checkpoint(base), out / "base.st")

    queries = default_dev_queries(num_queries)
    write_query_corpus(queries, out / "devset.jsonl")

    model_ids, tuned_paths, act_paths = [], [], []
    for k in range(num_models):
        variant, _ = perturb(base, seed=seed * 1000 + k + 1, scale=perturb_scale)
        model_id = f"model{k}"
        model_path = out / f"{model_id}.st"
        write_container(to_checkpoint(variant), model_path)
        acts = _activation_container(variant, queries, token_seed=seed)
        act_path = out / f"acts_{model_id}.st"
        write_container(acts, act_path)
        model_ids.append(model_id)
        tuned_paths.append(str(model_path))
        act_paths.append(str(act_path))

    ref = np.stack([hash_embed(q.query, ref_dim, seed + 71) for q in queries]).astype(np.float32)
    ref_ckpt = Checkpoint(
        tensors={"embeddings": TensorRecord(name="embeddings", dtype="F32", shape=ref.shape, data=ref)},
        metadata={"query_ids": json.dumps([q.id for q in queries])},
    )
    ref_path = out / "reference.st"
    write_container(ref_ckpt, ref_path)

    config = {
        "base_path": str(out / "base.st"),
        "tuned_paths": [{"id": mid, "path": p} for mid, p in zip(model_ids, tuned_paths)],
        "activation_paths": [{"id": mid, "path": p} for mid, p in zip(model_ids, act_paths)],
        "reference_path": str(ref_path),
        "layer_pattern": r"blocks\.(\d+)\.",
        "dare": {"drop_prob": 0.5, "seed": seed},
        "ties": {"density": 0.2},
        "a": 4.0,
        "b": 0.0,
        "uniform_weights": False,
    }
    with open(out / "merge.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2)
        fh.write("\n")
    return config
