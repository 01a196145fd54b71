"""End-to-end merge pipeline.

Load the base and N fine-tuned checkpoints, form task vectors, optionally
DARE-drop and TIES-trim them, run per-element sign election across models
(disagreeing entries contribute nothing), then combine layer-wise:

    merged[n] = base[n] + sum_k w_k(layer(n)) * delta_k[n]

with the consistency weights derived from activation dumps.  Tensors outside
the indexed layers (embeddings, heads, trailing norms) use each model's mean
layer weight.  All merge arithmetic runs in float32 with a fixed accumulation
order (model order, per tensor), so identical configs produce byte-identical
outputs.
"""

import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .containers import (
    Checkpoint,
    LayerMap,
    TensorRecord,
    UNASSIGNED,
    partition_layers,
    read_container,
    require_compatible,
    write_container,
)
from .deltas import DareConfig, TaskVector, TiesConfig, compute_task_vector, dare_sparsify, elect_signs, keep_agreeing, ties_trim
from .errors import ValidationError
from .weights import LayerWeights, compute_layer_weights, load_activation_set, load_reference_similarity


@dataclass
class ModelEntry:
    id: str
    path: str


@dataclass
class MergeConfig:
    base_path: str
    tuned_paths: list  # list of ModelEntry
    activation_paths: list = field(default_factory=list)  # list of ModelEntry, aligned by id
    reference_path: str = None
    layer_pattern: str = r"blocks\.(\d+)\."
    dare: DareConfig = None
    ties: TiesConfig = None
    a: float = 4.0
    b: float = 0.0
    uniform_weights: bool = False

    def __post_init__(self):
        if not self.tuned_paths:
            raise ValidationError("merge config needs at least one fine-tuned model")
        ids = [m.id for m in self.tuned_paths]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate model ids in tuned_paths: {ids}")
        if not self.uniform_weights:
            act_ids = {m.id for m in self.activation_paths}
            for m in self.tuned_paths:
                if m.id not in act_ids:
                    raise ValidationError(f"no activation file for model {m.id!r} (uniform_weights is off)")
            if not self.reference_path:
                raise ValidationError("reference_path is required unless uniform_weights is set")

    def activation_path_for(self, model_id: str) -> str:
        for m in self.activation_paths:
            if m.id == model_id:
                return m.path
        raise ValidationError(f"no activation file for model {model_id!r}")

    def to_dict(self) -> dict:
        return {
            "base_path": str(self.base_path),
            "tuned_paths": [{"id": m.id, "path": str(m.path)} for m in self.tuned_paths],
            "activation_paths": [{"id": m.id, "path": str(m.path)} for m in self.activation_paths],
            "reference_path": str(self.reference_path) if self.reference_path else None,
            "layer_pattern": self.layer_pattern,
            "dare": {"drop_prob": self.dare.drop_prob, "seed": self.dare.seed} if self.dare else None,
            "ties": {"density": self.ties.density} if self.ties else None,
            "a": self.a,
            "b": self.b,
            "uniform_weights": self.uniform_weights,
        }


def _entries(raw, label) -> list:
    entries = []
    for item in raw:
        try:
            entries.append(ModelEntry(id=str(item["id"]), path=str(item["path"])))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"{label}: each entry needs 'id' and 'path' ({exc})") from exc
    return entries


def merge_config_from_dict(raw: dict) -> MergeConfig:
    known = {
        "base_path", "tuned_paths", "activation_paths", "reference_path",
        "layer_pattern", "dare", "ties", "a", "b", "uniform_weights",
    }
    unknown = set(raw) - known
    if unknown:
        raise ValidationError(f"unknown merge config keys: {sorted(unknown)}")
    if "base_path" not in raw or "tuned_paths" not in raw:
        raise ValidationError("merge config requires base_path and tuned_paths")
    dare = raw.get("dare")
    ties = raw.get("ties")
    return MergeConfig(
        base_path=str(raw["base_path"]),
        tuned_paths=_entries(raw["tuned_paths"], "tuned_paths"),
        activation_paths=_entries(raw.get("activation_paths", []), "activation_paths"),
        reference_path=raw.get("reference_path"),
        layer_pattern=raw.get("layer_pattern", r"blocks\.(\d+)\."),
        dare=DareConfig(drop_prob=float(dare["drop_prob"]), seed=int(dare.get("seed", 0))) if dare else None,
        ties=TiesConfig(density=float(ties["density"])) if ties else None,
        a=float(raw.get("a", 4.0)),
        b=float(raw.get("b", 0.0)),
        uniform_weights=bool(raw.get("uniform_weights", False)),
    )


def load_merge_config(path) -> MergeConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON config ({exc})") from exc
    return merge_config_from_dict(raw)


def _merge_one(name: str, base_rec: TensorRecord, tvs, per_model_w) -> TensorRecord:
    acc = base_rec.data.ravel().astype(np.float32, copy=True)
    for tv, w in zip(tvs, per_model_w):
        acc = acc + np.float32(w) * tv.deltas[name]
    return TensorRecord(name=name, dtype=base_rec.dtype, shape=base_rec.shape, data=acc.reshape(base_rec.shape))


def merge_models(base: Checkpoint, tvs: list, lw: LayerWeights, lm: LayerMap, threads: int = 1) -> Checkpoint:
    """Apply layer-weighted task vectors to the base checkpoint.

    Unassigned tensors use each model's mean weight across layers.  The
    accumulation order is fixed (model order), so the result is deterministic.
    """
    n_models = len(tvs)
    if lw.weights.shape[0] != n_models:
        raise ValidationError(f"weight matrix has {lw.weights.shape[0]} rows for {n_models} task vectors")
    if lw.weights.shape[1] != lm.num_layers:
        raise ValidationError(
            f"weight matrix has {lw.weights.shape[1]} columns for {lm.num_layers} layers"
        )
    base_names = set(base.tensors)
    for tv in tvs:
        if tv.names() != base_names:
            raise ValidationError(f"task vector {tv.source_model!r} does not cover the base tensor names")

    mean_w = lw.weights.mean(axis=1) if lm.num_layers > 0 else np.ones(n_models)
    names = sorted(base.tensors)

    def weights_for(name):
        layer = lm.assignments[name]
        if layer is UNASSIGNED:
            return mean_w
        return lw.weights[:, layer]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {name: pool.submit(_merge_one, name, base.tensors[name], tvs, weights_for(name)) for name in names}
            merged = {name: futures[name].result() for name in names}
    else:
        merged = {name: _merge_one(name, base.tensors[name], tvs, weights_for(name)) for name in names}
    return Checkpoint(tensors=merged, metadata=dict(base.metadata))


def run_merge_pipeline(cfg: MergeConfig, out_path, report_path=None, threads: int = 1, log=None):
    """Run the full merge and write the merged container plus a JSON weight report."""
    log = log or (lambda msg: print(msg, file=sys.stderr))

    def read_with_context(path, what):
        try:
            return read_container(path)
        except FileNotFoundError:
            raise FileNotFoundError(f"{what}: file not found: {path}") from None

    base = read_with_context(cfg.base_path, "base model")
    tuned = []
    for entry in cfg.tuned_paths:
        ckpt = read_with_context(entry.path, f"model {entry.id!r}")
        try:
            require_compatible(base, ckpt)
        except ValidationError as exc:
            raise ValidationError(f"model {entry.id!r}: {exc}") from None
        tuned.append(ckpt)

    lm = partition_layers(base, cfg.layer_pattern)
    log(f"loaded base + {len(tuned)} models, {lm.num_layers} layers")

    tvs = [compute_task_vector(base, ckpt, entry.id) for entry, ckpt in zip(cfg.tuned_paths, tuned)]
    if cfg.dare is not None:
        tvs = [dare_sparsify(tv, cfg.dare) for tv in tvs]
    if cfg.ties is not None:
        tvs = [ties_trim(tv, cfg.ties) for tv in tvs]
        signs = elect_signs(tvs)
        tvs = [keep_agreeing(tv, signs) for tv in tvs]

    model_ids = [entry.id for entry in cfg.tuned_paths]
    if cfg.uniform_weights:
        lw = LayerWeights(
            weights=np.ones((len(tvs), lm.num_layers)),
            a=cfg.a,
            b=cfg.b,
            model_ids=model_ids,
        )
    else:
        activation_sets = []
        for entry in cfg.tuned_paths:
            act_path = cfg.activation_path_for(entry.id)
            try:
                activation_sets.append(load_activation_set(act_path, entry.id))
            except FileNotFoundError:
                raise FileNotFoundError(f"activation file for model {entry.id!r} not found: {act_path}") from None
        ref = load_reference_similarity(cfg.reference_path)
        lw = compute_layer_weights(activation_sets, ref, cfg.a, cfg.b)

    merged = merge_models(base, tvs, lw, lm, threads=threads)
    write_container(merged, out_path)
    log(f"wrote merged checkpoint to {out_path}")

    report = {
        "weights": lw.weights.tolist(),
        "distances": lw.distances.tolist() if lw.distances is not None else None,
        "layers": lm.num_layers,
        "models": model_ids,
        "config": cfg.to_dict(),
    }
    if report_path is not None:
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        log(f"wrote weight report to {report_path}")
    return merged, report
