"""Run a dev set through a transformer and dump max-pooled per-layer activations.

Hidden states are taken post-block (the residual stream after each decoder/
encoder block); padded positions are masked out before pooling over the
token dimension.  Everything runs in float32 under no_grad with eval-mode
modules, so repeated exports are deterministic.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .containers import write_container

logger = logging.getLogger(__name__)


class ExportError(Exception):
    """Model/encoder loading or inference failed."""


@dataclass
class ExportJob:
    model_ref: str  # local path or hub id
    dev_set_path: str
    output_path: str
    layers: list = None  # block indices to export; None = all blocks
    batch_size: int = 8
    max_length: int = 128
    pooling: str = field(default="max", init=False)  # fixed


def read_dev_set(path) -> list:
    """(id, query) pairs from a JSON Lines dev-set file, in file order."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                records.append((str(raw["id"]), raw["query"]))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ExportError(f"{path} line {lineno}: bad dev-set record ({exc})") from exc
    return records


def _load(model_ref, auto_cls):
    from transformers import AutoTokenizer

    try:
        model = auto_cls.from_pretrained(model_ref)
        tokenizer = AutoTokenizer.from_pretrained(model_ref)
    except Exception as exc:
        raise ExportError(f"failed to load model {model_ref!r}: {exc}") from exc
    model = model.float().eval()
    return model, tokenizer


def _batched_hidden_states(model, tokenizer, queries, batch_size, max_length):
    """Yields (per-layer hidden states tuple, attention mask) per batch."""
    for start in range(0, len(queries), batch_size):
        batch = queries[start : start + batch_size]
        enc = tokenizer(batch, return_tensors="pt", padding=True, truncation=True, max_length=max_length)
        try:
            with torch.no_grad():
                out = model(**enc, output_hidden_states=True)
        except (torch.cuda.OutOfMemoryError, MemoryError) as exc:
            raise ExportError(
                f"out of memory on a batch of {len(batch)}; retry with a smaller batch size"
            ) from exc
        yield out.hidden_states, enc["attention_mask"]


def _masked_max_pool(hidden: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Max over real token positions of a (B, S, D) tensor."""
    neg = torch.finfo(hidden.dtype).min
    masked = hidden.masked_fill(mask[:, :, None] == 0, neg)
    return masked.max(dim=1).values


def export_activations(job: ExportJob) -> str:
    """Write one "layer.{l}" tensor of shape [T, D_l] per selected block."""
    records = read_dev_set(job.dev_set_path)
    if not records:
        raise ExportError(f"empty dev set: {job.dev_set_path}")
    ids = [rid for rid, _ in records]
    queries = [q for _, q in records]

    from transformers import AutoModel

    model, tokenizer = _load(job.model_ref, AutoModel)
    rows_per_layer = None
    for hidden_states, mask in _batched_hidden_states(model, tokenizer, queries, job.batch_size, job.max_length):
        blocks = hidden_states[1:]  # drop the embedding output; keep post-block states
        selected = job.layers if job.layers is not None else list(range(len(blocks)))
        if rows_per_layer is None:
            rows_per_layer = {out_idx: [] for out_idx in range(len(selected))}
        for out_idx, block_idx in enumerate(selected):
            if not 0 <= block_idx < len(blocks):
                raise ExportError(f"layer {block_idx} out of range; model has {len(blocks)} blocks")
            pooled = _masked_max_pool(blocks[block_idx], mask)
            rows_per_layer[out_idx].append(pooled.float().numpy())

    tensors = {
        f"layer.{out_idx}": np.concatenate(chunks, axis=0) for out_idx, chunks in rows_per_layer.items()
    }
    for name, mat in tensors.items():
        if mat.shape[0] != len(ids):
            raise ExportError(f"{name}: pooled {mat.shape[0]} rows for {len(ids)} queries")
    metadata = {"query_ids": json.dumps(ids)}
    if job.layers is not None:
        metadata["source_layers"] = json.dumps(list(job.layers))
    write_container(tensors, job.output_path, metadata)
    logger.info("wrote %d layers x %d queries to %s", len(tensors), len(ids), job.output_path)
    return job.output_path


def export_reference_embeddings(dev_set_path, encoder_ref, output_path, batch_size: int = 8,
                                max_length: int = 128) -> str:
    """Write an "embeddings" tensor [T, E]: mean-pooled, L2-normalized encoder states."""
    records = read_dev_set(dev_set_path)
    if not records:
        raise ExportError(f"empty dev set: {dev_set_path}")
    ids = [rid for rid, _ in records]
    queries = [q for _, q in records]

    from transformers import AutoModel

    model, tokenizer = _load(encoder_ref, AutoModel)
    chunks = []
    for hidden_states, mask in _batched_hidden_states(model, tokenizer, queries, batch_size, max_length):
        last = hidden_states[-1]
        weights = mask[:, :, None].to(last.dtype)
        summed = (last * weights).sum(dim=1)
        counts = weights.sum(dim=1).clamp(min=1.0)
        mean = summed / counts
        unit = mean / mean.norm(dim=1, keepdim=True).clamp(min=1e-12)
        chunks.append(unit.float().numpy())
    embeddings = np.concatenate(chunks, axis=0)
    write_container({"embeddings": embeddings}, output_path, {"query_ids": json.dumps(ids)})
    logger.info("wrote %d x %d reference embeddings to %s", *embeddings.shape, output_path)
    return output_path
