"""Task vectors and the DARE / TIES operations applied to them.

A task vector is the elementwise difference between a fine-tuned checkpoint
and the shared base.  DARE randomly zeroes entries and rescales survivors by
1/(1-p) (expectation-preserving); TIES trims to the top-magnitude entries,
elects a per-element sign by magnitude mass, and discards entries that
disagree with the elected sign.

All delta arrays are flat float32.  DARE draws come from the keyed Philox
stream (seed, model id, tensor name), with the stream position equal to the
element index, so drops are reproducible under any chunking or parallelism.
"""

import math
from dataclasses import dataclass

import numpy as np

from .containers import Checkpoint, require_compatible
from .errors import ValidationError
from .rng import keyed_uniform


@dataclass
class TaskVector:
    """Per-tensor parameter deltas of one fine-tuned model against the base."""

    deltas: dict  # tensor name -> flat float32 array
    source_model: str

    def names(self):
        return set(self.deltas)


@dataclass(frozen=True)
class DareConfig:
    drop_prob: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValidationError(f"drop_prob must be in [0, 1), got {self.drop_prob}")


@dataclass(frozen=True)
class TiesConfig:
    density: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.density <= 1.0:
            raise ValidationError(f"density must be in (0, 1], got {self.density}")


def compute_task_vector(base: Checkpoint, tuned: Checkpoint, source_model: str = "") -> TaskVector:
    """tuned - base, elementwise, in float32."""
    require_compatible(base, tuned)
    deltas = {}
    for name, rec in base.tensors.items():
        deltas[name] = (tuned.tensors[name].data - rec.data).ravel().astype(np.float32)
    return TaskVector(deltas=deltas, source_model=source_model)


def _check_aligned(tvs):
    if not tvs:
        raise ValidationError("need at least one task vector")
    names = tvs[0].names()
    for tv in tvs[1:]:
        if tv.names() != names:
            raise ValidationError("task vectors cover different tensor names")
        for n in names:
            if tv.deltas[n].size != tvs[0].deltas[n].size:
                raise ValidationError(f"task vectors disagree on length of {n!r}")


def dare_sparsify(tv: TaskVector, cfg: DareConfig) -> TaskVector:
    """Zero each element with probability p, scale survivors by 1/(1-p).

    Element i of tensor ``name`` is dropped iff draw i of the stream keyed by
    (cfg.seed, "dare|<model>|<name>") falls below p.
    """
    if cfg.drop_prob == 0.0:
        return TaskVector(deltas={n: d.copy() for n, d in tv.deltas.items()}, source_model=tv.source_model)
    scale = np.float32(1.0 / (1.0 - cfg.drop_prob))
    out = {}
    for name, delta in tv.deltas.items():
        u = keyed_uniform(cfg.seed, f"dare|{tv.source_model}|{name}", delta.size)
        out[name] = np.where(u < cfg.drop_prob, np.float32(0.0), delta * scale).astype(np.float32)
    return TaskVector(deltas=out, source_model=tv.source_model)


def ties_trim(tv: TaskVector, cfg: TiesConfig) -> TaskVector:
    """Keep the top ceil(density * len) entries per tensor by |value|, zero the rest.

    Ties at the magnitude cutoff keep the lower flat index (stable sort).
    """
    out = {}
    for name, delta in tv.deltas.items():
        n = delta.size
        kept = delta.copy()
        if n:
            k = math.ceil(cfg.density * n - 1e-9)
            k = min(max(k, 1), n)
            if k < n:
                order = np.argsort(-np.abs(delta), kind="stable")
                kept = np.zeros_like(delta)
                kept[order[:k]] = delta[order[:k]]
        out[name] = kept
    return TaskVector(deltas=out, source_model=tv.source_model)


def elect_signs(tvs: list) -> dict:
    """Per-element sign election across models by magnitude mass.

    Positive and negative entries vote with their absolute values; the larger
    total wins, ties go positive.  Zero entries abstain.  Returns
    name -> int8 array of +1/-1.
    """
    _check_aligned(tvs)
    signs = {}
    for name in tvs[0].deltas:
        stack = np.stack([tv.deltas[name].astype(np.float64) for tv in tvs])
        pos_mass = np.where(stack > 0, stack, 0.0).sum(axis=0)
        neg_mass = np.where(stack < 0, -stack, 0.0).sum(axis=0)
        signs[name] = np.where(pos_mass >= neg_mass, 1, -1).astype(np.int8)
    return signs


def keep_agreeing(tv: TaskVector, signs: dict) -> TaskVector:
    """Zero every entry whose sign differs from the elected sign."""
    out = {}
    for name, delta in tv.deltas.items():
        agree = np.sign(delta) == signs[name]
        out[name] = np.where(agree, delta, np.float32(0.0)).astype(np.float32)
    return TaskVector(deltas=out, source_model=tv.source_model)


def ties_merge(tvs: list) -> TaskVector:
    """Mean of sign-agreeing entries per element; zero where all models are zero.

    The elected sign is the magnitude-mass winner (ties positive); entries of
    the losing sign and zeros are excluded from the mean.
    """
    _check_aligned(tvs)
    signs = elect_signs(tvs)
    out = {}
    for name in tvs[0].deltas:
        stack = np.stack([tv.deltas[name].astype(np.float64) for tv in tvs])
        agree = np.sign(stack) == signs[name][None, :]
        total = np.where(agree, stack, 0.0).sum(axis=0)
        count = agree.sum(axis=0)
        out[name] = (total / np.maximum(count, 1)).astype(np.float32)
    return TaskVector(deltas=out, source_model="|".join(tv.source_model for tv in tvs))
