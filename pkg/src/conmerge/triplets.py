"""Triplet mining and the margin loss used alongside cross-entropy.

Triplets pair each anchor with a positive sampled from its 10 nearest
neighbors and a negative from its 10 farthest, ranked by Euclidean distance
over an embedding table.  The loss is max(0, d(A,P) - d(A,N) + margin); an
analytic subgradient is provided so the math can be checked against finite
differences.
"""

import json
from dataclasses import dataclass

import numpy as np

from .containers import read_container
from .errors import ValidationError
from .rng import keyed_generator
from .weights import _query_ids_from_metadata

NEIGHBORHOOD = 10


@dataclass
class EmbeddingTable:
    ids: list
    vectors: np.ndarray  # (T, E)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.ids):
            raise ValidationError(
                f"embedding matrix shape {self.vectors.shape} does not match {len(self.ids)} ids"
            )
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate ids in embedding table")
        if not np.isfinite(self.vectors).all():
            raise ValidationError("non-finite entries in embedding table")


@dataclass(frozen=True)
class Triplet:
    anchor_id: str
    positive_id: str
    negative_id: str


def load_embedding_table(path) -> EmbeddingTable:
    """Embedding table from a container with an "embeddings" tensor and query_ids."""
    ckpt = read_container(path)
    ids = _query_ids_from_metadata(ckpt, path)
    try:
        vectors = ckpt.tensors["embeddings"].data
    except KeyError:
        raise ValidationError(f"{path}: missing 'embeddings' tensor") from None
    return EmbeddingTable(ids=ids, vectors=vectors)


def _pairwise_distances(vectors: np.ndarray, i: int, distance: str) -> np.ndarray:
    if distance == "euclidean":
        return np.linalg.norm(vectors - vectors[i], axis=1)
    if distance == "cosine":
        norms = np.linalg.norm(vectors, axis=1)
        if (norms == 0).any():
            raise ValidationError("cosine distance undefined for zero vectors")
        sims = vectors @ vectors[i] / (norms * norms[i])
        return 1.0 - np.clip(sims, -1.0, 1.0)
    raise ValidationError(f"unknown distance {distance!r}; use 'euclidean' or 'cosine'")


def mine_triplets(tbl: EmbeddingTable, seed: int, per_anchor: int = 1, distance: str = "euclidean") -> list:
    """Sample per_anchor (anchor, positive, negative) triplets for every anchor.

    Positives come uniformly from the anchor's 10 nearest other points,
    negatives from its 10 farthest; distance ties rank by table order.  Each
    anchor has its own keyed substream, so results do not depend on
    scheduling.  Euclidean distance by default, cosine as an option.
    """
    t = len(tbl.ids)
    if t < 2 * NEIGHBORHOOD + 1:
        raise ValidationError(f"need at least {2 * NEIGHBORHOOD + 1} points to mine triplets, got {t}")
    if per_anchor < 1:
        raise ValidationError(f"per_anchor must be >= 1, got {per_anchor}")

    triplets = []
    for i in range(t):
        dists = _pairwise_distances(tbl.vectors, i, distance)
        others = [j for j in range(t) if j != i]
        ranked = sorted(others, key=lambda j: (dists[j], j))
        nearest = ranked[:NEIGHBORHOOD]
        farthest = ranked[-NEIGHBORHOOD:]
        gen = keyed_generator(seed, f"triplet|{i}")
        for _ in range(per_anchor):
            p = nearest[int(gen.integers(NEIGHBORHOOD))]
            n = farthest[int(gen.integers(NEIGHBORHOOD))]
            triplets.append(Triplet(anchor_id=tbl.ids[i], positive_id=tbl.ids[p], negative_id=tbl.ids[n]))
    return triplets


def _cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("cosine distance undefined for zero vectors")
    return 1.0 - float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def _distances(f_anchor, f_positive, f_negative, distance: str = "euclidean"):
    a = np.asarray(f_anchor, dtype=np.float64).ravel()
    p = np.asarray(f_positive, dtype=np.float64).ravel()
    n = np.asarray(f_negative, dtype=np.float64).ravel()
    if not (a.shape == p.shape == n.shape):
        raise ValidationError(f"vector dimensions differ: {a.shape}, {p.shape}, {n.shape}")
    if distance == "euclidean":
        return a, p, n, float(np.linalg.norm(a - p)), float(np.linalg.norm(a - n))
    if distance == "cosine":
        return a, p, n, _cosine_distance(a, p), _cosine_distance(a, n)
    raise ValidationError(f"unknown distance {distance!r}; use 'euclidean' or 'cosine'")


def triplet_loss(f_anchor, f_positive, f_negative, margin: float = 1.0, distance: str = "euclidean") -> float:
    """max(0, d(A,P) - d(A,N) + margin); d is Euclidean by default, cosine optionally."""
    if margin < 0:
        raise ValidationError(f"margin must be >= 0, got {margin}")
    _, _, _, d_ap, d_an = _distances(f_anchor, f_positive, f_negative, distance)
    return max(0.0, d_ap - d_an + margin)


def triplet_loss_gradient(f_anchor, f_positive, f_negative, margin: float = 1.0):
    """Analytic subgradient of the Euclidean triplet loss w.r.t. each input vector.

    Returns (grad_anchor, grad_positive, grad_negative); all zeros when the
    hinge is inactive.  Zero anchor-positive or anchor-negative distance has
    no defined direction and raises.
    """
    a, p, n, d_ap, d_an = _distances(f_anchor, f_positive, f_negative)
    if d_ap == 0.0 or d_an == 0.0:
        raise ValidationError("gradient undefined at zero anchor-positive or anchor-negative distance")
    if d_ap - d_an + margin <= 0.0:
        z = np.zeros_like(a)
        return z, z.copy(), z.copy()
    unit_ap = (a - p) / d_ap
    unit_an = (a - n) / d_an
    return unit_ap - unit_an, -unit_ap, unit_an


def combined_loss(ce: float, tl: float, alpha: float = 0.1) -> float:
    """Cross-entropy plus alpha-weighted triplet term."""
    if ce < 0 or tl < 0:
        raise ValidationError("loss terms must be non-negative")
    if alpha < 0:
        raise ValidationError(f"alpha must be >= 0, got {alpha}")
    return ce + alpha * tl


def write_triplets(triplets: list, path):
    with open(path, "w", encoding="utf-8") as fh:
        for t in triplets:
            fh.write(
                json.dumps(
                    {"anchor_id": t.anchor_id, "positive_id": t.positive_id, "negative_id": t.negative_id}
                )
                + "\n"
            )


def read_triplets(path) -> list:
    triplets = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                triplets.append(
                    Triplet(
                        anchor_id=str(raw["anchor_id"]),
                        positive_id=str(raw["positive_id"]),
                        negative_id=str(raw["negative_id"]),
                    )
                )
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValidationError(f"line {lineno}: bad triplet record ({exc})") from exc
    return triplets
