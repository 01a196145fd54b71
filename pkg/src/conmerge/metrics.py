"""Accuracy and consistency metrics for response pairs.

Accuracy: ROUGE-L (LCS-based precision/recall/F1) and sentence BLEU with up
to 4-grams, no smoothing.  Consistency: exact match (EM), response
similarity (RS = ROUGE-L F1 above a threshold), and embedding cosine
similarity (BS) over precomputed response embeddings.  All metrics share one
tokenizer: lowercase, whitespace split, leading/trailing punctuation
stripped per token.
"""

import json
import math
import string
from collections import Counter
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .containers import read_container
from .errors import ValidationError


class VariationType(str, Enum):
    HOW_TO_DO = "HOW_TO_DO"
    SEMANTIC = "SEMANTIC"
    SING_PLUR_ARTICLE = "SING_PLUR_ARTICLE"


@dataclass
class ResponsePair:
    """One original/variant query pair with the two responses to compare."""

    id: str
    query: str
    query_variant: str
    response: str
    response_variant: str
    variation_type: VariationType


@dataclass
class ConsistencyReport:
    em_rate: float
    rs_rate: float
    bs_mean: float  # None when embeddings were not supplied
    threshold: float
    num_pairs: int
    by_variation_type: dict  # type value -> {"em_rate", "rs_rate", "bs_mean", "num_pairs"}

    def to_dict(self) -> dict:
        return {
            "em_rate": self.em_rate,
            "rs_rate": self.rs_rate,
            "bs_mean": self.bs_mean,
            "threshold": self.threshold,
            "num_pairs": self.num_pairs,
            "by_variation_type": self.by_variation_type,
        }


def tokenize(s: str) -> list:
    """Lowercase, split on whitespace, strip edge punctuation, drop empties."""
    out = []
    for raw in s.lower().split():
        tok = raw.strip(string.punctuation)
        if tok:
            out.append(tok)
    return out


def _lcs_length(a: list, b: list) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, 1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(s: str, s2: str) -> dict:
    """LCS-based ROUGE-L: precision against s2's tokens, recall against s's."""
    ref, cand = tokenize(s), tokenize(s2)
    if not ref and not cand:
        return {"precision": 1.0, "recall": 1.0, "f1": 1.0}
    if not ref or not cand:
        return {"precision": 0.0, "recall": 0.0, "f1": 0.0}
    lcs = _lcs_length(ref, cand)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    f1 = 2 * precision * recall / (precision + recall) if lcs else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def _ngrams(tokens: list, n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: str, reference: str) -> float:
    """Sentence BLEU, geometric mean of clipped 1..4-gram precisions, no smoothing."""
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand:
        return 0.0
    log_sum = 0.0
    for n in range(1, 5):
        cand_ngrams = _ngrams(cand, n)
        total = sum(cand_ngrams.values())
        if total == 0:
            return 0.0
        ref_ngrams = _ngrams(ref, n)
        clipped = sum(min(c, ref_ngrams[g]) for g, c in cand_ngrams.items())
        if clipped == 0:
            return 0.0
        log_sum += math.log(clipped / total)
    brevity = 1.0 if len(cand) >= len(ref) else math.exp(1.0 - len(ref) / len(cand))
    return brevity * math.exp(log_sum / 4.0)


def exact_match(s: str, s2: str) -> bool:
    """Byte equality after trimming leading/trailing whitespace."""
    return s.strip() == s2.strip()


def response_similarity(s: str, s2: str, threshold: float) -> bool:
    """ROUGE-L F1 strictly above the threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValidationError(f"threshold must be in [0, 1], got {threshold}")
    return rouge_l(s, s2)["f1"] > threshold


def embedding_similarity(e1, e2) -> float:
    """Cosine similarity between two embedding vectors."""
    a = np.asarray(e1, dtype=np.float64).ravel()
    b = np.asarray(e2, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"embedding dimensions differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ValidationError("zero vector has no cosine similarity")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def evaluate_consistency(pairs: list, embeddings: dict = None, threshold: float = 0.7) -> ConsistencyReport:
    """EM/RS rates (and mean embedding cosine when supplied), with a per-family breakdown.

    ``embeddings`` maps pair id -> (vector_a, vector_b) for the two responses.
    """
    if not pairs:
        raise ValidationError("empty evaluation set")
    if embeddings is not None:
        missing = [p.id for p in pairs if p.id not in embeddings]
        if missing:
            raise ValidationError(f"missing embeddings for pair ids {missing[:5]}")

    def rates(subset):
        em = sum(exact_match(p.response, p.response_variant) for p in subset)
        rs = sum(response_similarity(p.response, p.response_variant, threshold) for p in subset)
        entry = {
            "em_rate": em / len(subset),
            "rs_rate": rs / len(subset),
            "bs_mean": None,
            "num_pairs": len(subset),
        }
        if embeddings is not None:
            sims = [embedding_similarity(*embeddings[p.id]) for p in subset]
            entry["bs_mean"] = float(np.mean(sims))
        return entry

    overall = rates(pairs)
    breakdown = {}
    for vtype in VariationType:
        subset = [p for p in pairs if p.variation_type is vtype]
        if subset:
            breakdown[vtype.value] = rates(subset)
    return ConsistencyReport(
        em_rate=overall["em_rate"],
        rs_rate=overall["rs_rate"],
        bs_mean=overall["bs_mean"],
        threshold=threshold,
        num_pairs=len(pairs),
        by_variation_type=breakdown,
    )


def evaluate_accuracy(items: list) -> dict:
    """Mean ROUGE-L F1 and BLEU-4 of (candidate, reference) pairs.

    ``items`` is a list of dicts with keys id, candidate, reference.
    """
    if not items:
        raise ValidationError("empty evaluation set")
    rouges = [rouge_l(it["reference"], it["candidate"])["f1"] for it in items]
    bleus = [bleu4(it["candidate"], it["reference"]) for it in items]
    return {
        "rouge_l_f1": float(np.mean(rouges)),
        "bleu4": float(np.mean(bleus)),
        "num_items": len(items),
    }


def read_response_pairs(path) -> list:
    """Read ResponsePair records from a JSON Lines file."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {lineno}: invalid JSON ({exc})") from exc
            for key in ("id", "query", "query_variant", "response", "response_variant", "variation_type"):
                if key not in raw:
                    raise ValidationError(f"line {lineno}: missing field {key}")
            try:
                vtype = VariationType(raw["variation_type"])
            except ValueError:
                raise ValidationError(
                    f"line {lineno}: unknown variation_type {raw['variation_type']!r}"
                ) from None
            pairs.append(
                ResponsePair(
                    id=str(raw["id"]),
                    query=raw["query"],
                    query_variant=raw["query_variant"],
                    response=raw["response"],
                    response_variant=raw["response_variant"],
                    variation_type=vtype,
                )
            )
    return pairs


def read_pair_embeddings(path, pairs: list) -> dict:
    """Load response embeddings keyed "{id}.a" / "{id}.b" from a container file."""
    ckpt = read_container(path)
    table = {}
    for p in pairs:
        try:
            table[p.id] = (ckpt.tensors[f"{p.id}.a"].data, ckpt.tensors[f"{p.id}.b"].data)
        except KeyError as exc:
            raise ValidationError(f"missing embeddings for pair ids ['{p.id}'] ({exc})") from None
    return table
