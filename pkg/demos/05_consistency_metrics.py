"""Scoring response pairs for consistency and accuracy.

A response pair holds what the model said for a query and for a variant of
the same query.  Exact match (EM) demands identical strings; response
similarity (RS) thresholds ROUGE-L F1; embedding similarity (BS) averages
cosine over externally computed response embeddings.
"""

import numpy as np

from conmerge import (
    ResponsePair,
    VariationType,
    bleu4,
    evaluate_accuracy,
    evaluate_consistency,
    rouge_l,
)

pairs = [
    ResponsePair(
        id="p1",
        query="how do we manage customer feedback at end of project",
        query_variant="how to manage customer feedback at end of project",
        response="Collect the survey results and archive them in the project record.",
        response_variant="Collect the survey results and archive them in the project record.",
        variation_type=VariationType.HOW_TO_DO,
    ),
    ResponsePair(
        id="p2",
        query="delivering packages for shipment",
        query_variant="delivering package for shipment",
        response="Label each box and scan it at the dock before loading.",
        response_variant="Each box must be labeled, then scanned at the dock during loading.",
        variation_type=VariationType.SING_PLUR_ARTICLE,
    ),
    ResponsePair(
        id="p3",
        query="can we drive to a grocery store",
        query_variant="can I drive to a grocery store",
        response="Yes, the nearest store is a ten minute drive away.",
        response_variant="No, you should take the bus instead.",
        variation_type=VariationType.SEMANTIC,
    ),
]

for p in pairs:
    scores = rouge_l(p.response, p.response_variant)
    print(f"{p.id}: rouge-l f1 = {scores['f1']:.3f}   bleu-4 = {bleu4(p.response_variant, p.response):.3f}")

embeddings = {
    "p1": ([1.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
    "p2": ([0.9, 0.4, 0.1], [0.8, 0.5, 0.2]),
    "p3": ([1.0, 0.0, 0.0], [-0.2, 0.9, 0.3]),
}

report = evaluate_consistency(pairs, embeddings=embeddings, threshold=0.7)
print(f"\nEM rate: {report.em_rate:.3f}   RS rate (T={report.threshold}): {report.rs_rate:.3f}   "
      f"BS mean: {report.bs_mean:.3f}")
print("by variation family:")
for family, entry in report.by_variation_type.items():
    print(f"  {family:>18}: em={entry['em_rate']:.2f} rs={entry['rs_rate']:.2f} n={entry['num_pairs']}")

# accuracy against annotated references uses the same tokenizer and metrics
items = [
    {"id": "p1", "candidate": pairs[0].response, "reference": "Archive the survey results in the project record."},
    {"id": "p2", "candidate": pairs[1].response, "reference": "Label and scan every box at the dock."},
]
acc = evaluate_accuracy(items)
print(f"\naccuracy vs references: rouge-l {acc['rouge_l_f1']:.3f}, bleu-4 {acc['bleu4']:.3f} "
      f"over {acc['num_items']} items")

assert report.em_rate <= report.rs_rate
print("\nEM implies RS, so the EM rate can never exceed the RS rate")
