"""The consistency-weight chain, one step at a time.

Three synthetic models probe a 5-query dev set.  Model "close" produces
activations nearly identical to the reference embedding geometry, "mid"
drifts somewhat, and "far" is mostly noise.  Watch the pipeline turn that
into per-layer merge weights.
"""

import numpy as np

from conmerge import (
    ActivationSet,
    compute_layer_weights,
    invert_normalize,
    layer_distance,
    max_pool_sequence,
    sigmoid_weights,
    similarity_matrix,
)

rng = np.random.default_rng(3)
T, D = 5, 12
query_ids = [f"q{i}" for i in range(T)]

# reference geometry: what a sentence encoder says about the dev queries
ref_rows = rng.standard_normal((T, D))
reference = similarity_matrix(ref_rows, query_ids)
print("reference similarity matrix:")
print(np.round(reference.values, 3))

# sequence outputs are pooled per layer before any of this; max_pool_sequence
# is that reduction
seq = rng.standard_normal((4, D))
print(f"\npooling a 4-token sequence: {seq.shape} -> {max_pool_sequence(seq).shape}")

# three models, two layers each, at increasing distance from the reference
noise = rng.standard_normal((T, D))
models = {"close": 0.05, "mid": 0.45, "far": 0.95}
activation_sets = [
    ActivationSet(
        model_id=name,
        layers={l: (1 - alpha) * ref_rows + alpha * noise for l in range(2)},
        query_ids=query_ids,
    )
    for name, alpha in models.items()
]

# layer 0 by hand: similarity per model, distance, inversion, sigmoid
distances = []
for acts in activation_sets:
    sim = similarity_matrix(acts.layers[0], query_ids)
    distances.append(layer_distance(sim, reference))
print("\nlayer-0 distances:", np.round(distances, 4))

ratios = invert_normalize(distances)
print("inverted+normalized ratios:", np.round(ratios, 4), "(sum = 1)")

weights = sigmoid_weights(ratios, a=4.0, b=0.0)
print("sigmoid weights:        ", np.round(weights, 4))

# the full helper does this for every layer at once
lw = compute_layer_weights(activation_sets, reference, a=4.0, b=0.0)
print("\nfull weight matrix (models x layers):")
for name, row in zip(lw.model_ids, lw.weights):
    print(f"  {name:>5}: {np.round(row, 4)}")

assert lw.weights[0].min() > lw.weights[1].max() > lw.weights[2].max()
print("\ncloser to the reference -> strictly larger weight, at every layer")
