"""Consistency-aware layer-wise merging of fine-tuned checkpoints.

The toolkit covers the full desk-scale pipeline: named-tensor container I/O,
task-vector DARE/TIES operations, activation-similarity layer weights, the
weighted merge itself, query-variation synthesis, triplet mining/losses, and
response-consistency metrics.
"""

__version__ = "0.1.0"

from .containers import (
    Checkpoint,
    LayerMap,
    TensorRecord,
    UNASSIGNED,
    compatible,
    partition_layers,
    read_container,
    write_container,
)
from .deltas import (
    DareConfig,
    TaskVector,
    TiesConfig,
    compute_task_vector,
    dare_sparsify,
    elect_signs,
    keep_agreeing,
    ties_merge,
    ties_trim,
)
from .engine import MergeConfig, ModelEntry, load_merge_config, merge_config_from_dict, merge_models, run_merge_pipeline
from .errors import ContainerFormatError, EndpointError, ValidationError
from .metrics import (
    ConsistencyReport,
    ResponsePair,
    VariationType,
    bleu4,
    embedding_similarity,
    evaluate_accuracy,
    evaluate_consistency,
    exact_match,
    response_similarity,
    rouge_l,
    tokenize,
)
from .paraphrase import EndpointClient, gen_paraphrases
from .toy import ToyNet, forward_with_activations, hash_embed, init_toy_net, make_toy_fixture, perturb, to_checkpoint
from .triplets import (
    EmbeddingTable,
    Triplet,
    combined_loss,
    load_embedding_table,
    mine_triplets,
    triplet_loss,
    triplet_loss_gradient,
)
from .variations import (
    QueryRecord,
    VariationRecord,
    apply_edits,
    enumerate_number_article_edits,
    gen_howto_variations,
    gen_number_article_variations,
    read_query_corpus,
    write_query_corpus,
    write_variations,
)
from .weights import (
    ActivationSet,
    LayerWeights,
    SimilarityMatrix,
    compute_layer_weights,
    invert_normalize,
    layer_distance,
    load_activation_set,
    load_reference_embeddings,
    load_reference_similarity,
    max_pool_sequence,
    sigmoid_weights,
    similarity_matrix,
)
