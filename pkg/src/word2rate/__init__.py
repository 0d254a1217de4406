"""Rate-matrix word embeddings with negative-sampling training.

Each word is parameterized by the generator of a continuous-time Markov
chain. Ordered word sequences act on an initial uniform distribution
through truncations of a product of matrix exponentials, giving
order-sensitive context embeddings alongside vector-sum (cbow) and
matrix-product (cmow) baselines trained under the same objective.
"""

from word2rate.analysis import (
    GrammarSpec,
    ProbeResult,
    StabilityRecord,
    default_grammar,
    generate_synthetic_corpus,
    length_probe,
    nearest_neighbors,
    order_probe,
    sentence_embedding,
    stability_curve,
    word_embedding,
)
from word2rate.config import MODES, TrainConfig
from word2rate.corpus import (
    NegativeTable,
    TrainingExample,
    Vocabulary,
    build_negative_table,
    build_vocabulary,
    encode_sentence,
    generate_examples,
    read_corpus,
    sample_negatives,
)
from word2rate.persistence import (
    CheckpointError,
    export_text_vectors,
    load_checkpoint,
    save_checkpoint,
)
from word2rate.rate_algebra import (
    compose_cbow,
    compose_cmow,
    compose_fop,
    compose_fos,
    compose_hybrid,
    compose_sos,
    expand_fop_bruteforce,
    is_valid_rate_matrix,
    project_rate_matrix,
    uniform_distribution,
)
from word2rate.trainer import (
    AdamState,
    LossReport,
    ParameterBank,
    TrainResult,
    adam_step,
    apply_constraints,
    forward,
    gradient_check,
    init_parameters,
    loss_and_gradients,
    negative_sampling_loss,
    split_loss,
    train,
)

__version__ = "0.1.0"
