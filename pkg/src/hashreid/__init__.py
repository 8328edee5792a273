"""Compact binary codes for re-identification over precomputed embeddings.

Train a small encoder whose sign-binarized outputs act as Hamming-space
fingerprints, then scan galleries with XOR + popcount instead of float
distances.
"""

from .dataset import (
    Batch,
    EmbeddingSet,
    SamplerConfig,
    generate_synthetic,
    load_embeddings,
    load_embeddings_csv,
    sample_pk_batch,
    save_embeddings,
)
from .errors import (
    ConfigError,
    FormatError,
    HashReidError,
    OptimizerError,
    SamplingError,
    ShapeError,
    SingularSystemError,
    TruncatedFileError,
    ValidationError,
)
from .hamming import (
    CodeMatrix,
    RankedList,
    distance_inner_product_check,
    encode_set,
    float_rank_gallery,
    hamming_distance,
    load_codes,
    pack_codes,
    rank_gallery,
    save_codes,
    unpack_codes,
)
from .losses import (
    LossBundle,
    batch_hard_triplet,
    identity_loss,
    quant_coupling,
    ridge_classification_value,
)
from .metrics import EvalReport, average_precision, cmc_curve, evaluate
from .model import (
    DenseLayer,
    ForwardTrace,
    ModelParams,
    ParamGrads,
    backward,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    sign_binarize,
)
from .optimizer import AmsGrad
from .bench import BenchReport, run_bench
from .solver import (
    OuterLog,
    TrainConfig,
    TrainResult,
    fit_code_classifier,
    one_hot,
    sweep_codes,
    train,
)

__version__ = "0.1.0"
