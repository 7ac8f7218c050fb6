"""Deterministic federated learning simulator for GRU language models."""

from .aggregation import (
    AggregatorConfig,
    AttentionWeights,
    attention_scores,
    fedatt_update,
    fedavg_update,
    fedsgd_round_config,
)
from .client import (
    ClientConfig,
    ClientUpdate,
    DpConfig,
    add_dp_noise,
    client_update,
    clip_global_norm,
)
from .corpus import (
    CorpusData,
    Partition,
    TokenStream,
    Vocabulary,
    batchify,
    build_vocab,
    encode,
    load_corpus,
    partition_iid,
    tokenize,
)
from .errors import (
    ConfigError,
    DataError,
    FedsimError,
    NumericalError,
    ShapeError,
)
from .model import (
    ForwardCache,
    GruLmConfig,
    GruLmParams,
    backward,
    forward,
    init_params,
    loss,
    param_count,
    perplexity,
)
from .params import ParamSet
from .rng import SeededRng
from .simulation import (
    RoundRecord,
    SimConfig,
    SimResult,
    evaluate,
    rounds_to_threshold,
    run_round,
    run_simulation,
    select_clients,
)

__version__ = "0.1.0"
