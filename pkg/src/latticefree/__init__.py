"""Desk-scale lattice-free MMI training toolkit.

Weighted phone n-gram language models, numerator/denominator graph
compilation over per-phone HMM topologies, exact forward-backward loss and
gradients, phone-level Viterbi decoding, and a synthetic multilingual task
simulator for few-shot transfer experiments.
"""

from .compiler import build_decode_graph, build_denominator, build_numerator
from .decoding import (
    AlignmentCosts,
    CorpusScore,
    edit_distance,
    score_corpus,
    viterbi,
)
from .emissions import read_emat, write_emat
from .fb import graph_forward_backward
from .graph import (
    Arc,
    DecodeGraph,
    WeightedGraph,
    deserialize,
    serialize,
    total_weight,
    trim,
)
from .loss import BatchLossResult, LossResult, batch_loss, lfmmi_loss
from .model import AcousticModel
from .ngram import (
    NGramModel,
    WeightedCorpus,
    estimate_ngram,
    lm_to_fsa,
    parse_lm,
    sequence_logprob,
    serialize_lm,
)
from .phones import (
    Lexicon,
    PhoneInventory,
    RemapTable,
    load_inventory,
    load_lexicon,
    load_remap,
    remap_sequence,
    transcript_to_phone_alternatives,
)
from .semiring import LOG_ONE, LOG_ZERO, log_add, log_mul
from .synth import SyntheticTaskSpec, generate_task, load_task, parse_task_config, write_task
from .topology import HmmTopology, make_topology
from .training import (
    TrainConfig,
    pretrain_multilingual,
    sweep_denominator,
    train_scenario,
)

__version__ = "0.1.0"
