"""Desk-scale AMR parsing workbench.

A self-contained toolkit for sequence-to-sequence AMR parsing experiments:
Penman graph modeling, graph linearization for text-to-text training, a
small NumPy encoder-decoder transformer with exact hand-derived gradients,
full and low-rank-adapter finetuning recipes, Smatch and fine-grained
evaluation, and randomized paired-bootstrap significance testing.
"""

from amrforge.graph import (
    AmrGraph,
    PenmanParseError,
    TripleSet,
    emit_penman,
    parse_penman,
    read_amr_file,
    to_triples,
    write_amr_file,
)
from amrforge.linearize import (
    SerializedGraph,
    TrainingPair,
    WikiTable,
    build_wiki_table,
    deserialize,
    make_pair,
    repair,
    restore_wiki,
    serialize,
    strip_wiki,
)
from amrforge.corpus import CorpusManifest, generate_synthetic, load_corpus, save_corpus
from amrforge.model import ModelSpec, forward, greedy_decode, init_params, loss_and_grads
from amrforge.smatch import (
    EvalReport,
    PairCounts,
    Score,
    bootstrap_significance,
    fine_grained,
    smatch,
    smatch_counts,
)
from amrforge.tokenizer import Tokenizer, train_tokenizer
from amrforge.training import (
    AdapterState,
    LoraSpec,
    TrainConfig,
    attach_lora,
    fft_step,
    fft_then_lora,
    fit,
    lora_only,
    merge,
    select_best,
    split,
)

__version__ = "0.1.0"
