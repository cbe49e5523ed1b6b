"""tokmend: vocabulary expansion toolkit for over-fragmented tokenizers.

Selects candidate vocabulary items (frequency- or activation-driven),
initializes input/output embeddings for them, and measures the resulting
token-efficiency trade-off.
"""

from .bpe import (
    AddedItem,
    PretokenRule,
    Tokenizer,
    expand_vocabulary,
    extend_merges,
    load_tokenizer,
    save_tokenizer,
    train_bpe,
)
from .candidates import (
    AffixSpan,
    CandidateSet,
    budget_schedule,
    enumerate_affixes,
    extract_candidate_words,
)
from .detok import (
    DetokOutcome,
    SelectedItem,
    SelectionConfig,
    evaluate_affix,
    evaluate_word,
    select_expansion,
)
from .embeddings import (
    EmbeddingMatrix,
    MapperSet,
    assemble_expanded,
    fit_mappers,
    fit_procrustes,
    init_from_trace,
    init_fvt,
    init_random,
    init_sparse_combo,
)
from .metrics import (
    MetricReport,
    ParallelCorpus,
    characters_ratio,
    fragmentation_report,
    performance_conservation,
    perversity_audit,
    token_reduction,
    tokens_ratio,
)
from .pipeline import ExperimentConfig, ResultRow, pareto_front, run_experiment
from .traces import TraceRecord, TraceStore, validate_trace_file, write_trace_file

__version__ = "0.1.0"
