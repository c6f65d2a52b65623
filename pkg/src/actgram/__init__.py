"""actgram: activity-grammar toolkit.

Induces stochastic And-Or grammars from corpora of activity-label
sentences and uses them to decode frame-wise classifier probability
matrices into the most probable grammatical label sequence.
"""

from .grammar import (
    AND,
    OR,
    SIL,
    DerivationDepthError,
    GrammarError,
    NoParseError,
    ParseTree,
    Pcfg,
    Rule,
    Sym,
    Symbol,
    format_grammar,
    inside,
    inside_log,
    is_cnf,
    load_grammar,
    log_likelihood,
    parse_grammar,
    sample,
    save_grammar,
    sentence_log_probs,
    to_cnf,
    to_dot,
    validate,
    viterbi,
)
from .corpus import (
    ClassMap,
    CorpusError,
    FrameAnnotation,
    PiClass,
    DEFAULT_FRAME_SHARES,
    collapse_segments,
    default_class_map,
    frames_to_sentence,
    load_class_map,
    load_corpus,
    load_frame_annotations,
    map_classes,
    save_class_map,
    save_corpus,
    strip_sil,
    wrap_sil,
)
from .decoder import (
    DecoderError,
    GepConfig,
    NoGrammaticalParseError,
    ParseResult,
    PrefixScore,
    ProbMatrix,
    align_frames,
    gep_parse,
    load_matrix_binary,
    load_matrix_csv,
    prefix_probabilities,
    refine,
    refine_batch,
    save_matrix_binary,
    save_matrix_csv,
    softmax,
)
from .induction import (
    AdiosParams,
    EquivalenceClass,
    InductionError,
    PatternCandidate,
    RdsGraph,
    bootstrap_generalize,
    build_rds,
    estimate_probs,
    induce,
    mex_scan,
)
from .metrics import ConfusionMatrix, EvalReport, MetricsError, confusion, evaluate
from .synth import (
    BenchmarkReport,
    DurationModel,
    Episode,
    NoiseModel,
    SynthError,
    calibrate_epsilon,
    grammar_class_names,
    make_episode,
    run_benchmark,
)

__version__ = "0.1.0"
