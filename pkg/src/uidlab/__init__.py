"""Surprisal-uniformity measurement and metric-guided candidate decoding.

The package has three independent layers:

- ``surprisal_measures`` + ``stats_correlate``: per-sequence dispersion and
  effort measures over token surprisals, with correlation and threshold
  tooling for comparing groups of sequences.
- ``mt_metrics`` + ``ga_decode`` + ``scorer_adapter``: text-similarity
  metrics, minimum-Bayes-risk reranking, a genetic decoder over candidate
  pools (including adversarial fitness specs), and a line-protocol client
  for out-of-process scorers.
- ``infonce``: a small contrastive-loss kernel with analytic gradients and
  a finite-difference checker.

``report_cli`` exposes everything as the ``uidlab`` command.
"""

from .errors import (
    ConfigError,
    DegenerateInput,
    DimensionMismatch,
    EmptyCorpus,
    EmptyInput,
    EmptyPool,
    HandshakeMismatch,
    InvalidExponent,
    LengthMismatch,
    MissingCorpusStats,
    MissingReference,
    ParseError,
    ProtocolError,
    SchemaError,
    ScorerCrashed,
    ScorerUnavailable,
    SequenceTooShort,
    SpawnFailure,
    Timeout,
    TooFewCandidates,
    UidlabError,
    UnevaluatedFitness,
    UnpairedId,
    ZeroVariance,
)
from .ga_decode import (
    Candidate,
    EvalContext,
    FitnessComponent,
    FitnessSpec,
    GaConfig,
    GaTrace,
    MutationPools,
    RobustnessConfig,
    RobustnessReport,
    SignTally,
    compare_to_baselines,
    crossover,
    fitness_eval,
    init_population,
    metric_scores,
    mutate,
    robustness_report,
    run_ga,
    sign_tally,
    tournament_select,
)
from .infonce import (
    BilinearParams,
    EmbeddingBatch,
    InfoNceGradients,
    critic_score,
    gradient_check,
    infonce_grad,
    infonce_loss,
    loss_from_scores,
    mean_infonce_loss,
)
from .mt_metrics import (
    PAIRWISE_METRICS,
    MbrResult,
    chrf,
    length_ratio,
    mbr_rerank,
    mbr_utility,
    sentence_bleu,
    token_overlap,
)
from .scorer_adapter import (
    ScoreRequest,
    ScoreResponse,
    ScorerClient,
    ScorerHandle,
    connect,
    fetch_surprisals,
    parse_scorer_spec,
)
from .stats_correlate import (
    OlsFit,
    PairedSeries,
    ThresholdCurve,
    correlate_groups,
    ols_fit,
    pearson_r,
    threshold_sweep,
)
from .surprisal_measures import (
    DEFAULT_K_SWEEP,
    MEASURE_NAMES,
    CorpusStats,
    MeasureConfig,
    SurprisalSequence,
    UnigramModel,
    UniformityReport,
    bits_to_nats,
    build_unigram_model,
    coefficient_of_variation,
    compute_measure,
    effort_linear,
    effort_uid,
    gini,
    global_variance,
    local_variance,
    nats_to_bits,
    slor,
    superlinear_mean,
    superlinear_sweep,
    uniformity_report,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
