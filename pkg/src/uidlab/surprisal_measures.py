"""Per-token surprisal sequences and sentence-level uniformity measures.

Surprisal is the negative log-probability of a token given its preceding
context, in nats throughout this module; nats_to_bits / bits_to_nats convert
at the edges. The measures quantify how evenly that information is spread
over a sequence:

- local_variance: mean squared difference of consecutive surprisals
- coefficient_of_variation: population standard deviation over the mean
- global_variance: mean squared deviation from a corpus-wide mean
- superlinear_mean: mean per-token surprisal raised to a power k
- slor: superlinear mean with a unigram (context-free) baseline removed
- gini: mean absolute pairwise difference, normalized to [0, 1)
- effort_linear / effort_uid: additive effort proxies (plain sum, and the
  powered sum plus a constant cost per token)

All functions are pure. Summations accumulate left to right in 64-bit
floats, so results are deterministic and independent of any caller-side
parallelism.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import (
    DegenerateInput,
    EmptyCorpus,
    InvalidExponent,
    MissingCorpusStats,
    SequenceTooShort,
)

_LN2 = math.log(2.0)

#: Measure names accepted by uniformity_report.
MEASURE_NAMES = ("lv", "cv", "gv", "sl", "slor", "gini", "effort_linear", "effort_uid")

#: Default exponent grid for sweep helpers.
DEFAULT_K_SWEEP = tuple(0.5 + 0.25 * i for i in range(11))  # 0.5 .. 3.0


def nats_to_bits(value: float) -> float:
    return value / _LN2

def bits_to_nats(value: float) -> float:
    return value * _LN2


@dataclass(frozen=True)
class SurprisalSequence:
    """A tokenized utterance with one non-negative surprisal per token."""

    id: str
    tokens: tuple[str, ...]
    surprisals: tuple[float, ...]
    group: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(str(t) for t in self.tokens))
        object.__setattr__(self, "surprisals", tuple(float(s) for s in self.surprisals))
        if not self.tokens:
            raise ValueError(f"sequence {self.id!r}: tokens list is empty")
        if len(self.tokens) != len(self.surprisals):
            raise ValueError(
                f"sequence {self.id!r}: {len(self.tokens)} tokens but "
                f"{len(self.surprisals)} surprisals"
            )
        for s in self.surprisals:
            if not math.isfinite(s) or s < 0.0:
                raise ValueError(f"sequence {self.id!r}: surprisals must be finite and >= 0")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class UnigramModel:
    """Add-lambda smoothed unigram surprisal model.

    One pseudo-count slot is reserved for unseen tokens, so queries are
    finite for any string as long as smoothing > 0.
    """

    counts: Mapping[str, int]
    total: int
    smoothing: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", dict(self.counts))
        if self.smoothing <= 0.0 or not math.isfinite(self.smoothing):
            raise ValueError("smoothing must be finite and > 0")
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("token counts must be non-negative")
        if self.total != sum(self.counts.values()):
            raise ValueError("total must equal the sum of counts")

    @property
    def vocab_size(self) -> int:
        return len(self.counts)

    def surprisal(self, token: str) -> float:
        count = self.counts.get(token, 0)
        denom = self.total + self.smoothing * (self.vocab_size + 1)
        return -math.log((count + self.smoothing) / denom)


def build_unigram_model(
    token_lists: Iterable[Sequence[str]], smoothing: float = 1.0
) -> UnigramModel:
    """Count tokens across a corpus and wrap them in a UnigramModel."""
    counts: Counter[str] = Counter()
    for tokens in token_lists:
        counts.update(tokens)
    total = sum(counts.values())
    if total == 0:
        raise EmptyCorpus("cannot build a unigram model from an empty corpus")
    return UnigramModel(counts=dict(counts), total=total, smoothing=smoothing)


@dataclass(frozen=True)
class CorpusStats:
    """Corpus-level aggregates needed by corpus-relative measures."""

    mean_surprisal: float | None
    token_count: int = 0

    def __post_init__(self) -> None:
        if self.mean_surprisal is not None:
            if not math.isfinite(self.mean_surprisal):
                raise ValueError("corpus mean must be finite")
            if self.token_count <= 0:
                raise ValueError("a defined corpus mean requires token_count > 0")

    @classmethod
    def from_sequences(cls, sequences: Iterable[SurprisalSequence]) -> "CorpusStats":
        total = 0.0
        count = 0
        for seq in sequences:
            for s in seq.surprisals:
                total += s
                count += 1
        if count == 0:
            return cls(mean_surprisal=None, token_count=0)
        return cls(mean_surprisal=total / count, token_count=count)


def _mean(values: Sequence[float]) -> float:
    acc = 0.0
    for v in values:
        acc += v
    return acc / len(values)


def _population_std(values: Sequence[float], mean: float) -> float:
    # Exact zero for constant input; the naive accumulation would otherwise
    # leave rounding residue from the mean.
    if min(values) == max(values):
        return 0.0
    acc = 0.0
    for v in values:
        d = v - mean
        acc += d * d
    return math.sqrt(acc / len(values))


def local_variance(seq: SurprisalSequence) -> float:
    """Mean squared difference between consecutive surprisals.

    Needs at least two tokens; a perfectly even sequence scores 0.
    """
    n = len(seq)
    if n < 2:
        raise SequenceTooShort(f"local variance needs >= 2 tokens, got {n}")
    s = seq.surprisals
    acc = 0.0
    for i in range(1, n):
        d = s[i] - s[i - 1]
        acc += d * d
    return acc / (n - 1)


def coefficient_of_variation(seq: SurprisalSequence) -> float:
    """Population standard deviation divided by the mean surprisal."""
    mean = _mean(seq.surprisals)
    if mean == 0.0:
        raise DegenerateInput("coefficient of variation undefined at zero mean")
    return _population_std(seq.surprisals, mean) / mean


def global_variance(seq: SurprisalSequence, corpus: CorpusStats | None) -> float:
    """Mean squared deviation of the sequence's surprisals from the corpus mean."""
    if corpus is None or corpus.mean_surprisal is None:
        raise MissingCorpusStats("global variance requires a corpus mean")
    mu = corpus.mean_surprisal
    acc = 0.0
    for s in seq.surprisals:
        d = s - mu
        acc += d * d
    return acc / len(seq)


def superlinear_mean(seq: SurprisalSequence, k: float = 2.0) -> float:
    """Mean of per-token surprisal raised to the power k (k > 0).

    k == 1 is the plain arithmetic mean; k > 1 weights surprisal spikes
    superlinearly.
    """
    if not math.isfinite(k) or k <= 0.0:
        raise InvalidExponent(f"superlinear mean requires k > 0, got {k}")
    acc = 0.0
    for s in seq.surprisals:
        acc += s**k
    return acc / len(seq)


def slor(seq: SurprisalSequence, unigram: UnigramModel, k: float = 2.0) -> float:
    """Superlinear mean with the token's unigram surprisal subtracted per term.

    Each term is s_ctx**k - s_uni**k, so a sequence whose contextual
    surprisals equal its unigram surprisals scores exactly 0.
    """
    if not math.isfinite(k) or k <= 0.0:
        raise InvalidExponent(f"slor requires k > 0, got {k}")
    acc = 0.0
    for token, s in zip(seq.tokens, seq.surprisals):
        acc += s**k - unigram.surprisal(token) ** k
    return acc / len(seq)


def gini(seq: SurprisalSequence) -> float:
    """Gini coefficient of the surprisal values: sum |s_i - s_j| / (2 n^2 mean)."""
    n = len(seq)
    mean = _mean(seq.surprisals)
    if mean == 0.0:
        raise DegenerateInput("gini undefined at zero mean")
    s = seq.surprisals
    acc = 0.0
    for i in range(n):
        for j in range(n):
            acc += abs(s[i] - s[j])
    return acc / (2.0 * n * n * mean)


def effort_linear(seq: SurprisalSequence) -> float:
    """Total surprisal: the additive effort proxy."""
    acc = 0.0
    for s in seq.surprisals:
        acc += s
    return acc


def effort_uid(seq: SurprisalSequence, k: float = 2.0, c: float = 0.0) -> float:
    """Superlinear effort proxy: sum of s**k plus a constant cost c per token.

    Requires k > 1 (the regime where evenly spread surprisal minimizes the
    sum) and c >= 0.
    """
    if not math.isfinite(k) or k <= 1.0:
        raise InvalidExponent(f"uid effort requires k > 1, got {k}")
    if not math.isfinite(c) or c < 0.0:
        raise ValueError(f"per-token cost must be finite and >= 0, got {c}")
    acc = 0.0
    for s in seq.surprisals:
        acc += s**k
    return acc + c * len(seq)


def superlinear_sweep(
    seq: SurprisalSequence, ks: Sequence[float] | None = None
) -> dict[float, float]:
    """superlinear_mean evaluated over a grid of exponents (default 0.5..3.0)."""
    grid = DEFAULT_K_SWEEP if ks is None else tuple(ks)
    return {k: superlinear_mean(seq, k) for k in grid}


@dataclass(frozen=True)
class MeasureConfig:
    """What uniformity_report should compute and with which parameters."""

    measures: tuple[str, ...] = ("lv", "cv", "gv", "sl", "gini")
    k: float = 2.0
    effort_constant: float = 0.0
    corpus: CorpusStats | None = None
    unigram: UnigramModel | None = None

    def __post_init__(self) -> None:
        normalized = tuple(str(m).lower() for m in self.measures)
        object.__setattr__(self, "measures", normalized)
        unknown = [m for m in normalized if m not in MEASURE_NAMES]
        if unknown:
            raise ValueError(f"unknown measures: {', '.join(unknown)}")


@dataclass(frozen=True)
class UniformityReport:
    """Computed measure values for one sequence, with the parameters used."""

    sequence_id: str
    group: str | None
    values: dict[str, float]
    params: dict[str, float | None] = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "id": self.sequence_id,
            "group": self.group,
            "values": dict(self.values),
            "params": dict(self.params),
        }


def compute_measure(seq: SurprisalSequence, name: str, config: MeasureConfig) -> float:
    """Evaluate a single named measure under the given configuration."""
    name = name.lower()
    if name == "lv":
        return local_variance(seq)
    if name == "cv":
        return coefficient_of_variation(seq)
    if name == "gv":
        return global_variance(seq, config.corpus)
    if name == "sl":
        return superlinear_mean(seq, config.k)
    if name == "slor":
        if config.unigram is None:
            raise ValueError("slor requires a unigram model")
        return slor(seq, config.unigram, config.k)
    if name == "gini":
        return gini(seq)
    if name == "effort_linear":
        return effort_linear(seq)
    if name == "effort_uid":
        return effort_uid(seq, config.k, config.effort_constant)
    raise ValueError(f"unknown measure: {name}")


def uniformity_report(seq: SurprisalSequence, config: MeasureConfig) -> UniformityReport:
    """Compute exactly the requested measures for one sequence.

    Per-measure failures are re-raised with the measure name prefixed so a
    caller processing many sequences can attribute them.
    """
    values: dict[str, float] = {}
    for name in config.measures:
        try:
            values[name] = compute_measure(seq, name, config)
        except Exception as exc:
            annotated = f"{name}: {exc}"
            try:
                raise type(exc)(annotated) from exc
            except TypeError:
                # Exception type with a non-message constructor; keep the type
                # visible in the message instead.
                raise ValueError(annotated) from exc
    corpus_mean = config.corpus.mean_surprisal if config.corpus is not None else None
    params: dict[str, float | None] = {
        "k": config.k,
        "corpus_mean": corpus_mean,
        "effort_constant": config.effort_constant,
    }
    return UniformityReport(
        sequence_id=seq.id, group=seq.group, values=values, params=params
    )
