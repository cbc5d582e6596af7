"""Sentence-level string similarity metrics and minimum-Bayes-risk selection.

The BLEU and chrF here are self-contained sentence-level variants with one
fixed, documented smoothing scheme each, chosen so that a hypothesis equal
to its reference scores exactly 1.0. Two deliberately naive diagnostics,
token_overlap and length_ratio, round out the built-in metric set; the
overlap metric is recall-only and therefore easy to game, which is exactly
what the adversarial decoding experiments need.

All metrics map string pairs to [0, 1] (higher is better) and are pure
functions of their arguments.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

from .errors import EmptyInput, TooFewCandidates


@dataclass(frozen=True)
class NGramProfile:
    """Counts of the order-n grams of a token sequence."""

    order: int
    counts: Counter

    @classmethod
    def from_tokens(cls, tokens: Sequence[str], order: int) -> "NGramProfile":
        if order < 1:
            raise ValueError(f"n-gram order must be >= 1, got {order}")
        grams = Counter(
            tuple(tokens[i : i + order]) for i in range(len(tokens) - order + 1)
        )
        return cls(order=order, counts=grams)

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def sentence_bleu(
    hypothesis: str, references: Sequence[str], max_order: int = 4
) -> float:
    """Sentence BLEU with add-one smoothing on zero-count orders only.

    Geometric mean of clipped n-gram precisions for orders 1..max_order,
    times the brevity penalty exp(min(0, 1 - ref_len / hyp_len)) computed
    against the reference closest in length (ties to the shorter one).
    Tokenization is whitespace splitting.
    """
    if not 1 <= max_order <= 9:
        raise ValueError(f"max_order must be in 1..9, got {max_order}")
    hyp_tokens = hypothesis.split()
    if not hyp_tokens:
        raise EmptyInput("empty hypothesis")
    if not references:
        raise EmptyInput("no references")
    ref_token_lists = [r.split() for r in references]
    if any(not toks for toks in ref_token_lists):
        raise EmptyInput("empty reference")

    log_sum = 0.0
    for order in range(1, max_order + 1):
        hyp_profile = NGramProfile.from_tokens(hyp_tokens, order)
        clip: Counter = Counter()
        for toks in ref_token_lists:
            ref_profile = NGramProfile.from_tokens(toks, order)
            for gram, count in ref_profile.counts.items():
                if count > clip[gram]:
                    clip[gram] = count
        matched = sum(
            min(count, clip[gram]) for gram, count in hyp_profile.counts.items()
        )
        total = hyp_profile.total
        if matched == 0:
            precision = (matched + 1) / (total + 1)
        else:
            precision = matched / total
        log_sum += math.log(precision)

    hyp_len = len(hyp_tokens)
    ref_len = min((len(t) for t in ref_token_lists), key=lambda L: (abs(L - hyp_len), L))
    brevity = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    return brevity * math.exp(log_sum / max_order)


def chrf(hypothesis: str, reference: str, max_order: int = 6, beta: float = 2.0) -> float:
    """Character n-gram F-score with all whitespace stripped first.

    Precision and recall are averaged over orders 1..max_order; orders where
    neither string has any n-gram are skipped so identical short strings
    still score exactly 1.0.
    """
    if max_order < 1:
        raise ValueError(f"max_order must be >= 1, got {max_order}")
    if beta <= 0.0:
        raise ValueError(f"beta must be > 0, got {beta}")
    hyp = "".join(hypothesis.split())
    ref = "".join(reference.split())
    if not hyp or not ref:
        raise EmptyInput("empty string after whitespace removal")

    precisions: list[float] = []
    recalls: list[float] = []
    for order in range(1, max_order + 1):
        hyp_grams = Counter(hyp[i : i + order] for i in range(len(hyp) - order + 1))
        ref_grams = Counter(ref[i : i + order] for i in range(len(ref) - order + 1))
        hyp_total = sum(hyp_grams.values())
        ref_total = sum(ref_grams.values())
        if hyp_total == 0 and ref_total == 0:
            continue
        overlap = sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())
        precisions.append(overlap / hyp_total if hyp_total else 0.0)
        recalls.append(overlap / ref_total if ref_total else 0.0)

    precision = math.fsum(precisions) / len(precisions)
    recall = math.fsum(recalls) / len(recalls)
    if precision + recall == 0.0:
        return 0.0
    b2 = beta * beta
    return (1.0 + b2) * precision * recall / (b2 * precision + recall)


def token_overlap(hypothesis: str, reference: str) -> float:
    """Share of the reference's distinct tokens that appear in the hypothesis.

    Recall-only by design: padding the hypothesis with extra tokens never
    lowers the score. An empty reference scores 1.0 against an empty
    hypothesis and 0.0 otherwise.
    """
    hyp = set(hypothesis.split())
    ref = set(reference.split())
    if not ref:
        return 1.0 if not hyp else 0.0
    return len(hyp & ref) / len(ref)


def length_ratio(hypothesis: str, reference: str) -> float:
    """Token-count agreement: min(len_h, len_r) / max(len_h, len_r) in [0, 1]."""
    lh = len(hypothesis.split())
    lr = len(reference.split())
    if lh == 0 and lr == 0:
        return 1.0
    if lh == 0 or lr == 0:
        return 0.0
    return min(lh, lr) / max(lh, lr)


#: Built-in pairwise metrics usable wherever a metric id is accepted.
PAIRWISE_METRICS: dict[str, Callable[[str, str], float]] = {
    "bleu": lambda hyp, ref: sentence_bleu(hyp, [ref]),
    "chrf": chrf,
    "token_overlap": token_overlap,
    "length_ratio": length_ratio,
}


class MbrResult(NamedTuple):
    utilities: tuple[float, ...]
    winner: int


def mbr_utility(
    candidates: Sequence[str],
    metric: Callable[[str, str], float],
    include_self: bool = False,
) -> MbrResult:
    """Score each candidate by its mean metric value against all the others.

    metric(hypothesis, pseudo_reference) is called with the candidate first.
    Ties for the best utility go to the lowest index. Sums use fsum so a
    permutation of the pool permutes the utilities exactly.
    """
    n = len(candidates)
    if n < 2:
        raise TooFewCandidates(f"mbr needs >= 2 candidates, got {n}")
    utilities: list[float] = []
    for i, hyp in enumerate(candidates):
        others = [
            metric(hyp, ref)
            for j, ref in enumerate(candidates)
            if include_self or j != i
        ]
        utilities.append(math.fsum(others) / len(others))
    best = max(utilities)
    winner = utilities.index(best)
    return MbrResult(utilities=tuple(utilities), winner=winner)


def mbr_rerank(
    candidates: Sequence[str],
    metric: Callable[[str, str], float],
    top_n: int | None = None,
) -> list[tuple[int, float]]:
    """Candidates ordered by MBR utility, descending, stable on ties.

    Returns (original index, utility) pairs; top_n larger than the pool
    yields the full ordering.
    """
    if top_n is not None and top_n < 1:
        raise ValueError(f"top_n must be >= 1, got {top_n}")
    result = mbr_utility(candidates, metric)
    order = sorted(range(len(candidates)), key=lambda i: (-result.utilities[i], i))
    if top_n is not None:
        order = order[:top_n]
    return [(i, result.utilities[i]) for i in order]
