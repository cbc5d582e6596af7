"""Metric-guided genetic decoding over translation candidate pools.

Each generation: evaluate fitness, copy the elites, then repeatedly pick two
parents by tournament, cross them over at a random word index (probability
crossover_rate) and mutate each child (probability mutation_rate) until the
next population is full. A best-ever archive makes the structural guarantee
hold: the returned candidate never scores below the best initial candidate
under the fitness.

Fitness is a weighted sum of metric scores; a negative weight turns a
component into an adversarial pressure (optimize the others while driving
this one down). Metrics resolve against externally connected scorers first,
then the built-ins in mt_metrics, so an external scorer may deliberately
shadow a built-in id.

All randomness flows from one seeded generator owned by run_ga. Draw order
per generation: tournament index draws (tournament_size per parent),
crossover gate, crossover split index, then per child a mutation gate
followed by the mutation draws (operation, position, pool, token). Fitness
evaluation draws nothing, so scoring may be parallelized without changing
results; weighted sums accumulate per fitness component in declaration order.
"""

from __future__ import annotations

import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from . import mt_metrics
from .errors import (
    EmptyPool,
    LengthMismatch,
    MissingReference,
    ScorerUnavailable,
    TooFewCandidates,
    UidlabError,
    UnevaluatedFitness,
)

FITNESS_MODES = ("reference_based", "source_based", "mbr_pseudo_refs")


@dataclass
class Candidate:
    """One token sequence in the population, with cached fitness.

    Tokens are immutable; crossover and mutation build new Candidate objects
    with fitness reset to None, so a stale score can never survive a token
    change.
    """

    tokens: tuple[str, ...]
    fitness: float | None = None
    provenance: str = "initial"

    def __post_init__(self) -> None:
        self.tokens = tuple(str(t) for t in self.tokens)
        if not self.tokens:
            raise ValueError("candidate must have at least one token")

    @classmethod
    def from_text(cls, text: str, provenance: str = "initial") -> "Candidate":
        return cls(tokens=tuple(text.split()), provenance=provenance)

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class FitnessComponent:
    """One weighted metric in the fitness function."""

    metric: str
    weight: float
    mode: str = "reference_based"

    def __post_init__(self) -> None:
        if not math.isfinite(self.weight):
            raise ValueError("component weight must be finite")
        if self.mode not in FITNESS_MODES:
            raise ValueError(f"unknown fitness mode: {self.mode!r}")


@dataclass(frozen=True)
class FitnessSpec:
    """Weighted sum of metric scores; at least one component."""

    components: tuple[FitnessComponent, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("fitness spec needs at least one component")

    @property
    def has_negative_weight(self) -> bool:
        return any(c.weight < 0.0 for c in self.components)

    @classmethod
    def parse(cls, text: str) -> "FitnessSpec":
        """Parse 'metric:weight[:mode]' items separated by commas."""
        components = []
        for item in text.split(","):
            parts = item.strip().split(":")
            if len(parts) not in (2, 3):
                raise ValueError(f"bad fitness component {item!r}")
            metric = parts[0].strip()
            weight = float(parts[1])
            mode = parts[2].strip() if len(parts) == 3 else "reference_based"
            components.append(FitnessComponent(metric=metric, weight=weight, mode=mode))
        return cls(components=tuple(components))


class MutationPools:
    """Token sources for the insert/replace mutations.

    Three pools with non-negative selection weights: words seen in the
    initial candidates, a bilingual dictionary (contributing only target
    words whose source key occurs in the source sentence), and a flat
    target-language wordlist. Pools are sorted internally so token draws are
    reproducible.
    """

    def __init__(
        self,
        initial_words: Iterable[str] = (),
        dictionary: Mapping[str, Sequence[str]] | None = None,
        wordlist: Iterable[str] = (),
        weights: tuple[float, float, float] = (1.0, 1.0, 1.0),
    ):
        self.initial_words = tuple(sorted(set(initial_words)))
        self.dictionary = {
            str(k): tuple(v) for k, v in (dictionary or {}).items()
        }
        self.wordlist = tuple(sorted(set(wordlist)))
        if len(weights) != 3:
            raise ValueError("weights must cover the three pools")
        if any(not math.isfinite(w) or w < 0.0 for w in weights):
            raise ValueError("pool weights must be finite and >= 0")
        self.weights = (float(weights[0]), float(weights[1]), float(weights[2]))
        self._bound: dict[str, tuple[str, ...]] = {}

    def dictionary_words_for(self, source: str) -> tuple[str, ...]:
        """Target words whose source key occurs in the source sentence."""
        if source not in self._bound:
            present = set(source.split())
            words: set[str] = set()
            for key, targets in self.dictionary.items():
                if key in present:
                    words.update(targets)
            self._bound[source] = tuple(sorted(words))
        return self._bound[source]


@dataclass(frozen=True)
class GaConfig:
    population_size: int = 50
    generations: int = 100
    crossover_rate: float = 0.9
    mutation_rate: float = 0.3
    tournament_size: int = 4
    seed: int = 0
    elitism_count: int = 2

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.tournament_size < 2:
            raise ValueError("tournament_size must be >= 2")
        if not 0 <= self.elitism_count <= self.population_size:
            raise ValueError("elitism_count must be in [0, population_size]")
        if not -(2**63) <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class TraceEntry:
    gen: int
    best: float
    mean: float
    best_ever: float

    def to_record(self) -> dict:
        return {
            "gen": self.gen,
            "best": self.best,
            "mean": self.mean,
            "best_ever": self.best_ever,
        }


@dataclass(frozen=True)
class GaTrace:
    """Per-generation fitness statistics plus the anchor candidates."""

    entries: tuple[TraceEntry, ...]
    best_ever: Candidate
    best_initial: Candidate


@dataclass
class EvalContext:
    """Everything fitness evaluation needs besides the candidates.

    scorers maps metric ids to either a connected scorer client (anything
    with a .handle and .score_batch) or a plain callable
    (hyp, src=None, ref=None) -> float for in-process metrics. The fitness
    cache is keyed by candidate text and lives as long as the context; with
    an evolving pseudo-reference pool the cache is cleared on every
    evaluation because utilities then depend on the population itself.
    """

    source: str | None = None
    references: tuple[str, ...] = ()
    pseudo_refs: tuple[str, ...] = ()
    scorers: Mapping[str, object] = field(default_factory=dict)
    workers: int = 0
    evolving_pseudo_refs: bool = False
    cache: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.references = tuple(self.references)
        self.pseudo_refs = tuple(self.pseudo_refs)


def init_population(
    initials: Sequence[str], config: GaConfig, rng: random.Random
) -> list[Candidate]:
    """Seed a population of exactly population_size candidates.

    The initial candidates come first (truncated if there are more than
    population_size); any shortfall is filled by sampling the initials with
    replacement.
    """
    texts = list(initials)
    if not texts:
        raise EmptyPool("no initial candidates")
    population = [Candidate.from_text(t) for t in texts[: config.population_size]]
    while len(population) < config.population_size:
        population.append(Candidate.from_text(texts[rng.randrange(len(texts))]))
    return population


def _mean_excluding_self(text: str, pool: Sequence[str], scores: Sequence[float]) -> float:
    """Average pairwise scores over the pool, skipping one self occurrence."""
    if text in pool:
        if len(pool) < 2:
            raise TooFewCandidates("pseudo-reference pool has no other members")
        self_index = pool.index(text)
        total = math.fsum(scores) - scores[self_index]
        return total / (len(pool) - 1)
    if not pool:
        raise TooFewCandidates("pseudo-reference pool is empty")
    return math.fsum(scores) / len(pool)


def _map_texts(
    fn: Callable[[str], float], texts: Sequence[str], workers: int
) -> list[float]:
    # Metrics are pure and draw no randomness, so a thread pool returns the
    # same values in the same order as the serial path.
    if workers and workers > 1 and len(texts) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, texts))
    return [fn(t) for t in texts]


def _builtin_component_scores(
    component: FitnessComponent,
    texts: Sequence[str],
    context: EvalContext,
    pseudo_refs: Sequence[str],
) -> list[float]:
    metric = mt_metrics.PAIRWISE_METRICS[component.metric]
    if component.mode == "reference_based":
        if not context.references:
            raise MissingReference(
                f"component {component.metric!r} needs references"
            )
        if component.metric == "bleu":
            refs = list(context.references)
            fn = lambda t: mt_metrics.sentence_bleu(t, refs)
        else:
            ref = context.references[0]
            fn = lambda t: metric(t, ref)
        return _map_texts(fn, texts, context.workers)
    if component.mode == "source_based":
        if context.source is None:
            raise ValueError(f"component {component.metric!r} needs a source sentence")
        src = context.source
        fn = lambda t: metric(t, src)
        return _map_texts(fn, texts, context.workers)
    # mbr_pseudo_refs
    pool = tuple(pseudo_refs)
    if not pool:
        raise TooFewCandidates("pseudo-reference pool is empty")

    def utility(t: str) -> float:
        scores = [metric(t, p) for p in pool]
        return _mean_excluding_self(t, pool, scores)

    return _map_texts(utility, texts, context.workers)


def _callable_component_scores(
    component: FitnessComponent,
    fn: Callable[..., float],
    texts: Sequence[str],
    context: EvalContext,
    pseudo_refs: Sequence[str],
) -> list[float]:
    src = context.source
    if component.mode == "reference_based":
        if not context.references:
            raise MissingReference(f"component {component.metric!r} needs references")
        ref = context.references[0]
        return _map_texts(lambda t: fn(t, src=src, ref=ref), texts, context.workers)
    if component.mode == "source_based":
        return _map_texts(lambda t: fn(t, src=src, ref=None), texts, context.workers)
    pool = tuple(pseudo_refs)
    if not pool:
        raise TooFewCandidates("pseudo-reference pool is empty")

    def utility(t: str) -> float:
        scores = [fn(t, src=src, ref=p) for p in pool]
        return _mean_excluding_self(t, pool, scores)

    return _map_texts(utility, texts, context.workers)


def _external_component_scores(
    component: FitnessComponent,
    client,
    texts: Sequence[str],
    context: EvalContext,
    pseudo_refs: Sequence[str],
) -> list[float]:
    from .scorer_adapter import ScoreRequest

    handle = client.handle
    src = context.source if handle.needs_source else None
    if handle.needs_source and context.source is None:
        raise ValueError(f"scorer {component.metric!r} needs a source sentence")

    if component.mode == "mbr_pseudo_refs":
        pool = tuple(pseudo_refs)
        if not pool:
            raise TooFewCandidates("pseudo-reference pool is empty")
        requests = []
        rid = 0
        for text in texts:
            for ref in pool:
                requests.append(ScoreRequest(id=rid, hyp=text, src=src, ref=ref))
                rid += 1
        responses = client.score_batch(requests)
        out: list[float] = []
        width = len(pool)
        for i, text in enumerate(texts):
            scores = [responses[i * width + j].score for j in range(width)]
            out.append(_mean_excluding_self(text, pool, scores))
        return out

    ref = None
    if handle.needs_reference:
        if not context.references:
            raise MissingReference(f"scorer {component.metric!r} needs references")
        ref = context.references[0]
    requests = [
        ScoreRequest(id=i, hyp=text, src=src, ref=ref) for i, text in enumerate(texts)
    ]
    responses = client.score_batch(requests)
    return [r.score for r in responses]


def _component_scores(
    component: FitnessComponent,
    texts: Sequence[str],
    context: EvalContext,
    pseudo_refs: Sequence[str],
) -> list[float]:
    scorer = context.scorers.get(component.metric)
    if scorer is not None:
        if hasattr(scorer, "score_batch"):
            return _external_component_scores(
                component, scorer, texts, context, pseudo_refs
            )
        if callable(scorer):
            return _callable_component_scores(
                component, scorer, texts, context, pseudo_refs
            )
        raise ScorerUnavailable(
            f"scorer registered for {component.metric!r} is not usable"
        )
    if component.metric in mt_metrics.PAIRWISE_METRICS:
        return _builtin_component_scores(component, texts, context, pseudo_refs)
    raise ScorerUnavailable(f"no metric or scorer named {component.metric!r}")


def metric_scores(
    metric: str,
    texts: Sequence[str],
    context: EvalContext,
    mode: str = "reference_based",
) -> list[float]:
    """Score texts with one metric, resolved exactly like a fitness component.

    External scorers in ``context.scorers`` shadow built-in metrics, so the
    same metric id produces the same floats whether it backs a fitness
    component or a robustness report.
    """
    component = FitnessComponent(metric=metric, weight=1.0, mode=mode)
    return _component_scores(component, texts, context, context.pseudo_refs)


def fitness_eval(
    population: Sequence[Candidate], spec: FitnessSpec, context: EvalContext
) -> Sequence[Candidate]:
    """Fill in fitness for every candidate, batching and caching by text.

    All component scores for a generation are computed before any candidate
    is updated, so a scorer failure leaves the population untouched.
    """
    if context.evolving_pseudo_refs:
        context.cache.clear()
        pseudo_refs: tuple[str, ...] = tuple(c.text for c in population)
    else:
        pseudo_refs = context.pseudo_refs

    pending: list[str] = []
    seen: set[str] = set()
    for candidate in population:
        text = candidate.text
        if text not in context.cache and text not in seen:
            pending.append(text)
            seen.add(text)

    if pending:
        totals = [0.0] * len(pending)
        for component in spec.components:
            scores = _component_scores(component, pending, context, pseudo_refs)
            for i, score in enumerate(scores):
                totals[i] += component.weight * score
        for text, total in zip(pending, totals):
            context.cache[text] = total

    for candidate in population:
        candidate.fitness = context.cache[candidate.text]
    return population


def tournament_select(
    population: Sequence[Candidate], k: int, rng: random.Random
) -> Candidate:
    """Draw k members uniformly with replacement; return the fittest drawn.

    Ties go to the lowest population index. k == 1 degenerates to a uniform
    random pick.
    """
    if not population:
        raise EmptyPool("cannot select from an empty population")
    if k < 1:
        raise ValueError(f"tournament size must be >= 1, got {k}")
    drawn = [rng.randrange(len(population)) for _ in range(k)]
    best_index: int | None = None
    for i in sorted(set(drawn)):
        candidate = population[i]
        if candidate.fitness is None:
            raise UnevaluatedFitness(f"candidate at index {i} has no fitness")
        if best_index is None or candidate.fitness > population[best_index].fitness:
            best_index = i
    return population[best_index]


def crossover(
    a: Candidate, b: Candidate, rng: random.Random
) -> tuple[Candidate, Candidate]:
    """Swap tails at a random split index in 1..min(len)-1.

    If either parent has fewer than two tokens the parents are returned
    unchanged (and no random draw is consumed). The two children jointly
    preserve the parents' token multiset.
    """
    shortest = min(len(a.tokens), len(b.tokens))
    if shortest < 2:
        return a, b
    split = rng.randrange(1, shortest)
    child_a = Candidate(a.tokens[:split] + b.tokens[split:], provenance="crossover")
    child_b = Candidate(b.tokens[:split] + a.tokens[split:], provenance="crossover")
    return child_a, child_b


def _draw_token(pools: MutationPools, source: str, rng: random.Random) -> str:
    candidates: list[tuple[tuple[str, ...], float]] = []
    for words, weight in (
        (pools.initial_words, pools.weights[0]),
        (pools.dictionary_words_for(source), pools.weights[1]),
        (pools.wordlist, pools.weights[2]),
    ):
        if words and weight > 0.0:
            candidates.append((words, weight))
    if not candidates:
        raise EmptyPool("no mutation tokens available")
    total = math.fsum(w for _, w in candidates)
    pick = rng.random() * total
    acc = 0.0
    chosen = candidates[-1][0]
    for words, weight in candidates:
        acc += weight
        if pick < acc:
            chosen = words
            break
    return chosen[rng.randrange(len(chosen))]


def mutate(
    candidate: Candidate,
    pools: MutationPools,
    source: str,
    rng: random.Random,
) -> Candidate:
    """Apply one random edit: delete, insert, or replace a token.

    Draw order: operation, position, then (for insert/replace) pool and
    token. Deleting from a single-token candidate is a no-op that returns
    the candidate unchanged. Length changes by exactly -1, 0, or +1.
    """
    tokens = candidate.tokens
    op = rng.randrange(3)
    if op == 0:  # delete
        if len(tokens) == 1:
            return candidate
        position = rng.randrange(len(tokens))
        new_tokens = tokens[:position] + tokens[position + 1 :]
    elif op == 1:  # insert
        position = rng.randrange(len(tokens) + 1)
        token = _draw_token(pools, source, rng)
        new_tokens = tokens[:position] + (token,) + tokens[position:]
    else:  # replace
        position = rng.randrange(len(tokens))
        token = _draw_token(pools, source, rng)
        new_tokens = tokens[:position] + (token,) + tokens[position + 1 :]
    return Candidate(new_tokens, provenance="mutation")


def _best_index(population: Sequence[Candidate]) -> int:
    best = 0
    for i in range(1, len(population)):
        if population[i].fitness > population[best].fitness:
            best = i
    return best


def _annotate(exc: Exception, gen: int) -> Exception:
    message = f"generation {gen}: {exc}"
    if isinstance(exc, UidlabError):
        try:
            return type(exc)(message)
        except TypeError:
            return UidlabError(message)
    return exc


def run_ga(
    initials: Sequence[str],
    spec: FitnessSpec,
    pools: MutationPools,
    config: GaConfig,
    context: EvalContext,
) -> tuple[Candidate, GaTrace]:
    """Evolve the candidate pool and return (best-ever candidate, trace).

    The trace has one entry for the evaluated initial population (gen 0) and
    one per evolved generation; best_ever is non-decreasing across entries
    and the returned candidate's fitness is >= the best initial fitness.
    """
    if config.mutation_rate > 0.0:
        has_tokens = bool(
            pools.initial_words or pools.wordlist or pools.dictionary
        )
        if not has_tokens:
            raise EmptyPool("mutation enabled but every token pool is empty")
    rng = random.Random(config.seed)
    source = context.source or ""

    population = init_population(initials, config, rng)
    try:
        fitness_eval(population, spec, context)
    except Exception as exc:
        raise _annotate(exc, 0) from exc

    best_ever = population[_best_index(population)]
    best_initial = best_ever
    entries = [_trace_entry(0, population, best_ever)]

    for gen in range(1, config.generations + 1):
        ranked = sorted(
            range(len(population)),
            key=lambda i: (-population[i].fitness, i),
        )
        next_population: list[Candidate] = [
            population[i] for i in ranked[: config.elitism_count]
        ]
        while len(next_population) < config.population_size:
            parent_a = tournament_select(population, config.tournament_size, rng)
            parent_b = tournament_select(population, config.tournament_size, rng)
            if rng.random() < config.crossover_rate:
                child_a, child_b = crossover(parent_a, parent_b, rng)
            else:
                child_a, child_b = parent_a, parent_b
            if rng.random() < config.mutation_rate:
                child_a = mutate(child_a, pools, source, rng)
            next_population.append(child_a)
            if len(next_population) < config.population_size:
                if rng.random() < config.mutation_rate:
                    child_b = mutate(child_b, pools, source, rng)
                next_population.append(child_b)
        population = next_population
        try:
            fitness_eval(population, spec, context)
        except Exception as exc:
            raise _annotate(exc, gen) from exc
        gen_best = population[_best_index(population)]
        if gen_best.fitness > best_ever.fitness:
            best_ever = gen_best
        entries.append(_trace_entry(gen, population, best_ever))

    trace = GaTrace(
        entries=tuple(entries), best_ever=best_ever, best_initial=best_initial
    )
    return best_ever, trace


def _trace_entry(
    gen: int, population: Sequence[Candidate], best_ever: Candidate
) -> TraceEntry:
    best = population[_best_index(population)].fitness
    mean = math.fsum(c.fitness for c in population) / len(population)
    return TraceEntry(gen=gen, best=best, mean=mean, best_ever=best_ever.fitness)


@dataclass(frozen=True)
class RobustnessConfig:
    """Margins for counting optimized-metric wins and held-out losses."""

    margin_optimized: float = 0.0
    margin_heldout: float = 0.0

    def __post_init__(self) -> None:
        for value in (self.margin_optimized, self.margin_heldout):
            if not math.isfinite(value) or value < 0.0:
                raise ValueError("margins must be finite and >= 0")


@dataclass(frozen=True)
class RobustnessReport:
    """Per-example scores before/after decoding plus the two counts.

    n_opt_improved counts examples where the optimized metric rose by more
    than its margin; n_adversarial counts the subset where the held-out
    metric also fell by more than its margin.
    """

    o_init: tuple[float, ...]
    o_ga: tuple[float, ...]
    h_init: tuple[float, ...]
    h_ga: tuple[float, ...]
    n_opt_improved: int
    n_adversarial: int
    margins: RobustnessConfig = RobustnessConfig()

    @property
    def n_examples(self) -> int:
        return len(self.o_init)

    def to_record(self) -> dict:
        return {
            "n_examples": self.n_examples,
            "n_opt_improved": self.n_opt_improved,
            "n_adversarial": self.n_adversarial,
            "margin_optimized": self.margins.margin_optimized,
            "margin_heldout": self.margins.margin_heldout,
        }


def robustness_report(
    o_init: Sequence[float],
    o_ga: Sequence[float],
    h_init: Sequence[float],
    h_ga: Sequence[float],
    config: RobustnessConfig = RobustnessConfig(),
) -> RobustnessReport:
    """Count optimized-metric improvements and adversarial examples.

    An example i improves when o_init[i] + margin_optimized < o_ga[i]; it is
    adversarial when it improves and h_init[i] > h_ga[i] + margin_heldout.
    """
    lengths = {len(o_init), len(o_ga), len(h_init), len(h_ga)}
    if len(lengths) != 1:
        raise LengthMismatch(f"score lists differ in length: {sorted(lengths)}")
    n_opt = 0
    n_adv = 0
    for oi, og, hi, hg in zip(o_init, o_ga, h_init, h_ga):
        if oi + config.margin_optimized < og:
            n_opt += 1
            if hi > hg + config.margin_heldout:
                n_adv += 1
    return RobustnessReport(
        o_init=tuple(o_init),
        o_ga=tuple(o_ga),
        h_init=tuple(h_init),
        h_ga=tuple(h_ga),
        n_opt_improved=n_opt,
        n_adversarial=n_adv,
        margins=config,
    )


@dataclass(frozen=True)
class SignTally:
    """How often a score list beats, loses to, or ties a baseline list."""

    improved: int
    degraded: int
    unchanged: int

    @property
    def n_examples(self) -> int:
        return self.improved + self.degraded + self.unchanged

    def _pct(self, count: int) -> float:
        return 100.0 * count / self.n_examples if self.n_examples else 0.0

    @property
    def pct_improved(self) -> float:
        return self._pct(self.improved)

    @property
    def pct_degraded(self) -> float:
        return self._pct(self.degraded)

    @property
    def pct_unchanged(self) -> float:
        return self._pct(self.unchanged)


def sign_tally(ga: Sequence[float], baseline: Sequence[float]) -> SignTally:
    """Ternary comparison of held-out scores, exact equality counting as a tie."""
    if len(ga) != len(baseline):
        raise LengthMismatch(
            f"score lists differ in length: {len(ga)} vs {len(baseline)}"
        )
    improved = degraded = unchanged = 0
    for g, b in zip(ga, baseline):
        if g > b:
            improved += 1
        elif g < b:
            degraded += 1
        else:
            unchanged += 1
    return SignTally(improved=improved, degraded=degraded, unchanged=unchanged)


def compare_to_baselines(
    ga: Sequence[float], baselines: Mapping[str, Sequence[float]]
) -> dict[str, SignTally]:
    """Held-out scores of decoded outputs versus each named baseline's."""
    return {name: sign_tally(ga, scores) for name, scores in baselines.items()}
