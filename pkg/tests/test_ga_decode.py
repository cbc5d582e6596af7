"""Unit tests for the genetic decoding engine and robustness reporting."""

import random

import pytest

import oracles
from conftest import ScriptedRandom
from uidlab.errors import (
    EmptyPool,
    LengthMismatch,
    MissingReference,
    ScorerUnavailable,
    TooFewCandidates,
    UnevaluatedFitness,
)
from uidlab.ga_decode import (
    Candidate,
    EvalContext,
    FitnessComponent,
    FitnessSpec,
    GaConfig,
    MutationPools,
    RobustnessConfig,
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


def candidates(*texts):
    return [Candidate.from_text(t) for t in texts]


def evaluated(*pairs):
    population = []
    for text, fitness in pairs:
        candidate = Candidate.from_text(text)
        candidate.fitness = fitness
        population.append(candidate)
    return population


def exact_match_scorer(hyp, src=None, ref=None):
    return 1.0 if hyp == ref else 0.0


class TestCandidate:
    def test_from_text_round_trip(self):
        candidate = Candidate.from_text("the quick fox")
        assert candidate.tokens == ("the", "quick", "fox")
        assert candidate.text == "the quick fox"
        assert candidate.provenance == "initial"
        assert candidate.fitness is None

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Candidate(tokens=())
        with pytest.raises(ValueError):
            Candidate.from_text("   ")


class TestFitnessSpec:
    def test_parse_single(self):
        spec = FitnessSpec.parse("bleu:1.0")
        assert spec.components == (
            FitnessComponent(metric="bleu", weight=1.0, mode="reference_based"),
        )

    def test_parse_multi_with_modes(self):
        spec = FitnessSpec.parse(
            "token_overlap:1:reference_based, length_ratio:-0.1:reference_based"
        )
        assert [c.metric for c in spec.components] == [
            "token_overlap", "length_ratio"
        ]
        assert spec.has_negative_weight

    def test_parse_mbr_mode(self):
        spec = FitnessSpec.parse("chrf:0.5:mbr_pseudo_refs")
        assert spec.components[0].mode == "mbr_pseudo_refs"

    def test_parse_errors(self):
        for bad in ("", "bleu", "bleu:x", "bleu:1:nope", "bleu:inf"):
            with pytest.raises(ValueError):
                FitnessSpec.parse(bad)

    def test_needs_component(self):
        with pytest.raises(ValueError):
            FitnessSpec(components=())


class TestMutationPools:
    def test_dictionary_gated_by_source(self):
        pools = MutationPools(
            dictionary={"chat": ["cat"], "chien": ["dog", "hound"]},
        )
        assert pools.dictionary_words_for("le chat") == ("cat",)
        assert pools.dictionary_words_for("le chien") == ("dog", "hound")
        assert pools.dictionary_words_for("nothing here") == ()

    def test_pools_deduplicated_and_sorted(self):
        pools = MutationPools(initial_words=["b", "a", "b"], wordlist=["z", "y"])
        assert pools.initial_words == ("a", "b")
        assert pools.wordlist == ("y", "z")

    def test_weights_validated(self):
        with pytest.raises(ValueError):
            MutationPools(weights=(1.0, -0.5, 1.0))
        with pytest.raises(ValueError):
            MutationPools(weights=(1.0, 1.0))


class TestGaConfig:
    def test_defaults(self):
        config = GaConfig()
        assert (config.population_size, config.generations) == (50, 100)
        assert (config.crossover_rate, config.mutation_rate) == (0.9, 0.3)
        assert (config.tournament_size, config.elitism_count) == (4, 2)
        assert config.seed == 0

    def test_validation(self):
        with pytest.raises(ValueError):
            GaConfig(population_size=1)
        with pytest.raises(ValueError):
            GaConfig(generations=0)
        with pytest.raises(ValueError):
            GaConfig(crossover_rate=1.5)
        with pytest.raises(ValueError):
            GaConfig(tournament_size=1)
        with pytest.raises(ValueError):
            GaConfig(elitism_count=51)


class TestInitPopulation:
    def test_exact_fit(self):
        config = GaConfig(population_size=4)
        population = init_population(
            ["a", "b c", "d", "e f"], config, random.Random(0)
        )
        assert [c.text for c in population] == ["a", "b c", "d", "e f"]
        assert all(c.provenance == "initial" for c in population)

    def test_fill_by_resampling(self):
        config = GaConfig(population_size=5)
        population = init_population(["a", "b"], config, random.Random(1))
        assert len(population) == 5
        assert set(c.text for c in population) <= {"a", "b"}

    def test_truncates_overfull(self):
        config = GaConfig(population_size=2)
        population = init_population(["a", "b", "c"], config, random.Random(0))
        assert [c.text for c in population] == ["a", "b"]

    def test_empty_raises(self):
        with pytest.raises(EmptyPool):
            init_population([], GaConfig(), random.Random(0))


class TestFitnessEval:
    def test_single_bleu_identity(self):
        population = candidates("the cat sat")
        spec = FitnessSpec.parse("bleu:1.0")
        context = EvalContext(references=("the cat sat",))
        fitness_eval(population, spec, context)
        assert population[0].fitness == pytest.approx(1.0)

    def test_weighted_sum_of_two_metrics(self):
        population = candidates("the cat sat")
        spec = FitnessSpec.parse("bleu:1.0,chrf:1.0")
        context = EvalContext(references=("the cat sat",))
        fitness_eval(population, spec, context)
        assert population[0].fitness == pytest.approx(2.0)

    def test_mbr_excludes_self(self):
        population = candidates("a")
        spec = FitnessSpec(components=(
            FitnessComponent(metric="em", weight=1.0, mode="mbr_pseudo_refs"),
        ))
        context = EvalContext(
            pseudo_refs=("a", "a", "b"), scorers={"em": exact_match_scorer}
        )
        fitness_eval(population, spec, context)
        assert population[0].fitness == pytest.approx(0.5)

    def test_unknown_metric(self):
        with pytest.raises(ScorerUnavailable):
            fitness_eval(
                candidates("a"), FitnessSpec.parse("mystery:1.0"), EvalContext()
            )

    def test_missing_reference(self):
        with pytest.raises(MissingReference):
            fitness_eval(
                candidates("a"), FitnessSpec.parse("bleu:1.0"), EvalContext()
            )

    def test_duplicate_texts_scored_once(self):
        calls = []

        def counting(hyp, src=None, ref=None):
            calls.append(hyp)
            return float(len(hyp))

        population = candidates("a b", "a b", "c")
        spec = FitnessSpec(components=(
            FitnessComponent(metric="count", weight=1.0, mode="source_based"),
        ))
        context = EvalContext(scorers={"count": counting})
        fitness_eval(population, spec, context)
        assert sorted(calls) == ["a b", "c"]
        assert population[0].fitness == population[1].fitness == 3.0

    def test_cache_reused_across_generations(self):
        calls = []

        def counting(hyp, src=None, ref=None):
            calls.append(hyp)
            return 1.0

        population = candidates("a")
        spec = FitnessSpec(components=(
            FitnessComponent(metric="count", weight=1.0, mode="source_based"),
        ))
        context = EvalContext(scorers={"count": counting})
        fitness_eval(population, spec, context)
        fitness_eval(population, spec, context)
        assert calls == ["a"]

    def test_workers_match_serial(self):
        pool = ("x y", "y z", "z w", "w x")
        texts = ["x y z", "y", "z w x y", "w"]
        spec = FitnessSpec.parse("chrf:1.0:mbr_pseudo_refs,bleu:0.5")
        serial = EvalContext(references=("x y z",), pseudo_refs=pool, workers=0)
        parallel = EvalContext(references=("x y z",), pseudo_refs=pool, workers=4)
        pop_a = candidates(*texts)
        pop_b = candidates(*texts)
        fitness_eval(pop_a, spec, serial)
        fitness_eval(pop_b, spec, parallel)
        assert [c.fitness for c in pop_a] == [c.fitness for c in pop_b]

    def test_external_shadows_builtin(self):
        population = candidates("a b")
        spec = FitnessSpec.parse("token_overlap:1.0")
        context = EvalContext(
            references=("a b",),
            scorers={"token_overlap": lambda hyp, src=None, ref=None: 0.25},
        )
        fitness_eval(population, spec, context)
        assert population[0].fitness == 0.25

    def test_evolving_pool_clears_cache(self):
        spec = FitnessSpec(components=(
            FitnessComponent(metric="em", weight=1.0, mode="mbr_pseudo_refs"),
        ))
        context = EvalContext(
            scorers={"em": exact_match_scorer}, evolving_pseudo_refs=True
        )
        population = candidates("a", "a", "b")
        fitness_eval(population, spec, context)
        assert population[0].fitness == pytest.approx(0.5)
        # Same text, different population: utility must be recomputed.
        population2 = candidates("a", "b", "b")
        fitness_eval(population2, spec, context)
        assert population2[0].fitness == pytest.approx(0.0)


class TestMetricScores:
    def test_builtin_reference_based(self):
        context = EvalContext(references=("a b c",))
        scores = metric_scores("token_overlap", ["a b x"], context)
        assert scores == [pytest.approx(2.0 / 3.0)]

    def test_external_shadowing(self):
        context = EvalContext(
            references=("a",),
            scorers={"token_overlap": lambda hyp, src=None, ref=None: 0.125},
        )
        assert metric_scores("token_overlap", ["a"], context) == [0.125]


class TestTournamentSelect:
    def test_exhaustive_draw_returns_global_best(self):
        population = evaluated(("a", 0.1), ("b", 0.9), ("c", 0.5))
        rng = ScriptedRandom(randrange_values=[0, 1, 2])
        assert tournament_select(population, 3, rng).text == "b"

    def test_tie_goes_to_lowest_index(self):
        population = evaluated(("a", 0.7), ("b", 0.7))
        rng = ScriptedRandom(randrange_values=[1, 0])
        assert tournament_select(population, 2, rng).text == "a"

    def test_k_one_uniform_pick(self):
        population = evaluated(("a", 0.1), ("b", 0.9))
        rng = ScriptedRandom(randrange_values=[0])
        assert tournament_select(population, 1, rng).text == "a"

    def test_population_of_one(self):
        population = evaluated(("only", 0.3))
        rng = ScriptedRandom(randrange_values=[0, 0])
        assert tournament_select(population, 2, rng).text == "only"

    def test_unevaluated(self):
        with pytest.raises(UnevaluatedFitness):
            tournament_select(candidates("a"), 2, ScriptedRandom([0, 0]))

    def test_empty(self):
        with pytest.raises(EmptyPool):
            tournament_select([], 2, random.Random(0))


class TestCrossover:
    def test_forced_split(self):
        a = Candidate.from_text("a b c d")
        b = Candidate.from_text("x y z")
        rng = ScriptedRandom(randrange_values=[2])
        child_a, child_b = crossover(a, b, rng)
        assert child_a.text == "a b z"
        assert child_b.text == "x y c d"
        assert child_a.provenance == child_b.provenance == "crossover"
        assert child_a.fitness is None

    def test_self_crossover_identity(self):
        a = Candidate.from_text("p q r")
        rng = ScriptedRandom(randrange_values=[1])
        child_a, child_b = crossover(a, a, rng)
        assert child_a.text == child_b.text == "p q r"

    def test_short_parent_returns_unchanged_without_draw(self):
        a = Candidate.from_text("single")
        b = Candidate.from_text("x y z")
        rng = ScriptedRandom(randrange_values=[])  # any draw would fail
        child_a, child_b = crossover(a, b, rng)
        assert child_a is a and child_b is b

    def test_token_multiset_preserved(self):
        rng = random.Random(41)
        for _ in range(200):
            a = Candidate.from_text(
                " ".join(rng.choices("abcdef", k=rng.randint(1, 8)))
            )
            b = Candidate.from_text(
                " ".join(rng.choices("uvwxyz", k=rng.randint(1, 8)))
            )
            child_a, child_b = crossover(a, b, rng)
            assert sorted(child_a.tokens + child_b.tokens) == sorted(
                a.tokens + b.tokens
            )


class TestMutate:
    def test_forced_delete(self):
        candidate = Candidate.from_text("a b c")
        rng = ScriptedRandom(randrange_values=[0, 1])  # op=delete, position=1
        assert mutate(candidate, MutationPools(wordlist=["z"]), "", rng).text == "a c"

    def test_forced_replace_with_singleton_wordlist(self):
        candidate = Candidate.from_text("a b")
        pools = MutationPools(wordlist=["z"])
        # op=replace(2), position=0, pool draw, token index 0
        rng = ScriptedRandom(randrange_values=[2, 0, 0], random_values=[0.0])
        assert mutate(candidate, pools, "", rng).text == "z b"

    def test_forced_insert_uses_gated_dictionary(self):
        candidate = Candidate.from_text("the")
        pools = MutationPools(dictionary={"chat": ["cat"]}, weights=(0, 1, 0))
        # op=insert(1), position=1, pool roll, token index 0
        rng = ScriptedRandom(randrange_values=[1, 1, 0], random_values=[0.0])
        assert mutate(candidate, pools, "le chat", rng).text == "the cat"

    def test_dictionary_not_gated_means_empty_pool(self):
        candidate = Candidate.from_text("the")
        pools = MutationPools(dictionary={"chat": ["cat"]}, weights=(0, 1, 0))
        rng = ScriptedRandom(randrange_values=[1, 0])
        with pytest.raises(EmptyPool):
            mutate(candidate, pools, "no match here", rng)

    def test_single_token_delete_is_noop(self):
        candidate = Candidate.from_text("solo")
        rng = ScriptedRandom(randrange_values=[0])  # op=delete, no position draw
        result = mutate(candidate, MutationPools(wordlist=["z"]), "", rng)
        assert result is candidate

    def test_length_changes_by_at_most_one(self):
        pools = MutationPools(
            initial_words=["i1", "i2"],
            dictionary={"s": ["d1"]},
            wordlist=["w1", "w2", "w3"],
        )
        rng = random.Random(42)
        for _ in range(500):
            length = rng.randint(1, 9)
            candidate = Candidate(tokens=tuple(f"t{i}" for i in range(length)))
            mutated = mutate(candidate, pools, "s", rng)
            assert abs(len(mutated.tokens) - length) <= 1

    def test_weighted_pool_selection(self):
        pools = MutationPools(
            initial_words=["init"], wordlist=["word"], weights=(1.0, 0.0, 3.0)
        )
        candidate = Candidate.from_text("a")
        # total weight 4; pick=0.5*4=2.0 >= 1.0 (initial) -> wordlist
        rng = ScriptedRandom(randrange_values=[2, 0, 0], random_values=[0.5])
        assert mutate(candidate, pools, "", rng).text == "word"
        # pick=0.1*4=0.4 < 1.0 -> initial pool
        rng = ScriptedRandom(randrange_values=[2, 0, 0], random_values=[0.1])
        assert mutate(candidate, pools, "", rng).text == "init"


def length_target_scorer(target):
    def score(hyp, src=None, ref=None):
        return -abs(len(hyp.split()) - target)
    return score


LENGTH_SPEC = FitnessSpec(components=(
    FitnessComponent(metric="len5", weight=1.0, mode="source_based"),
))


def length_context():
    return EvalContext(scorers={"len5": length_target_scorer(5)})


class TestRunGa:
    def test_noop_evolution_returns_best_initial(self):
        config = GaConfig(
            population_size=3, generations=1, crossover_rate=0.0,
            mutation_rate=0.0, elitism_count=1, seed=7,
        )
        best, trace = run_ga(
            ["a b", "a b c d e", "x"], LENGTH_SPEC,
            MutationPools(wordlist=["w"]), config, length_context(),
        )
        assert best.text == "a b c d e"
        assert trace.best_initial.text == "a b c d e"
        assert best.fitness == 0.0

    def test_reaches_target_length(self):
        config = GaConfig(
            population_size=20, generations=200, crossover_rate=0.9,
            mutation_rate=0.8, tournament_size=3, elitism_count=2, seed=3,
        )
        best, trace = run_ga(
            ["a", "b c"], LENGTH_SPEC,
            MutationPools(wordlist=["w1", "w2", "w3"]),
            config, length_context(),
        )
        assert best.fitness == 0.0
        assert len(best.tokens) == 5

    def test_trace_monotone_and_final_at_least_initial(self):
        for seed in range(10):
            config = GaConfig(
                population_size=8, generations=30, seed=seed,
                crossover_rate=0.7, mutation_rate=0.5, elitism_count=1,
            )
            best, trace = run_ga(
                ["a a a", "b", "c d"], LENGTH_SPEC,
                MutationPools(wordlist=["x", "y"]), config, length_context(),
            )
            best_evers = [entry.best_ever for entry in trace.entries]
            assert all(
                b2 >= b1 for b1, b2 in zip(best_evers, best_evers[1:])
            )
            assert best.fitness >= trace.best_initial.fitness
            assert best.fitness == best_evers[-1]

    def test_rates_zero_keeps_best_constant(self):
        config = GaConfig(
            population_size=4, generations=10, crossover_rate=0.0,
            mutation_rate=0.0, elitism_count=1, seed=5,
        )
        _, trace = run_ga(
            ["a b", "c"], LENGTH_SPEC, MutationPools(wordlist=["w"]),
            config, length_context(),
        )
        bests = {entry.best for entry in trace.entries}
        assert len(bests) == 1

    def test_same_seed_identical_trace(self):
        config = GaConfig(population_size=6, generations=15, seed=11)
        runs = []
        for _ in range(2):
            best, trace = run_ga(
                ["a b c", "d e"], LENGTH_SPEC,
                MutationPools(wordlist=["p", "q"]), config, length_context(),
            )
            runs.append((best.text, best.fitness, trace.entries))
        assert runs[0] == runs[1]

    def test_mutation_with_empty_pools_rejected(self):
        config = GaConfig(population_size=2, generations=1, mutation_rate=0.5)
        with pytest.raises(EmptyPool):
            run_ga(["a"], LENGTH_SPEC, MutationPools(), config, length_context())

    def test_component_error_carries_generation(self):
        def broken(hyp, src=None, ref=None):
            raise ScorerUnavailable("backend gone")

        spec = FitnessSpec(components=(
            FitnessComponent(metric="broken", weight=1.0, mode="source_based"),
        ))
        config = GaConfig(population_size=2, generations=1, mutation_rate=0.0)
        with pytest.raises(ScorerUnavailable, match="generation 0"):
            run_ga(
                ["a", "b"], spec, MutationPools(wordlist=["w"]), config,
                EvalContext(scorers={"broken": broken}),
            )


class TestRobustnessReport:
    def test_spec_example(self):
        report = robustness_report(
            [0.5, 0.6], [0.7, 0.55], [0.8, 0.7], [0.6, 0.75],
            RobustnessConfig(),
        )
        assert (report.n_opt_improved, report.n_adversarial) == (1, 1)
        assert report.n_examples == 2

    def test_no_improvement(self):
        report = robustness_report(
            [0.5, 0.6], [0.5, 0.6], [0.1, 0.2], [0.0, 0.0], RobustnessConfig()
        )
        assert (report.n_opt_improved, report.n_adversarial) == (0, 0)

    def test_improved_but_heldout_unchanged(self):
        report = robustness_report(
            [0.1, 0.2], [0.5, 0.6], [0.3, 0.4], [0.3, 0.4], RobustnessConfig()
        )
        assert (report.n_opt_improved, report.n_adversarial) == (2, 0)

    def test_margins_shift_counts(self):
        report = robustness_report(
            [0.5], [0.6], [0.5], [0.4],
            RobustnessConfig(margin_optimized=0.2, margin_heldout=0.0),
        )
        assert report.n_opt_improved == 0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            robustness_report([0.1], [0.2, 0.3], [0.4], [0.5], RobustnessConfig())

    def test_matches_oracle_fuzz(self):
        rng = random.Random(43)
        for _ in range(300):
            n = rng.randint(0, 30)
            o_init = [rng.uniform(0, 1) for _ in range(n)]
            o_ga = [rng.uniform(0, 1) for _ in range(n)]
            h_init = [rng.uniform(0, 1) for _ in range(n)]
            h_ga = [rng.uniform(0, 1) for _ in range(n)]
            m_o = rng.choice([0.0, rng.uniform(0, 0.5)])
            m_h = rng.choice([0.0, rng.uniform(0, 0.5)])
            report = robustness_report(
                o_init, o_ga, h_init, h_ga,
                RobustnessConfig(margin_optimized=m_o, margin_heldout=m_h),
            )
            expected = oracles.robustness_counts(
                o_init, o_ga, h_init, h_ga, m_o, m_h
            )
            assert (report.n_opt_improved, report.n_adversarial) == expected
            assert report.n_adversarial <= report.n_opt_improved <= n


class TestSignTally:
    def test_spec_example(self):
        tally = sign_tally([0.9, 0.5], [0.8, 0.5])
        assert (tally.improved, tally.degraded, tally.unchanged) == (1, 0, 1)
        assert tally.pct_improved == 50.0
        assert tally.pct_unchanged == 50.0

    def test_identical_lists_all_equal(self):
        tally = sign_tally([0.3, 0.3], [0.3, 0.3])
        assert tally.unchanged == 2
        assert tally.pct_unchanged == 100.0

    def test_empty_tally(self):
        tally = sign_tally([], [])
        assert tally.n_examples == 0
        assert tally.pct_improved == 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            sign_tally([0.1], [])

    def test_compare_to_baselines(self):
        result = compare_to_baselines(
            [0.9, 0.5], {"logprob": [0.8, 0.5], "mbr": [1.0, 1.0]}
        )
        assert set(result) == {"logprob", "mbr"}
        assert result["logprob"].improved == 1
        assert result["mbr"].degraded == 2

    def test_matches_oracle_fuzz(self):
        rng = random.Random(44)
        for _ in range(200):
            n = rng.randint(0, 25)
            ga = [rng.choice([0.0, 0.5, 1.0]) for _ in range(n)]
            base = [rng.choice([0.0, 0.5, 1.0]) for _ in range(n)]
            tally = sign_tally(ga, base)
            assert (
                tally.improved, tally.degraded, tally.unchanged
            ) == oracles.sign_counts(ga, base)
