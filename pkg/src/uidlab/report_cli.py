"""Command-line entry point.

Subcommands: measure, correlate, compare, mbr, ga, adversarial (ga with a
required negative-weight component), infonce-check. Global options may come
from, in order of precedence: command-line flags, UIDLAB_* environment
variables, a JSON config file (--config), then built-in defaults.

Every command is deterministic given (inputs, config, seed) and writes its
outputs under --out with fixed names. Exit codes: 0 on success (including
runs that recorded per-record errors), 1 on a fatal toolkit error, 2 on a
configuration or usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from . import ga_decode, infonce, io_formats, mt_metrics, scorer_adapter
from .errors import (
    ConfigError,
    ParseError,
    UidlabError,
    UnpairedId,
    ZeroVariance,
)
from .stats_correlate import pearson_r, PairedSeries, threshold_sweep
from .surprisal_measures import (
    CorpusStats,
    MEASURE_NAMES,
    MeasureConfig,
    SurprisalSequence,
    build_unigram_model,
    compute_measure,
)

ENV_PREFIX = "UIDLAB_"
CONFIG_VERSION = 1

_TOP_KEYS = {
    "version",
    "seed",
    "out",
    "workers",
    "scorers",
    "scorer_timeout",
    "http_token",
    "measure",
    "correlate",
    "compare",
    "mbr",
    "ga",
    "infonce",
}
_SECTION_KEYS = {
    "measure": {
        "measures",
        "k",
        "effort_constant",
        "corpus_mean",
        "unigram_corpus",
        "smoothing",
    },
    "correlate": {
        "measures",
        "k",
        "effort_constant",
        "corpus_mean",
        "unigram_corpus",
        "smoothing",
        "base_group",
        "quality_system",
        "thresholds",
        "sweep_measure",
    },
    "compare": set(),
    "mbr": {"metric", "top_n", "include_self"},
    "ga": {
        "population_size",
        "generations",
        "crossover_rate",
        "mutation_rate",
        "tournament_size",
        "elitism_count",
        "fitness",
        "dictionary",
        "wordlist",
        "pool_weights",
        "optimized",
        "heldout",
        "margin_optimized",
        "margin_heldout",
        "mbr_pool",
    },
    "infonce": {"tolerance", "step"},
}


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as stream:
            config = json.load(stream)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    version = config.get("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version!r}")
    unknown = sorted(set(config) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for section, allowed in _SECTION_KEYS.items():
        body = config.get(section)
        if body is None:
            continue
        if not isinstance(body, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        bad = sorted(set(body) - allowed)
        if bad:
            raise ConfigError(f"unknown keys in config.{section}: {', '.join(bad)}")
    return config


def _env(name: str) -> str | None:
    return os.environ.get(ENV_PREFIX + name)


def _pick(*values):
    for value in values:
        if value is not None:
            return value
    return None


def _resolve(flag, env_name: str, config_value, default, cast: Callable):
    env_raw = _env(env_name)
    env_value = None
    if env_raw is not None:
        try:
            env_value = cast(env_raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad {ENV_PREFIX}{env_name}: {env_raw!r}") from exc
    value = _pick(flag, env_value, config_value, default)
    if value is None:
        return None
    try:
        return cast(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {env_name.lower()}: {value!r}") from exc


def _csv_list(value) -> tuple[str, ...]:
    if isinstance(value, str):
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return tuple(str(v) for v in value)


def _float_list(value) -> tuple[float, ...]:
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(",") if p.strip()]
        return tuple(float(p) for p in parts)
    return tuple(float(v) for v in value)


def _out_dir(args, config) -> Path:
    out = _resolve(args.out, "OUT", config.get("out"), ".", str)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _group_key(group: str | None) -> str:
    return "" if group is None else group


# --- measure ----------------------------------------------------------------


def _measure_options(args, config) -> dict:
    section = config.get("measure", {})
    measures = _resolve(args.measures, "MEASURES", section.get("measures"),
                        "lv,cv,gv,sl,gini", _csv_list)
    return {
        "measures": tuple(m.lower() for m in measures),
        "k": _resolve(args.k, "K", section.get("k"), 2.0, float),
        "effort_constant": _resolve(
            args.effort_constant, "EFFORT_CONSTANT", section.get("effort_constant"),
            0.0, float),
        "corpus_mean": _resolve(
            args.corpus_mean, "CORPUS_MEAN", section.get("corpus_mean"), None, float),
        "unigram_corpus": _resolve(
            args.unigram_corpus, "UNIGRAM_CORPUS", section.get("unigram_corpus"),
            None, str),
        "smoothing": _resolve(
            args.smoothing, "SMOOTHING", section.get("smoothing"), 1.0, float),
    }


def _check_measures(measures: Sequence[str]) -> None:
    unknown = [m for m in measures if m not in MEASURE_NAMES]
    if unknown:
        raise ConfigError(f"unknown measures: {', '.join(unknown)}")
    if not measures:
        raise ConfigError("at least one measure is required")


def _corpus_stats_by_group(path: str, explicit_mean: float | None) -> dict[str, CorpusStats]:
    """Token-weighted mean surprisal per group plus a '' global fallback."""
    if explicit_mean is not None:
        stats = CorpusStats(mean_surprisal=explicit_mean, token_count=1)
        return {"*": stats}
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for line_number, obj, err in io_formats.iter_jsonl(path):
        if err is not None:
            continue
        try:
            seq = io_formats.parse_surprisal_record(obj, line_number)
        except ParseError:
            continue
        for key in (_group_key(seq.group), "*"):
            sums[key] = sums.get(key, 0.0) + math.fsum(seq.surprisals)
            counts[key] = counts.get(key, 0) + len(seq)
    return {
        key: CorpusStats(mean_surprisal=sums[key] / counts[key], token_count=counts[key])
        for key in sums
        if counts[key] > 0
    }


def _unigram_from_file(path: str, smoothing: float):
    """Build the baseline model from surprisal JSONL or whitespace text."""
    token_lists: list[list[str]] = []
    if path.endswith(".jsonl") or path.endswith(".json"):
        for line_number, obj, err in io_formats.iter_jsonl(path):
            if err is not None:
                raise err
            seq = io_formats.parse_surprisal_record(obj, line_number)
            token_lists.append(list(seq.tokens))
    else:
        with open(path, "r", encoding="utf-8") as stream:
            for line in stream:
                tokens = line.split()
                if tokens:
                    token_lists.append(tokens)
    return build_unigram_model(token_lists, smoothing=smoothing)


def _measure_config_for(
    seq_group: str | None,
    options: Mapping[str, Any],
    corpus_by_group: Mapping[str, CorpusStats],
    unigram,
) -> MeasureConfig:
    key = _group_key(seq_group)
    # Per-group mean when derivable; "*" covers an explicit override
    # (which applies to every group) and sequences with no group stats.
    corpus = corpus_by_group.get(key) or corpus_by_group.get("*")
    return MeasureConfig(
        measures=options["measures"],
        k=options["k"],
        effort_constant=options["effort_constant"],
        corpus=corpus,
        unigram=unigram,
    )


def _cmd_measure(args, config) -> int:
    options = _measure_options(args, config)
    _check_measures(options["measures"])
    out = _out_dir(args, config)

    unigram = None
    if "slor" in options["measures"]:
        if not options["unigram_corpus"]:
            raise ConfigError("slor requires --unigram-corpus")
        unigram = _unigram_from_file(options["unigram_corpus"], options["smoothing"])

    corpus_by_group: dict[str, CorpusStats] = {}
    if "gv" in options["measures"]:
        corpus_by_group = _corpus_stats_by_group(args.input, options["corpus_mean"])
        if not corpus_by_group:
            raise ConfigError("cannot derive a corpus mean from the input")

    records: list[dict] = []
    summary: dict[tuple[str, str], list[float]] = {}
    n_ok = 0
    n_errors = 0
    for line_number, obj, err in io_formats.iter_jsonl(args.input):
        if err is None:
            try:
                seq = io_formats.parse_surprisal_record(obj, line_number)
            except ParseError as exc:
                err = exc
        if err is not None:
            records.append({"id": None, "line": line_number, "error": str(err)})
            n_errors += 1
            continue
        measure_config = _measure_config_for(
            seq.group, options, corpus_by_group, unigram
        )
        values: dict[str, float] = {}
        errors: dict[str, str] = {}
        for name in options["measures"]:
            try:
                values[name] = compute_measure(seq, name, measure_config)
            except (UidlabError, ValueError) as exc:
                errors[name] = str(exc)
        record: dict = {"id": seq.id, "group": seq.group, "values": values}
        if errors:
            record["errors"] = errors
        records.append(record)
        n_ok += 1
        for name, value in values.items():
            summary.setdefault((_group_key(seq.group), name), []).append(value)

    io_formats.write_jsonl(out / "measures.jsonl", records)
    rows = []
    for (group, name) in sorted(summary):
        bucket = summary[(group, name)]
        mean = math.fsum(bucket) / len(bucket)
        var = math.fsum((v - mean) ** 2 for v in bucket) / len(bucket)
        rows.append((group, name, len(bucket), mean, math.sqrt(var)))
    io_formats.write_summary_csv(out / "measure_summary.csv", rows)
    print(f"measure: {n_ok} sequences, {n_errors} line errors -> {out}")
    return 0


# --- correlate ---------------------------------------------------------------


def _correlate_options(args, config) -> dict:
    section = config.get("correlate", {})
    base = _measure_options(args, config)
    # measure/correlate share the measure parameters but read their own section
    for key in ("measures", "k", "effort_constant", "corpus_mean",
                "unigram_corpus", "smoothing"):
        if section.get(key) is not None and getattr(args, key, None) is None:
            cast = {
                "measures": _csv_list,
                "k": float,
                "effort_constant": float,
                "corpus_mean": float,
                "unigram_corpus": str,
                "smoothing": float,
            }[key]
            base[key] = cast(section[key])
    base["measures"] = tuple(m.lower() for m in base["measures"])
    base["base_group"] = _resolve(
        args.base_group, "BASE_GROUP", section.get("base_group"), "src", str)
    base["quality_system"] = _resolve(
        args.quality_system, "QUALITY_SYSTEM", section.get("quality_system"), None, str)
    default_thresholds = tuple(i / 10.0 for i in range(10))
    base["thresholds"] = _resolve(
        args.thresholds, "THRESHOLDS", section.get("thresholds"),
        default_thresholds, _float_list)
    base["sweep_measure"] = _resolve(
        args.sweep_measure, "SWEEP_MEASURE", section.get("sweep_measure"),
        base["measures"][0] if base["measures"] else None, str)
    return base


def _cmd_correlate(args, config) -> int:
    options = _correlate_options(args, config)
    _check_measures(options["measures"])
    out = _out_dir(args, config)

    unigram = None
    if "slor" in options["measures"]:
        if not options["unigram_corpus"]:
            raise ConfigError("slor requires --unigram-corpus")
        unigram = _unigram_from_file(options["unigram_corpus"], options["smoothing"])
    corpus_by_group: dict[str, CorpusStats] = {}
    if "gv" in options["measures"]:
        corpus_by_group = _corpus_stats_by_group(args.input, options["corpus_mean"])

    sequences: list[SurprisalSequence] = []
    for line_number, obj, err in io_formats.iter_jsonl(args.input):
        if err is not None:
            raise err
        sequences.append(io_formats.parse_surprisal_record(obj, line_number))
    if not sequences:
        raise ConfigError("no sequences in input")

    values: dict[tuple[str, str, str], float] = {}  # (measure, group, id) -> value
    groups = sorted({_group_key(seq.group) for seq in sequences})
    for seq in sequences:
        measure_config = _measure_config_for(
            seq.group, options, corpus_by_group, unigram
        )
        for name in options["measures"]:
            values[(name, _group_key(seq.group), seq.id)] = compute_measure(
                seq, name, measure_config
            )

    base_group = options["base_group"]
    if base_group not in groups:
        raise ConfigError(f"base group {base_group!r} not present in input")
    others = [g for g in groups if g != base_group]
    pairs = [(base_group, g) for g in others]

    ids_by_group: dict[str, set[str]] = {g: set() for g in groups}
    for seq in sequences:
        ids_by_group[_group_key(seq.group)].add(seq.id)
    for _, other in pairs:
        missing = sorted(ids_by_group[base_group] ^ ids_by_group[other])
        if missing:
            raise UnpairedId(missing)

    cells: dict[tuple[str, str, str], float | None] = {}
    shared = sorted(ids_by_group[base_group])
    for name in options["measures"]:
        for a, b in pairs:
            series = PairedSeries(
                ids=tuple(shared),
                x=tuple(values[(name, a, i)] for i in shared),
                y=tuple(values[(name, b, i)] for i in shared),
            )
            try:
                cells[(name, a, b)] = pearson_r(series)
            except ZeroVariance:
                cells[(name, a, b)] = None
    io_formats.write_correlation_csv(
        out / "correlations.csv", options["measures"], pairs, cells
    )
    written = ["correlations.csv"]

    if not args.scores and (
        args.thresholds is not None or args.sweep_measure is not None
    ):
        raise ConfigError("--thresholds/--sweep-measure require --scores")
    if args.scores:
        system = options["quality_system"]
        if not system:
            raise ConfigError("--quality-system is required with --scores")
        sweep_measure = options["sweep_measure"].lower()
        if sweep_measure not in options["measures"]:
            raise ConfigError(
                f"sweep measure {sweep_measure!r} is not among the computed measures"
            )
        score_by_id: dict[str, float] = {}
        for line_number, obj, err in io_formats.iter_jsonl(args.scores):
            if err is not None:
                raise err
            rec_id, rec_system, score = io_formats.parse_quality_record(
                obj, line_number
            )
            if rec_system != system:
                continue
            if rec_id in score_by_id:
                raise ParseError(
                    f"duplicate quality score for id {rec_id!r}", line_number
                )
            score_by_id[rec_id] = score
        items = []
        for seq_id in sorted(score_by_id):
            per_group = {
                g: values[(sweep_measure, g, seq_id)]
                for g in groups
                if (sweep_measure, g, seq_id) in values
            }
            if per_group:
                items.append((seq_id, score_by_id[seq_id], per_group))
        curve = threshold_sweep(items, options["thresholds"])
        io_formats.write_threshold_csv(
            out / "threshold_curve.csv", curve, sweep_measure
        )
        written.append("threshold_curve.csv")

    print(
        f"correlate: {len(sequences)} sequences, {len(groups)} groups -> "
        f"{', '.join(written)} in {out}"
    )
    return 0


# --- compare -----------------------------------------------------------------


def _cmd_compare(args, config) -> int:
    out = _out_dir(args, config)
    ga_scores: list[float] = []
    baselines: dict[str, list[float]] = {}
    names: list[str] | None = None
    for line_number, obj, err in io_formats.iter_jsonl(args.input):
        if err is not None:
            raise err
        if not isinstance(obj, dict) or "id" not in obj or "ga" not in obj:
            raise ParseError("compare rows need 'id' and 'ga' fields", line_number)
        row_names = sorted(k for k in obj if k not in ("id", "ga"))
        if names is None:
            names = row_names
            if not names:
                raise ParseError("compare rows need at least one baseline", line_number)
            baselines = {name: [] for name in names}
        elif row_names != names:
            raise ParseError(
                f"baseline fields changed: {row_names} vs {names}", line_number
            )
        try:
            ga_scores.append(float(obj["ga"]))
            for name in names:
                baselines[name].append(float(obj[name]))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"non-numeric score: {exc}", line_number) from exc
    tallies = ga_decode.compare_to_baselines(ga_scores, baselines)
    io_formats.write_compare_csv(out / "compare.csv", tallies)
    print(f"compare: {len(ga_scores)} examples, {len(baselines)} baselines -> {out}")
    return 0


# --- scorer wiring -----------------------------------------------------------


def _connect_scorers(args, config) -> dict[str, scorer_adapter.ScorerClient]:
    specs = list(config.get("scorers", []) or [])
    specs.extend(args.scorer or [])
    timeout = _resolve(
        args.scorer_timeout, "SCORER_TIMEOUT", config.get("scorer_timeout"),
        scorer_adapter.DEFAULT_TIMEOUT, float)
    token = _resolve(args.http_token, "HTTP_TOKEN", config.get("http_token"), None, str)
    registry: dict[str, scorer_adapter.ScorerClient] = {}
    for spec in specs:
        client = scorer_adapter.connect(spec, timeout=timeout, token=token)
        if client.handle.id in registry:
            raise ConfigError(f"duplicate scorer id {client.handle.id!r}")
        registry[client.handle.id] = client
    return registry


def _close_scorers(registry: Mapping[str, scorer_adapter.ScorerClient]) -> None:
    for client in registry.values():
        client.close()


# --- mbr ---------------------------------------------------------------------


def _cmd_mbr(args, config) -> int:
    section = config.get("mbr", {})
    metric_id = _resolve(args.metric, "METRIC", section.get("metric"), "bleu", str)
    top_n = _resolve(args.top_n, "TOP_N", section.get("top_n"), None, int)
    include_self = _resolve(
        args.include_self, "INCLUDE_SELF", section.get("include_self"), False,
        lambda v: bool(v))
    out = _out_dir(args, config)
    registry = _connect_scorers(args, config)
    try:
        records = []
        n_errors = 0
        for line_number, obj, err in io_formats.iter_jsonl(args.input):
            if err is None:
                try:
                    rec = io_formats.parse_candidates_record(obj, line_number)
                except ParseError as exc:
                    err = exc
            if err is not None:
                records.append({"id": None, "line": line_number, "error": str(err)})
                n_errors += 1
                continue
            metric_fn = _pairwise_metric(metric_id, registry, rec["source"])
            try:
                ranking = mt_metrics.mbr_rerank(
                    rec["candidates"], metric_fn, top_n
                ) if not include_self else _rerank_with_self(
                    rec["candidates"], metric_fn, top_n
                )
            except UidlabError as exc:
                records.append({"id": rec["id"], "error": str(exc)})
                n_errors += 1
                continue
            records.append({
                "id": rec["id"],
                "best": rec["candidates"][ranking[0][0]],
                "ranking": [{"index": i, "utility": u} for i, u in ranking],
            })
        io_formats.write_jsonl(out / "mbr.jsonl", records)
        print(f"mbr: {len(records) - n_errors} examples, {n_errors} errors -> {out}")
        return 0
    finally:
        _close_scorers(registry)


def _rerank_with_self(candidates, metric_fn, top_n):
    result = mt_metrics.mbr_utility(candidates, metric_fn, include_self=True)
    order = sorted(range(len(candidates)), key=lambda i: (-result.utilities[i], i))
    if top_n is not None:
        order = order[:top_n]
    return [(i, result.utilities[i]) for i in order]


def _pairwise_metric(
    metric_id: str,
    registry: Mapping[str, scorer_adapter.ScorerClient],
    source: str,
) -> Callable[[str, str], float]:
    client = registry.get(metric_id)
    if client is not None:
        def score(hyp: str, ref: str) -> float:
            request = scorer_adapter.ScoreRequest(
                id=0,
                hyp=hyp,
                src=source if client.handle.needs_source else None,
                ref=ref if client.handle.needs_reference else None,
            )
            return client.score_batch([request])[0].score
        return score
    if metric_id in mt_metrics.PAIRWISE_METRICS:
        return mt_metrics.PAIRWISE_METRICS[metric_id]
    raise ConfigError(f"no metric or scorer named {metric_id!r}")


# --- ga / adversarial ----------------------------------------------------------


def _ga_options(args, config) -> dict:
    section = config.get("ga", {})
    fitness_raw = _pick(args.fitness, _env("FITNESS"), section.get("fitness"))
    if fitness_raw is None:
        raise ConfigError("a fitness spec is required (--fitness or config.ga.fitness)")
    if isinstance(fitness_raw, str):
        spec = ga_decode.FitnessSpec.parse(fitness_raw)
    else:
        components = []
        for item in fitness_raw:
            components.append(ga_decode.FitnessComponent(
                metric=str(item["metric"]),
                weight=float(item["weight"]),
                mode=str(item.get("mode", "reference_based")),
            ))
        spec = ga_decode.FitnessSpec(components=tuple(components))
    seed = _resolve(args.seed, "SEED", config.get("seed"), 0, int)
    ga_config = ga_decode.GaConfig(
        population_size=_resolve(
            args.population, "POPULATION", section.get("population_size"), 50, int),
        generations=_resolve(
            args.generations, "GENERATIONS", section.get("generations"), 100, int),
        crossover_rate=_resolve(
            args.crossover_rate, "CROSSOVER_RATE", section.get("crossover_rate"),
            0.9, float),
        mutation_rate=_resolve(
            args.mutation_rate, "MUTATION_RATE", section.get("mutation_rate"),
            0.3, float),
        tournament_size=_resolve(
            args.tournament, "TOURNAMENT", section.get("tournament_size"), 4, int),
        seed=seed,
        elitism_count=_resolve(
            args.elitism, "ELITISM", section.get("elitism_count"), 2, int),
    )
    pool_weights = _resolve(
        args.pool_weights, "POOL_WEIGHTS", section.get("pool_weights"),
        (1.0, 1.0, 1.0), _float_list)
    if len(pool_weights) != 3:
        raise ConfigError("pool_weights needs exactly three values")
    optimized = _pick(args.optimized, _env("OPTIMIZED"), section.get("optimized"))
    heldout = _pick(args.heldout, _env("HELDOUT"), section.get("heldout"))
    if optimized is None:
        optimized = next(
            (c.metric for c in spec.components if c.weight > 0.0), None)
    if heldout is None:
        heldout = next(
            (c.metric for c in spec.components if c.weight < 0.0), None)
    return {
        "spec": spec,
        "config": ga_config,
        "dictionary": _pick(args.dictionary, _env("DICTIONARY"), section.get("dictionary")),
        "wordlist": _pick(args.wordlist, _env("WORDLIST"), section.get("wordlist")),
        "pool_weights": pool_weights,
        "optimized": optimized,
        "heldout": heldout,
        "margin_optimized": _resolve(
            args.margin_optimized, "MARGIN_OPTIMIZED",
            section.get("margin_optimized"), 0.0, float),
        "margin_heldout": _resolve(
            args.margin_heldout, "MARGIN_HELDOUT",
            section.get("margin_heldout"), 0.0, float),
        "mbr_pool": _resolve(
            args.mbr_pool, "MBR_POOL", section.get("mbr_pool"), "initial", str),
        "workers": _resolve(args.workers, "WORKERS", config.get("workers"), 0, int),
    }


def _tally_record(tally: ga_decode.SignTally) -> dict:
    return {
        "improved": tally.improved,
        "degraded": tally.degraded,
        "unchanged": tally.unchanged,
        "pct_improved": tally.pct_improved,
        "pct_degraded": tally.pct_degraded,
        "pct_unchanged": tally.pct_unchanged,
    }


def _cmd_ga(args, config, require_adversarial: bool = False) -> int:
    options = _ga_options(args, config)
    spec: ga_decode.FitnessSpec = options["spec"]
    if require_adversarial and not spec.has_negative_weight:
        raise ConfigError(
            "adversarial mode requires at least one negative-weight component"
        )
    if options["mbr_pool"] not in ("initial", "population"):
        raise ConfigError("mbr_pool must be 'initial' or 'population'")
    out = _out_dir(args, config)
    dictionary = (
        io_formats.read_dictionary_tsv(options["dictionary"])
        if options["dictionary"] else {}
    )
    wordlist = (
        io_formats.read_wordlist(options["wordlist"]) if options["wordlist"] else ()
    )
    registry = _connect_scorers(args, config)
    robustness_active = options["optimized"] is not None and options["heldout"] is not None

    run_records: list[dict] = []
    adversarial_rows: list[dict] = []
    o_init: list[float] = []
    o_ga: list[float] = []
    h_init: list[float] = []
    h_ga: list[float] = []
    n_errors = 0
    example_index = 0
    base_config: ga_decode.GaConfig = options["config"]
    try:
        for line_number, obj, err in io_formats.iter_jsonl(args.input):
            if err is None:
                try:
                    rec = io_formats.parse_candidates_record(obj, line_number)
                except ParseError as exc:
                    err = exc
            if err is not None:
                run_records.append({"id": None, "line": line_number, "error": str(err)})
                n_errors += 1
                continue
            context = ga_decode.EvalContext(
                source=rec["source"],
                references=tuple(rec["references"]),
                pseudo_refs=tuple(rec["candidates"]),
                scorers=registry,
                workers=options["workers"],
                evolving_pseudo_refs=options["mbr_pool"] == "population",
            )
            pools = ga_decode.MutationPools(
                initial_words=[t for c in rec["candidates"] for t in c.split()],
                dictionary=dictionary,
                wordlist=wordlist,
                weights=options["pool_weights"],
            )
            # Decorrelate examples while keeping runs reproducible: each
            # example evolves under seed + its input position.
            run_config = replace(base_config, seed=base_config.seed + example_index)
            try:
                best, trace = ga_decode.run_ga(
                    rec["candidates"], spec, pools, run_config, context
                )
            except (UidlabError, ValueError) as exc:
                run_records.append({"id": rec["id"], "error": str(exc)})
                n_errors += 1
                example_index += 1
                continue
            run_records.append({
                "id": rec["id"],
                "best": best.text,
                "fitness": best.fitness,
                "trace": [entry.to_record() for entry in trace.entries],
            })
            if robustness_active:
                scores = {}
                for metric_key, text in (
                    ("o_init", trace.best_initial.text),
                    ("o_ga", best.text),
                ):
                    scores[metric_key] = ga_decode.metric_scores(
                        options["optimized"], [text], context
                    )[0]
                for metric_key, text in (
                    ("h_init", trace.best_initial.text),
                    ("h_ga", best.text),
                ):
                    scores[metric_key] = ga_decode.metric_scores(
                        options["heldout"], [text], context
                    )[0]
                o_init.append(scores["o_init"])
                o_ga.append(scores["o_ga"])
                h_init.append(scores["h_init"])
                h_ga.append(scores["h_ga"])
                if spec.has_negative_weight:
                    adversarial_rows.append({
                        "id": rec["id"],
                        "mt": trace.best_initial.text,
                        "post_ga": best.text,
                        "ref": rec["references"][0] if rec["references"] else "",
                        "mt_score": scores["o_init"],
                        "ga_score": scores["o_ga"],
                    })
            example_index += 1
    finally:
        _close_scorers(registry)

    io_formats.write_jsonl(out / "ga_runs.jsonl", run_records)
    written = ["ga_runs.jsonl"]
    n_examples = sum(1 for r in run_records if "best" in r)
    summary = f"ga: {n_examples} examples, {n_errors} errors"
    if robustness_active and o_init:
        report = ga_decode.robustness_report(
            o_init, o_ga, h_init, h_ga,
            ga_decode.RobustnessConfig(
                margin_optimized=options["margin_optimized"],
                margin_heldout=options["margin_heldout"],
            ),
        )
        body = report.to_record()
        body["optimized_metric"] = options["optimized"]
        body["heldout_metric"] = options["heldout"]
        # Win/loss/tie tallies of the decoded outputs against the strongest
        # initial candidate, on both metrics.
        body["tallies"] = {
            name: _tally_record(
                ga_decode.compare_to_baselines(post, {"initial_best": pre})[
                    "initial_best"
                ]
            )
            for name, post, pre in (
                ("optimized_vs_initial_best", o_ga, o_init),
                ("heldout_vs_initial_best", h_ga, h_init),
            )
        }
        body["examples"] = [
            {
                "id": row["id"],
                "o_init": oi, "o_ga": og, "h_init": hi, "h_ga": hg,
            }
            for row, oi, og, hi, hg in zip(
                [r for r in run_records if "best" in r], o_init, o_ga, h_init, h_ga
            )
        ]
        with open(out / "robustness.json", "w", encoding="utf-8") as stream:
            json.dump(body, stream, indent=2, sort_keys=True)
            stream.write("\n")
        written.append("robustness.json")
        summary += (
            f", {report.n_opt_improved} optimized-improved, "
            f"{report.n_adversarial} adversarial"
        )
    if spec.has_negative_weight:
        io_formats.write_jsonl(out / "adversarial.jsonl", adversarial_rows)
        written.append("adversarial.jsonl")
    print(f"{summary} -> {', '.join(written)} in {out}")
    return 0


# --- infonce-check -------------------------------------------------------------


def _cmd_infonce_check(args, config) -> int:
    section = config.get("infonce", {})
    tolerance = _resolve(
        args.tolerance, "TOLERANCE", section.get("tolerance"), 1e-5, float)
    step = _resolve(args.step, "STEP", section.get("step"), 1e-5, float)
    out = _out_dir(args, config)
    with open(args.input, "r", encoding="utf-8") as stream:
        try:
            payload = json.load(stream)
        except json.JSONDecodeError as exc:
            raise ParseError(f"input is not valid JSON: {exc}") from exc
    batches = payload.get("batches") if isinstance(payload, dict) else payload
    if not isinstance(batches, list) or not batches:
        raise ConfigError("input must be a JSON array of batches (or {'batches': [...]})")
    results = []
    all_passed = True
    for index, item in enumerate(batches):
        try:
            batch = infonce.EmbeddingBatch(
                context=item["context"],
                positive=item["positive"],
                negatives=item["negatives"],
            )
            params = infonce.BilinearParams(
                w=item["W"],
                frozen_targets=bool(item.get("frozen_targets", False)),
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"batch {index} is malformed: {exc!r}") from exc
        declared = item.get("d")
        if declared is not None and int(declared) != batch.dim:
            raise ConfigError(f"batch {index}: d={declared} but vectors have dim {batch.dim}")
        loss = infonce.infonce_loss(batch, params)
        error = infonce.gradient_check(batch, params, step=step)
        passed = error <= tolerance
        all_passed = all_passed and passed
        results.append({
            "loss": loss,
            "max_rel_error": error,
            "passed": passed,
            "frozen_targets": params.frozen_targets,
        })
        print(
            f"batch {index}: loss={loss:.6f} "
            f"grad_check={'PASS' if passed else 'FAIL'} max_rel_err={error:.3e}"
        )
    report = {
        "tolerance": tolerance,
        "step": step,
        "all_passed": all_passed,
        "batches": results,
    }
    with open(out / "infonce_report.json", "w", encoding="utf-8") as stream:
        json.dump(report, stream, indent=2, sort_keys=True)
        stream.write("\n")
    print(f"infonce-check: {len(results)} batches, all_passed={all_passed} -> {out}")
    return 0


# --- parser -------------------------------------------------------------------


def _add_measure_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--measures", help="comma-separated measure names")
    parser.add_argument("--k", type=float, help="exponent for sl/slor/effort_uid")
    parser.add_argument("--effort-constant", dest="effort_constant", type=float,
                        help="per-token cost for effort_uid")
    parser.add_argument("--corpus-mean", dest="corpus_mean", type=float,
                        help="override the corpus mean used by gv")
    parser.add_argument("--unigram-corpus", dest="unigram_corpus",
                        help="corpus file for the slor unigram baseline")
    parser.add_argument("--smoothing", type=float,
                        help="add-lambda smoothing for the unigram baseline")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uidlab",
        description="Surprisal uniformity measures and metric-guided decoding",
    )
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--out", help="output directory (default .)")
    parser.add_argument("--scorer", action="append",
                        help="external scorer, [id=]cmd:<command> or [id=]http:<url>")
    parser.add_argument("--scorer-timeout", dest="scorer_timeout", type=float,
                        help="seconds to wait for scorer answers (default 120)")
    parser.add_argument("--http-token", dest="http_token",
                        help="bearer token for HTTP scorers")
    parser.add_argument("--workers", type=int,
                        help="thread count for parallel fitness evaluation")
    commands = parser.add_subparsers(dest="command", required=True)

    measure = commands.add_parser("measure", help="per-sequence uniformity measures")
    measure.add_argument("--input", required=True, help="surprisal JSONL")
    _add_measure_flags(measure)
    measure.set_defaults(handler=_cmd_measure)

    correlate = commands.add_parser(
        "correlate", help="between-group correlations and threshold sweeps")
    correlate.add_argument("--input", required=True, help="surprisal JSONL")
    _add_measure_flags(correlate)
    correlate.add_argument("--base-group", dest="base_group",
                           help="group every other group is paired with (default src)")
    correlate.add_argument("--scores", help="quality-score JSONL for the sweep")
    correlate.add_argument("--quality-system", dest="quality_system",
                           help="system whose quality scores gate the sweep")
    correlate.add_argument("--thresholds", help="comma-separated ascending thresholds")
    correlate.add_argument("--sweep-measure", dest="sweep_measure",
                           help="measure averaged in the sweep")
    correlate.set_defaults(handler=_cmd_correlate)

    compare = commands.add_parser(
        "compare", help="sign tallies of held-out scores against baselines")
    compare.add_argument("--input", required=True,
                         help="JSONL rows {'id', 'ga', '<baseline>': score}")
    compare.set_defaults(handler=_cmd_compare)

    mbr = commands.add_parser("mbr", help="minimum-Bayes-risk reranking")
    mbr.add_argument("--input", required=True, help="candidates JSONL")
    mbr.add_argument("--metric", help="pairwise metric id (default bleu)")
    mbr.add_argument("--top-n", dest="top_n", type=int, help="keep the top n")
    mbr.add_argument("--include-self", dest="include_self",
                     action=argparse.BooleanOptionalAction, default=None,
                     help="include identity pairs in utilities")
    mbr.set_defaults(handler=_cmd_mbr)

    for name, adversarial in (("ga", False), ("adversarial", True)):
        sub = commands.add_parser(
            name,
            help=(
                "genetic decoding over candidate pools"
                if not adversarial
                else "genetic decoding with a required negative-weight component"
            ),
        )
        sub.add_argument("--input", required=True, help="candidates JSONL")
        sub.add_argument("--fitness", help="metric:weight[:mode],... spec")
        sub.add_argument("--population", type=int, help="population size (default 50)")
        sub.add_argument("--generations", type=int, help="generations (default 100)")
        sub.add_argument("--crossover-rate", dest="crossover_rate", type=float,
                         help="crossover probability (default 0.9)")
        sub.add_argument("--mutation-rate", dest="mutation_rate", type=float,
                         help="mutation probability (default 0.3)")
        sub.add_argument("--tournament", type=int, help="tournament size (default 4)")
        sub.add_argument("--elitism", type=int, help="elites copied (default 2)")
        sub.add_argument("--dictionary", help="TSV bilingual dictionary pool")
        sub.add_argument("--wordlist", help="target wordlist pool")
        sub.add_argument("--pool-weights", dest="pool_weights",
                         help="initial,dictionary,wordlist pool weights")
        sub.add_argument("--optimized", help="metric id reported as optimized")
        sub.add_argument("--heldout", help="metric id reported as held out")
        sub.add_argument("--margin-optimized", dest="margin_optimized", type=float,
                         help="margin for counting optimized improvements")
        sub.add_argument("--margin-heldout", dest="margin_heldout", type=float,
                         help="margin for counting held-out deteriorations")
        sub.add_argument("--mbr-pool", dest="mbr_pool",
                         choices=("initial", "population"),
                         help="pseudo-reference pool for mbr components")
        sub.set_defaults(handler=_cmd_ga, adversarial=adversarial)

    check = commands.add_parser("infonce-check",
                                help="contrastive loss values and gradient checks")
    check.add_argument("--input", required=True, help="JSON batches file")
    check.add_argument("--tolerance", type=float,
                       help="max relative gradient error (default 1e-5)")
    check.add_argument("--step", type=float,
                       help="finite-difference step (default 1e-5)")
    check.set_defaults(handler=_cmd_infonce_check)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(
            _pick(args.config, _env("CONFIG"))
        )
        if getattr(args, "adversarial", False):
            return args.handler(args, config, require_adversarial=True)
        return args.handler(args, config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except UidlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
