"""Readers and writers for the toolkit's line-oriented file formats.

JSONL schemas (one object per line):

  surprisal:  {"id": str, "tokens": [str], "surprisals": [num], "group"?: str}
  quality:    {"id": str, "system": str, "score": num}
  candidates: {"id": str, "source": str, "candidates": [str],
               "references"?: [str]}

Plus dictionary TSV (source<TAB>target[<TAB>target...]) and a plain
one-word-per-line wordlist. Writers emit compact JSON with keys in a fixed
order so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from .errors import ParseError
from .stats_correlate import ThresholdCurve
from .surprisal_measures import SurprisalSequence


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, Any, ParseError | None]]:
    """Yield (line number, parsed object, error) for every non-blank line.

    Malformed JSON yields (line_number, None, ParseError) so callers can
    record the failure and keep going.
    """
    with open(path, "r", encoding="utf-8") as stream:
        for line_number, raw in enumerate(stream, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                yield line_number, json.loads(line), None
            except json.JSONDecodeError as exc:
                yield line_number, None, ParseError(str(exc), line_number)


def _require(obj: Mapping, key: str, line_number: int) -> Any:
    if key not in obj:
        raise ParseError(f"missing required field {key!r}", line_number)
    return obj[key]


def parse_surprisal_record(obj: Mapping, line_number: int) -> SurprisalSequence:
    if not isinstance(obj, Mapping):
        raise ParseError("record is not a JSON object", line_number)
    seq_id = str(_require(obj, "id", line_number))
    tokens = _require(obj, "tokens", line_number)
    surprisals = _require(obj, "surprisals", line_number)
    if not isinstance(tokens, list) or not isinstance(surprisals, list):
        raise ParseError("tokens and surprisals must be arrays", line_number)
    group = obj.get("group")
    try:
        return SurprisalSequence(
            id=seq_id,
            tokens=tuple(tokens),
            surprisals=tuple(surprisals),
            group=None if group is None else str(group),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(str(exc), line_number) from exc


def parse_quality_record(obj: Mapping, line_number: int) -> tuple[str, str, float]:
    if not isinstance(obj, Mapping):
        raise ParseError("record is not a JSON object", line_number)
    try:
        score = float(_require(obj, "score", line_number))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"score is not a number: {exc}", line_number) from exc
    return (
        str(_require(obj, "id", line_number)),
        str(_require(obj, "system", line_number)),
        score,
    )


def parse_candidates_record(obj: Mapping, line_number: int) -> dict:
    if not isinstance(obj, Mapping):
        raise ParseError("record is not a JSON object", line_number)
    candidates = _require(obj, "candidates", line_number)
    if not isinstance(candidates, list) or not candidates:
        raise ParseError("candidates must be a non-empty array", line_number)
    references = obj.get("references", [])
    if not isinstance(references, list):
        raise ParseError("references must be an array", line_number)
    return {
        "id": str(_require(obj, "id", line_number)),
        "source": str(_require(obj, "source", line_number)),
        "candidates": [str(c) for c in candidates],
        "references": [str(r) for r in references],
    }


def read_dictionary_tsv(path: str | Path) -> dict[str, tuple[str, ...]]:
    """source<TAB>target[<TAB>target...]; repeated sources accumulate."""
    table: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as stream:
        for line_number, raw in enumerate(stream, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 2 or not parts[0] or not any(parts[1:]):
                raise ParseError("expected source<TAB>target...", line_number)
            targets = [p for p in parts[1:] if p]
            table.setdefault(parts[0], []).extend(targets)
    return {k: tuple(v) for k, v in table.items()}


def read_wordlist(path: str | Path) -> tuple[str, ...]:
    words = []
    with open(path, "r", encoding="utf-8") as stream:
        for raw in stream:
            word = raw.strip()
            if word:
                words.append(word)
    return tuple(words)


def json_line(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def write_jsonl(path: str | Path, records: Sequence[Any]) -> None:
    with open(path, "w", encoding="utf-8") as stream:
        for record in records:
            stream.write(json_line(record) + "\n")


def format_float(value: float | None) -> str:
    return "NA" if value is None else repr(float(value))


def write_threshold_csv(
    path: str | Path, curve: ThresholdCurve, measure: str
) -> None:
    """CSV with one row per (threshold, group): threshold,group,count,mean_<m>."""
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(["threshold", "group", "count", f"mean_{measure}"])
        for t_index, threshold in enumerate(curve.thresholds):
            for group in sorted(curve.means):
                writer.writerow(
                    [
                        repr(threshold),
                        group,
                        curve.counts[t_index],
                        format_float(curve.means[group][t_index]),
                    ]
                )


def write_correlation_csv(
    path: str | Path,
    measures: Sequence[str],
    pairs: Sequence[tuple[str, str]],
    cells: Mapping[tuple[str, str, str], float | None],
) -> None:
    """Matrix of Pearson r values: rows are measures, columns group pairs."""
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(["measure"] + [f"{a}-{b}" for a, b in pairs])
        for measure in measures:
            row = [measure]
            for a, b in pairs:
                row.append(format_float(cells.get((measure, a, b))))
            writer.writerow(row)


def write_summary_csv(
    path: str | Path,
    rows: Sequence[tuple[str, str, int, float, float]],
) -> None:
    """Per group and measure: count, mean, population standard deviation."""
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(["group", "measure", "count", "mean", "std"])
        for group, measure, count, mean, std in rows:
            writer.writerow([group, measure, count, repr(mean), repr(std)])


def write_compare_csv(path: str | Path, tallies: Mapping[str, Any]) -> None:
    """One row per baseline: win/loss/tie counts and percentages."""
    with open(path, "w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream)
        writer.writerow(
            ["baseline", "examples", "improved", "degraded", "unchanged",
             "pct_improved", "pct_degraded", "pct_unchanged"]
        )
        for name, tally in tallies.items():
            writer.writerow(
                [name, tally.n_examples, tally.improved, tally.degraded,
                 tally.unchanged, repr(tally.pct_improved),
                 repr(tally.pct_degraded), repr(tally.pct_unchanged)]
            )


# --- CSV readers ---------------------------------------------------------
# Every CSV this package writes can be parsed back with full value fidelity
# (floats are emitted as repr, so float(text) restores the exact value; NA
# cells come back as None).


def parse_optional_float(text: str) -> float | None:
    if text == "NA":
        return None
    return float(text)


def _read_csv(path: str | Path, expected_header: Sequence[str] | None):
    with open(path, "r", encoding="utf-8", newline="") as stream:
        rows = list(csv.reader(stream))
    if not rows:
        raise ParseError(f"{path}: empty CSV")
    if expected_header is not None and rows[0] != list(expected_header):
        raise ParseError(f"{path}: unexpected header {rows[0]}")
    return rows


def read_summary_csv(path: str | Path) -> list[tuple[str, str, int, float, float]]:
    """Inverse of write_summary_csv."""
    rows = _read_csv(path, ["group", "measure", "count", "mean", "std"])
    try:
        return [
            (group, measure, int(count), float(mean), float(std))
            for group, measure, count, mean, std in rows[1:]
        ]
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc


def read_threshold_csv(
    path: str | Path,
) -> tuple[str, list[tuple[float, str, int, float | None]]]:
    """Inverse of write_threshold_csv: (measure name, typed rows)."""
    rows = _read_csv(path, None)
    header = rows[0]
    if (
        len(header) != 4
        or header[:3] != ["threshold", "group", "count"]
        or not header[3].startswith("mean_")
    ):
        raise ParseError(f"{path}: unexpected header {header}")
    measure = header[3][len("mean_"):]
    try:
        parsed = [
            (float(t), group, int(count), parse_optional_float(mean))
            for t, group, count, mean in rows[1:]
        ]
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return measure, parsed


def read_correlation_csv(
    path: str | Path,
) -> tuple[list[str], dict[tuple[str, str], float | None]]:
    """Inverse of write_correlation_csv: (pair labels, {(measure, pair): r})."""
    rows = _read_csv(path, None)
    header = rows[0]
    if not header or header[0] != "measure":
        raise ParseError(f"{path}: unexpected header {header}")
    pairs = header[1:]
    cells: dict[tuple[str, str], float | None] = {}
    for row in rows[1:]:
        if len(row) != len(header):
            raise ParseError(f"{path}: ragged row {row}")
        try:
            for pair, text in zip(pairs, row[1:]):
                cells[(row[0], pair)] = parse_optional_float(text)
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from exc
    return pairs, cells


def read_compare_csv(path: str | Path) -> list[dict]:
    """Inverse of write_compare_csv: one dict per baseline row."""
    rows = _read_csv(
        path,
        ["baseline", "examples", "improved", "degraded", "unchanged",
         "pct_improved", "pct_degraded", "pct_unchanged"],
    )
    out = []
    try:
        for row in rows[1:]:
            name, examples, improved, degraded, unchanged, pi, pd, pu = row
            out.append(
                {
                    "baseline": name,
                    "examples": int(examples),
                    "improved": int(improved),
                    "degraded": int(degraded),
                    "unchanged": int(unchanged),
                    "pct_improved": float(pi),
                    "pct_degraded": float(pd),
                    "pct_unchanged": float(pu),
                }
            )
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return out
