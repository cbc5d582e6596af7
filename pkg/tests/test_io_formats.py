"""Unit tests for the JSONL/TSV/CSV readers and writers."""

import json

import pytest

from uidlab.errors import ParseError
from uidlab.io_formats import (
    format_float,
    iter_jsonl,
    json_line,
    parse_candidates_record,
    parse_quality_record,
    parse_surprisal_record,
    read_dictionary_tsv,
    read_wordlist,
    write_correlation_csv,
    write_jsonl,
    write_summary_csv,
    write_threshold_csv,
)
from uidlab.stats_correlate import ThresholdCurve


class TestIterJsonl:
    def test_yields_objects_with_line_numbers(self, tmp_path):
        path = tmp_path / "in.jsonl"
        path.write_text('{"a": 1}\n\n{"b": 2}\n')
        rows = list(iter_jsonl(path))
        assert rows == [(1, {"a": 1}, None), (3, {"b": 2}, None)]

    def test_malformed_line_reported_not_raised(self, tmp_path):
        path = tmp_path / "in.jsonl"
        path.write_text('{"a": 1}\n{oops\n{"b": 2}\n')
        rows = list(iter_jsonl(path))
        assert rows[0][2] is None and rows[2][2] is None
        line_number, obj, err = rows[1]
        assert (line_number, obj) == (2, None)
        assert isinstance(err, ParseError)
        assert err.line_number == 2
        assert "line 2" in str(err)


class TestRecordParsers:
    def test_surprisal_record(self):
        seq = parse_surprisal_record(
            {"id": "x", "tokens": ["a", "b"], "surprisals": [1.0, 2],
             "group": "src"},
            4,
        )
        assert seq.id == "x"
        assert seq.tokens == ("a", "b")
        assert seq.surprisals == (1.0, 2.0)
        assert seq.group == "src"

    def test_surprisal_record_errors_carry_line(self):
        for obj in (
            [1, 2],
            {"id": "x"},
            {"id": "x", "tokens": ["a"], "surprisals": [1.0, 2.0]},
            {"id": "x", "tokens": ["a"], "surprisals": [-1.0]},
        ):
            with pytest.raises(ParseError, match="line 9"):
                parse_surprisal_record(obj, 9)

    def test_quality_record(self):
        assert parse_quality_record(
            {"id": "a", "system": "mt1", "score": 0.8}, 1
        ) == ("a", "mt1", 0.8)
        with pytest.raises(ParseError):
            parse_quality_record({"id": "a", "system": "s", "score": "hi"}, 1)

    def test_candidates_record(self):
        rec = parse_candidates_record(
            {"id": "e1", "source": "le chat", "candidates": ["the cat"],
             "references": ["the cat"]},
            2,
        )
        assert rec == {
            "id": "e1", "source": "le chat",
            "candidates": ["the cat"], "references": ["the cat"],
        }

    def test_candidates_record_defaults_and_errors(self):
        rec = parse_candidates_record(
            {"id": "e", "source": "s", "candidates": ["c"]}, 1
        )
        assert rec["references"] == []
        with pytest.raises(ParseError):
            parse_candidates_record(
                {"id": "e", "source": "s", "candidates": []}, 1
            )


class TestDictionaryAndWordlist:
    def test_dictionary_accumulates(self, tmp_path):
        path = tmp_path / "dict.tsv"
        path.write_text("chat\tcat\nchien\tdog\thound\nchat\tkitty\n")
        assert read_dictionary_tsv(path) == {
            "chat": ("cat", "kitty"),
            "chien": ("dog", "hound"),
        }

    def test_dictionary_rejects_bad_rows(self, tmp_path):
        path = tmp_path / "dict.tsv"
        path.write_text("loner\n")
        with pytest.raises(ParseError, match="line 1"):
            read_dictionary_tsv(path)

    def test_wordlist(self, tmp_path):
        path = tmp_path / "words.txt"
        path.write_text("alpha\n\n  beta \ngamma\n")
        assert read_wordlist(path) == ("alpha", "beta", "gamma")


class TestWriters:
    def test_json_line_deterministic_and_reparsable(self):
        record = {"id": "x", "values": {"lv": 1.0 / 3.0}, "note": "é"}
        line = json_line(record)
        assert json.loads(line) == record
        assert "é" in line  # ensure_ascii off
        # repr-exact float round-trip
        assert json.loads(line)["values"]["lv"] == 1.0 / 3.0

    def test_write_jsonl_round_trips_through_iter_jsonl(self, tmp_path):
        path = tmp_path / "out.jsonl"
        records = [{"id": "a", "v": 0.1}, {"id": "b", "v": 2}]
        write_jsonl(path, records)
        back = [obj for _, obj, err in iter_jsonl(path) if err is None]
        assert back == records

    def test_format_float(self):
        assert format_float(None) == "NA"
        assert format_float(0.1) == "0.1"
        assert float(format_float(1.0 / 3.0)) == 1.0 / 3.0

    def test_threshold_csv(self, tmp_path):
        curve = ThresholdCurve(
            thresholds=(0.0, 0.5),
            counts=(2, 1),
            means={"src": (15.0, 10.0), "mt": (3.0, None)},
        )
        path = tmp_path / "curve.csv"
        write_threshold_csv(path, curve, "lv")
        lines = path.read_text().splitlines()
        assert lines[0] == "threshold,group,count,mean_lv"
        assert lines[1] == "0.0,mt,2,3.0"
        assert lines[2] == "0.0,src,2,15.0"
        assert lines[4] == "0.5,src,1,10.0"
        assert "NA" in lines[3]

    def test_correlation_csv(self, tmp_path):
        path = tmp_path / "corr.csv"
        write_correlation_csv(
            path,
            measures=("lv", "cv"),
            pairs=(("src", "mt"),),
            cells={("lv", "src", "mt"): 0.5, ("cv", "src", "mt"): None},
        )
        lines = path.read_text().splitlines()
        assert lines == ["measure,src-mt", "lv,0.5", "cv,NA"]

    def test_summary_csv(self, tmp_path):
        path = tmp_path / "summary.csv"
        write_summary_csv(path, [("src", "lv", 3, 1.5, 0.25)])
        lines = path.read_text().splitlines()
        assert lines == ["group,measure,count,mean,std", "src,lv,3,1.5,0.25"]
