import csv
import json
from collections import defaultdict

import pytest

from reveal.errors import ReportError
from reveal.report import format_cell, render_report
from reveal.metrics import ConfusionCounts

from .helpers import FIXTURES, GOLDEN
from .oracles import concordance, count_oracle

RECORDS = FIXTURES / "report" / "records.jsonl"


@pytest.fixture
def report(tmp_path):
    return render_report(RECORDS, tmp_path / "report")


def test_table_matches_golden(report):
    assert report.table_txt.read_text(encoding="utf-8") == (GOLDEN / "report_table.txt").read_text(encoding="utf-8")
    assert report.table_csv.read_text(encoding="utf-8") == (GOLDEN / "report_table.csv").read_text(encoding="utf-8")


def test_fixture_cell_renders_like_published_table(report):
    rows = report.table_txt.read_text(encoding="utf-8").splitlines()
    row = next(r for r in rows if r.startswith("gpt-4.1") and "| holistic" in r)
    assert row.split("|")[2].strip() == "0.92 / 0.92"


def test_format_cell():
    assert format_cell(ConfusionCounts(tp=6, fp=1, tn=5, fn=0)) == "0.92 / 0.92"
    assert format_cell(None) == "-"


def test_table_shape(report):
    lines = report.table_txt.read_text(encoding="utf-8").splitlines()
    header = next(l for l in lines if l.startswith("model"))
    assert [c.strip() for c in header.split("|")] == ["model", "strategy", "CASIA1+", "DFFD", "n", "unparsed"]
    domain_row = lines[lines.index(header) - 1]
    assert domain_row.index("photoshop") < domain_row.index("deepfake")
    body = lines[lines.index(header) + 2:]
    assert [tuple(c.strip() for c in l.split("|")[:2]) for l in body] == [
        ("gpt-4.1", "baseline"), ("gpt-4o", "baseline"), ("gpt-4.1", "holistic"), ("gpt-4o", "holistic"),
    ]
    assert body[-1].split("|")[3].strip() == "-"


def _recompute(path):
    """Independent per-cell tally straight from the JSON lines."""
    latest = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        latest[rec["record_key"]] = rec
    cells = defaultdict(list)
    for rec in latest.values():
        cells[(rec["model_name"], rec["strategy"], rec["dataset"])].append((rec["ground_truth"], rec["predicted_label"]))
    return {key: count_oracle(pairs) for key, pairs in cells.items()}


def test_csv_values_match_independent_recount(report):
    expected = _recompute(RECORDS)
    with open(report.table_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    checked = 0
    for row in rows:
        for dataset in ("CASIA1+", "DFFD"):
            key = (row["model"], row["strategy"], dataset)
            if key not in expected:
                assert row[f"{dataset}_n"] == "0"
                continue
            cells, acc, f1 = expected[key]
            assert float(row[f"{dataset}_acc"]) == pytest.approx(float(acc), abs=5e-5)
            assert float(row[f"{dataset}_f1"]) == pytest.approx(float(f1), abs=5e-5)
            assert int(row[f"{dataset}_n"]) == sum(cells.values())
            assert int(row[f"{dataset}_unparsed"]) == cells["unparsed"]
            checked += 1
    assert checked == 7


def test_roc_files_and_auc(report):
    names = sorted(p.name for p in report.roc_files)
    assert names == ["roc__gpt-4.1__CASIA1+.csv", "roc__gpt-4.1__DFFD.csv", "roc__gpt-4o__CASIA1+.csv"]
    for path in report.roc_files:
        assert path.read_text().splitlines()[0] == "fpr,tpr"

    scored = defaultdict(list)
    for line in RECORDS.read_text().splitlines():
        rec = json.loads(line)
        if rec["strategy"] == "holistic" and rec["tampering_score"] is not None:
            scored[(rec["model_name"], rec["dataset"])].append((rec["ground_truth"], rec["tampering_score"]))
    with open(report.auc_csv, newline="") as fh:
        for row in csv.DictReader(fh):
            assert float(row["auc"]) == pytest.approx(float(concordance(scored[(row["model"], row["dataset"])])), abs=1e-6)


def test_factor_means(report):
    with open(report.factor_csv, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 6
    first = rows[0]
    assert (first["model"], first["dataset"], first["ground_truth"], first["n"]) == ("gpt-4.1", "CASIA1+", "authentic", "6")
    assert len([k for k in first if k not in ("model", "dataset", "ground_truth", "n")]) == 8


def _write(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_single_strategy_single_dataset(tmp_path):
    records = [json.loads(l) for l in RECORDS.read_text().splitlines()]
    subset = [r for r in records if r["model_name"] == "gpt-4.1" and r["strategy"] == "holistic" and r["dataset"] == "DFFD"]
    out = render_report(_write(tmp_path / "records.jsonl", subset), tmp_path / "rep")
    lines = out.table_txt.read_text().splitlines()
    header = next(l for l in lines if l.startswith("model"))
    body = lines[lines.index(header) + 2:]
    assert len(body) == 1
    assert [c.strip() for c in header.split("|")] == ["model", "strategy", "DFFD", "n", "unparsed"]
    assert body[0].split("|")[2].strip() == "0.70 / 0.67"


def test_single_class_holistic_skips_roc(tmp_path, caplog):
    records = [json.loads(l) for l in RECORDS.read_text().splitlines()]
    subset = [r for r in records if r["strategy"] == "holistic" and r["ground_truth"] == "tampered"]
    out = render_report(_write(tmp_path / "records.jsonl", subset), tmp_path / "rep")
    assert out.roc_files == []
    assert "no ROC" in caplog.text


def test_default_output_folder(tmp_path):
    (tmp_path / "run-x").mkdir()
    records = [json.loads(l) for l in RECORDS.read_text().splitlines()][:3]
    path = _write(tmp_path / "run-x" / "records.jsonl", records)
    out = render_report(path)
    assert out.table_txt.parent == tmp_path / "run-x" / "report"


def test_empty_records_rejected(tmp_path):
    empty = tmp_path / "records.jsonl"
    empty.write_text("")
    with pytest.raises(ReportError):
        render_report(empty)
    with pytest.raises(ReportError):
        render_report(tmp_path / "missing.jsonl")
