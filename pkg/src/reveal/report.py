"""Render results tables, ROC files and factor breakdowns from a records log."""

from __future__ import annotations

import csv
import logging
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

from .domain import ForgeryDomain, GroundTruth, canonical_factors
from .errors import DegenerateRocError, ReportError
from .metrics import ConfusionCounts, confusion_counts, roc_curve
from .prompts import PromptStrategy
from .runner import EvalRecord, read_records

log = logging.getLogger(__name__)

_STRATEGY_ORDER = {s.value: i for i, s in enumerate(PromptStrategy)}
_DOMAIN_ORDER = {d.value: i for i, d in enumerate(ForgeryDomain)}


@dataclass
class ReportArtifacts:
    table_txt: Path
    table_csv: Path
    cells_csv: Path
    auc_csv: Path
    factor_csv: Path
    roc_files: list[Path] = field(default_factory=list)


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9.+-]+", "_", text).strip("_") or "unnamed"


def _prediction(rec: EvalRecord) -> GroundTruth | None:
    return GroundTruth(rec.predicted_label) if rec.predicted_label else None


def _ordered_unique(values) -> list:
    return list(dict.fromkeys(values))


def _datasets(records: list[EvalRecord]) -> list[str]:
    domain_of: dict[str, str] = {}
    for rec in records:
        domain_of.setdefault(rec.dataset, rec.domain)
    names = _ordered_unique(r.dataset for r in records)
    return sorted(names, key=lambda d: (_DOMAIN_ORDER.get(domain_of[d], 99), names.index(d))), domain_of


def cell_counts(records: list[EvalRecord]) -> dict[tuple[str, str, str], ConfusionCounts]:
    """Confusion counts per (model, strategy, dataset)."""
    grouped: dict[tuple[str, str, str], list] = defaultdict(list)
    for rec in records:
        grouped[(rec.model_name, rec.strategy, rec.dataset)].append(
            (GroundTruth(rec.ground_truth), _prediction(rec))
        )
    return {key: confusion_counts(pairs) for key, pairs in grouped.items()}


def format_cell(counts: ConfusionCounts | None) -> str:
    if counts is None or counts.total == 0:
        return "-"
    return f"{counts.accuracy:.2f} / {counts.f1:.2f}"


def _rows(records: list[EvalRecord]) -> list[tuple[str, str]]:
    models = _ordered_unique(r.model_name for r in records)
    pairs = _ordered_unique((r.model_name, r.strategy) for r in records)
    return sorted(pairs, key=lambda p: (_STRATEGY_ORDER.get(p[1], 99), models.index(p[0])))


def render_table(records: list[EvalRecord]) -> str:
    """Plain-text table: one row per (model, strategy), ACC / F1 per dataset, grouped by domain."""
    datasets, domain_of = _datasets(records)
    cells = cell_counts(records)
    rows = _rows(records)

    head = ["model", "strategy"]
    body = []
    for model, strategy in rows:
        row_cells = [cells.get((model, strategy, d)) for d in datasets]
        n = sum(c.total for c in row_cells if c)
        unparsed = sum(c.unparsed for c in row_cells if c)
        body.append([model, strategy, *(format_cell(c) for c in row_cells), str(n), str(unparsed)])
    columns = [*head, *datasets, "n", "unparsed"]
    widths = [max(len(columns[i]), *(len(r[i]) for r in body)) for i in range(len(columns))]

    # Domain header spans the dataset columns that belong to it.
    domain_line = []
    for i, name in enumerate(columns):
        if 2 <= i < 2 + len(datasets):
            domain = domain_of[name]
            first = i == 2 or domain_of[columns[i - 1]] != domain
            domain_line.append((domain if first else "").ljust(widths[i]))
        else:
            domain_line.append(" " * widths[i])

    def line(values: list[str]) -> str:
        left = [v.ljust(w) for v, w in zip(values[:2], widths[:2])]
        right = [v.rjust(w) if values is not columns else v.ljust(w) for v, w in zip(values[2:], widths[2:])]
        return " | ".join(left + right).rstrip()

    out = [
        "ACC / F1 per dataset (positive class: tampered). n = records, unparsed = no usable verdict.",
        "",
        " | ".join(domain_line).rstrip(),
        line(columns),
        "-+-".join("-" * w for w in widths),
    ]
    out += [line(r) for r in body]
    return "\n".join(out) + "\n"


def render_report(records_path: str | Path, out_dir: str | Path | None = None) -> ReportArtifacts:
    records_path = Path(records_path)
    if not records_path.is_file():
        raise ReportError(f"records file not found: {records_path}")
    records = read_records(records_path)
    if not records:
        raise ReportError(f"no records in {records_path}")
    out = Path(out_dir) if out_dir else records_path.parent / "report"
    out.mkdir(parents=True, exist_ok=True)

    table_txt = out / "table.txt"
    table_txt.write_text(render_table(records), encoding="utf-8")

    datasets, _ = _datasets(records)
    cells = cell_counts(records)
    table_csv = out / "table.csv"
    with open(table_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "strategy", *(f"{d}_{m}" for d in datasets for m in ("acc", "f1", "n", "unparsed"))])
        for model, strategy in _rows(records):
            row: list[str] = [model, strategy]
            for d in datasets:
                c = cells.get((model, strategy, d))
                row += ["", "", "0", "0"] if c is None else [f"{c.accuracy:.4f}", f"{c.f1:.4f}", str(c.total), str(c.unparsed)]
            writer.writerow(row)

    cells_csv = out / "cells.csv"
    with open(cells_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "strategy", "dataset", "n", "tp", "fp", "tn", "fn", "unparsed", "accuracy", "f1"])
        for model, strategy in _rows(records):
            for d in datasets:
                c = cells.get((model, strategy, d))
                if c is not None:
                    writer.writerow([model, strategy, d, c.total, c.tp, c.fp, c.tn, c.fn, c.unparsed,
                                     f"{c.accuracy:.4f}", f"{c.f1:.4f}"])

    roc_dir = out / "roc"
    roc_files: list[Path] = []
    auc_csv = out / "auc.csv"
    scored: dict[tuple[str, str], list] = defaultdict(list)
    for rec in records:
        if rec.strategy == PromptStrategy.HOLISTIC.value and rec.tampering_score is not None:
            scored[(rec.model_name, rec.dataset)].append((GroundTruth(rec.ground_truth), rec.tampering_score))
    with open(auc_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "dataset", "n_scored", "auc"])
        for (model, dataset), pairs in scored.items():
            try:
                curve = roc_curve(pairs)
            except DegenerateRocError as exc:
                log.warning("no ROC for %s on %s: %s", model, dataset, exc)
                writer.writerow([model, dataset, len(pairs), ""])
                continue
            roc_dir.mkdir(exist_ok=True)
            path = roc_dir / f"roc__{_slug(model)}__{_slug(dataset)}.csv"
            curve.to_csv(path)
            roc_files.append(path)
            writer.writerow([model, dataset, len(pairs), f"{curve.auc:.6f}"])

    factor_csv = out / "factor_means.csv"
    factors = canonical_factors()
    sums: dict[tuple[str, str, str], list] = {}
    for rec in records:
        verdict = rec.outcome.get("verdict") if rec.outcome.get("status") == "parsed" else None
        if not verdict or verdict.get("type") != "holistic":
            continue
        key = (rec.model_name, rec.dataset, rec.ground_truth)
        acc = sums.setdefault(key, [0, [0] * len(factors)])
        by_factor = {a["factor"]: a["score"] for a in verdict["assessments"]}
        acc[0] += 1
        for i, f in enumerate(factors):
            acc[1][i] += by_factor[f.value]
    with open(factor_csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "dataset", "ground_truth", "n", *(f.value for f in factors)])
        truth_order = {g.value: i for i, g in enumerate(GroundTruth)}
        for key in sorted(sums, key=lambda k: (k[0], datasets.index(k[1]), truth_order[k[2]])):
            n, totals = sums[key]
            writer.writerow([*key, n, *(f"{t / n:.3f}" for t in totals)])

    return ReportArtifacts(table_txt, table_csv, cells_csv, auc_csv, factor_csv, roc_files)
