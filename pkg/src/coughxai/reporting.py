"""CSV/JSON artifacts and the per-group threshold x feature summary table."""

from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from coughxai.errors import FormatError
from coughxai.features import FEATURE_NAMES, SpectralFeatures
from coughxai.stats import GroupSpec, TestKind, TestResult, boxplot_summary

FEATURES_HEADER = ("patient_id", "threshold") + FEATURE_NAMES
RESULTS_HEADER = ("group", "feature", "threshold", "test", "statistic", "p_value", "significant")

TABLE_LABELS = {
    "ac": "AC",
    "sp_bw": "SpBW",
    "sp_cf": "SpCF",
    "sp_f": "SpF",
    "sp_fx": "SpFx",
    "sp_re": "SpRE",
    "sp_r": "SpR",
}


def fmt(x: float) -> str:
    return repr(float(x))


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _read_csv(path, header) -> list[dict]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != tuple(header):
            raise FormatError(f"{path}: expected header {','.join(header)}")
        return list(reader)


def feature_rows(items: Iterable[tuple]) -> list[list[str]]:
    """``(patient_id, threshold, SpectralFeatures)`` triples to CSV rows."""
    rows = []
    for pid, th, feats in items:
        rows.append([pid, "" if th is None else fmt(th)] + [fmt(getattr(feats, n)) for n in FEATURE_NAMES])
    return rows


def write_features_csv(path, items: Iterable[tuple], append: bool = False) -> None:
    path = Path(path)
    rows = feature_rows(items)
    if append and path.exists() and path.stat().st_size:
        _read_csv(path, FEATURES_HEADER)
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(rows)
        with path.open("a") as fh:
            fh.write(buf.getvalue())
    else:
        _write_csv(path, FEATURES_HEADER, rows)


def read_features_csv(path) -> dict:
    """``{(patient_id, threshold): SpectralFeatures}``."""
    table = {}
    for lineno, row in enumerate(_read_csv(path, FEATURES_HEADER), 2):
        try:
            th = float(row["threshold"])
            feats = SpectralFeatures(**{n: float(row[n]) for n in FEATURE_NAMES})
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        key = (row["patient_id"], th)
        if key in table:
            raise FormatError(f"{path}:{lineno}: duplicate row for {key}")
        table[key] = feats
    return table


def write_results_csv(path, results: Sequence[TestResult]) -> None:
    _write_csv(path, RESULTS_HEADER, [
        [r.group, r.feature, fmt(r.threshold), r.test_kind.value, fmt(r.statistic),
         fmt(r.p_value), "true" if r.significant else "false"]
        for r in results
    ])


def read_results_csv(path) -> list[TestResult]:
    results = []
    for lineno, row in enumerate(_read_csv(path, RESULTS_HEADER), 2):
        try:
            result = TestResult(
                TestKind(row["test"]), float(row["statistic"]), float(row["p_value"]),
                row["group"], row["feature"], float(row["threshold"]),
            )
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if row["significant"] not in ("true", "false") or (row["significant"] == "true") != result.significant:
            raise FormatError(f"{path}:{lineno}: significant flag disagrees with p-value")
        results.append(result)
    return results


def boxplot_data(
    results: Sequence[TestResult],
    features: Mapping,
    groups: Sequence[GroupSpec],
) -> dict:
    """Nested ``group -> side -> feature -> threshold`` boxplot statistics.

    Each group also carries its side labels and member lists, and each
    (feature, threshold) cell under ``"tests"`` records p-value and
    significance, so plots can be restricted to significant cases.
    """
    by_name = {g.name: g for g in groups}
    out: dict = {}
    for r in results:
        spec = by_name[r.group]
        entry = out.setdefault(r.group, {
            "labels": {"a": spec.label_a, "b": spec.label_b},
            "members": {"a": sorted(spec.group_a), "b": sorted(spec.group_b)},
            "a": {}, "b": {}, "tests": {},
        })
        th_key = fmt(r.threshold)
        for side, members in (("a", spec.group_a), ("b", spec.group_b)):
            values = [getattr(features[(pid, r.threshold)], r.feature) for pid in sorted(members)]
            entry[side].setdefault(r.feature, {})[th_key] = boxplot_summary(values).as_dict()
        entry["tests"].setdefault(r.feature, {})[th_key] = {
            "test": r.test_kind.value, "p_value": r.p_value, "significant": r.significant,
        }
    return out


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True, allow_nan=False) + "\n")


def _cell(p: float) -> str:
    text = "1" if p == 1.0 else f"{p:.4f}"
    return text + "*" if p < 0.05 else text + " "


def render_table(results: Sequence[TestResult], feature_names: Sequence[str] = FEATURE_NAMES) -> str:
    """p-value table: one block per group, one row per threshold, one
    column per feature; ``*`` marks p < 0.05."""
    cells = defaultdict(dict)
    group_order, th_order = [], defaultdict(list)
    for r in results:
        if r.group not in group_order:
            group_order.append(r.group)
        if r.threshold not in th_order[r.group]:
            th_order[r.group].append(r.threshold)
        cells[(r.group, r.threshold)][r.feature] = r.p_value

    labels = [TABLE_LABELS.get(n, n) for n in feature_names]
    width = 9
    head = "Th.  | " + " ".join(lab.rjust(width) for lab in labels)
    rule = "-" * len(head)
    lines = [head, rule]
    for group in group_order:
        lines.append(group.center(len(head)).rstrip())
        lines.append(rule)
        for th in sorted(th_order[group]):
            row = cells[(group, th)]
            values = [
                _cell(row[n]).rjust(width) if n in row and not math.isnan(row[n]) else "-".rjust(width)
                for n in feature_names
            ]
            lines.append(f"{th:<4.2g} | " + " ".join(values))
        lines.append(rule)
    lines.append("* p < 0.05")
    return "\n".join(lines) + "\n"
