"""Report serialization and table/plot-data layouts."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

from ..explainers.base import METHODS
from ..metrics import MetricReport

LAYOUTS = ("table4-9", "figure-boxplot", "figure-heatmap")
PAIR_SEP = "~"

COMPACTNESS = "compactness_k"
DISTANCE_1 = "distance_1"
CONSISTENCY = "consistency"
CONSISTENCY_TRUTH = "consistency_truth"
STABILITY = "stability"


def fidelity_metric(k: int) -> str:
    return f"fidelity_at_{k}"


def agreement_metric(kind: str, k: int) -> str:
    return f"{kind}_agreement_k{k}"


def _method_order(name: str):
    first = name.split(PAIR_SEP)[0]
    return (METHODS.index(first) if first in METHODS else len(METHODS), name)


# ----------------------------------------------------------------------------
# serialization

def to_columnar(report: MetricReport) -> str:
    buf = io.StringIO()
    for key in sorted(report.metadata):
        buf.write(f"# {key}: {json.dumps(report.metadata[key], sort_keys=True)}\n")
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["dataset", "model", "method", "metric", "aggregate", "value"])
    for key in report.keys():
        w.writerow([*key, repr(report.entries[key])])
    return buf.getvalue()


def from_columnar(text: str) -> MetricReport:
    report = MetricReport()
    lines = text.splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            key, _, raw = line[2:].partition(": ")
            report.metadata[key] = json.loads(raw)
        else:
            body.append(line)
    rows = list(csv.reader(body, delimiter="\t"))
    for r in rows[1:]:
        report.add(*r[:5], float(r[5]))
    return report


def to_nested(report: MetricReport) -> dict:
    """``dataset -> model -> method -> metric -> aggregate -> value``."""
    out: dict = {}
    for (ds, model, method, metric, agg), v in sorted(report.entries.items()):
        out.setdefault(ds, {}).setdefault(model, {}).setdefault(method, {}).setdefault(metric, {})[agg] = v
    return {"metadata": report.metadata, "results": out}


def from_nested(d: dict) -> MetricReport:
    report = MetricReport(metadata=dict(d.get("metadata", {})))
    for ds, models in d["results"].items():
        for model, methods in models.items():
            for method, metrics in methods.items():
                for metric, aggs in metrics.items():
                    for agg, v in aggs.items():
                        report.add(ds, model, method, metric, agg, v)
    return report


def save_report(report: MetricReport, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    tsv = directory / "metrics.tsv"
    tsv.write_text(to_columnar(report))
    nested = directory / "metrics.json"
    nested.write_text(json.dumps(to_nested(report), indent=1, sort_keys=True) + "\n")
    return [tsv, nested]


def load_report(directory) -> MetricReport:
    return from_columnar((Path(directory) / "metrics.tsv").read_text())


def write_shares(path, samples: dict) -> Path:
    """Per-instance normalised shares, the raw material for box plots.

    ``samples`` maps ``(dataset, method)`` to ``(feature_names, ids, shares)``.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["dataset", "method", "feature", "instance_id", "share"])
        for ds, method in sorted(samples, key=lambda k: (k[0], _method_order(k[1]))):
            names, ids, shares = samples[(ds, method)]
            for j, name in enumerate(names):
                for i, s in zip(ids, shares[:, j]):
                    w.writerow([ds, method, name, int(i), repr(float(s))])
    return path


def read_shares(path) -> dict:
    grouped: dict = {}
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))[1:]
    for ds, method, feature, iid, share in rows:
        grouped.setdefault((ds, method), {}).setdefault(feature, []).append((int(iid), float(share)))
    out = {}
    for key, feats in grouped.items():
        names = tuple(feats)
        ids = np.array([i for i, _ in feats[names[0]]])
        out[key] = (names, ids, np.array([[s for _, s in feats[n]] for n in names]).T)
    return out


# ----------------------------------------------------------------------------
# layouts

def _fmt(v) -> str:
    return "-" if v is None else f"{v:.2f}"


def _table(report: MetricReport) -> str:
    groups = report.metadata.get("groups") or {}
    threshold = report.metadata.get("compactness_threshold", 0.9)
    k5 = report.metadata.get("compactness_k", 5)
    columns = [(COMPACTNESS, f"features_for_{round(threshold * 100)}pct", 1.0),
               (DISTANCE_1, "distance_1_feature", 1.0),
               (fidelity_metric(k5), f"accuracy_with_{k5}_features_pct", 100.0),
               (CONSISTENCY, "mean_consistency", 1.0),
               (CONSISTENCY_TRUTH, "mean_consistency_truth", 1.0),
               (STABILITY, "mean_stability", 1.0)]
    means = {k: v for k, v in report.entries.items() if k[4] == "mean" and PAIR_SEP not in k[2]}
    if not means:
        raise ValueError("report has no per-method entries to tabulate")
    present = {k[3] for k in means}
    columns = [c for c in columns if c[0] in present]
    cells: dict = {}
    for (ds, model, method, metric, _), v in means.items():
        cells.setdefault((groups.get(ds, ds), model, method), {}).setdefault(metric, []).append(v)
    order = report.metadata.get("group_order") or []
    rank = {g: i for i, g in enumerate(order)}
    keys = sorted(cells, key=lambda k: (rank.get(k[0], len(rank)), k[0], k[1], _method_order(k[2])))
    lines = ["\t".join(["group", "model", "method", *[c[1] for c in columns]])]
    for key in keys:
        vals = []
        for metric, _, scale in columns:
            xs = cells[key].get(metric)
            vals.append(_fmt(scale * float(np.mean(xs))) if xs else "-")
        lines.append("\t".join([*key, *vals]))
    return "\n".join(lines) + "\n"


def agreement_matrices(report: MetricReport) -> dict:
    """``(dataset, model, kind, k) -> (methods, matrix)`` from pairwise entries."""
    found: dict = {}
    for (ds, model, pair, metric, agg), v in report.entries.items():
        if agg != "mean" or PAIR_SEP not in pair or "_agreement_k" not in metric:
            continue
        kind, _, k = metric.partition("_agreement_k")
        found.setdefault((ds, model, kind, int(k)), {})[tuple(pair.split(PAIR_SEP))] = v
    out = {}
    for key, pairs in sorted(found.items()):
        methods = sorted({m for p in pairs for m in p}, key=_method_order)
        idx = {m: i for i, m in enumerate(methods)}
        mat = np.eye(len(methods))
        for (a, b), v in pairs.items():
            mat[idx[a], idx[b]] = mat[idx[b], idx[a]] = v
        out[key] = (methods, mat)
    return out


def emit_report(report: MetricReport, layout: str, path, samples: dict | None = None) -> list[Path]:
    """Write one layout; returns the files written.

    ``table4-9`` writes a single tab-separated file at ``path``. The figure
    layouts treat ``path`` as a directory.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown layout {layout!r}; valid layouts: {', '.join(LAYOUTS)}")
    if not len(report):
        raise ValueError("cannot emit an empty report")
    path = Path(path)
    if layout == "table4-9":
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(_table(report))
        return [path]
    path.mkdir(parents=True, exist_ok=True)
    if layout == "figure-heatmap":
        mats = agreement_matrices(report)
        if not mats:
            raise ValueError("report holds no agreement entries for a heatmap")
        written = []
        for (ds, model, kind, k), (methods, mat) in mats.items():
            f = path / f"{ds}__{model}__{kind}_k{k}.tsv"
            rows = ["\t".join(["method", *methods])]
            rows += ["\t".join([m, *[f"{v:.2f}" for v in mat[i]]]) for i, m in enumerate(methods)]
            f.write_text("\n".join(rows) + "\n")
            written.append(f)
        return written
    if not samples:
        raise ValueError("box-plot layout needs per-instance share samples")
    written = []
    for (ds, method), (names, ids, shares) in sorted(samples.items(), key=lambda kv: (kv[0][0], _method_order(kv[0][1]))):
        f = path / f"{ds}__{method}.tsv"
        q = np.quantile(shares, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
        rows = ["\t".join(["feature", "min", "q1", "median", "q3", "max", "mean", "n"])]
        for j, name in enumerate(names):
            rows.append("\t".join([name, *[f"{v:.4f}" for v in q[:, j]], f"{shares[:, j].mean():.4f}",
                                   str(shares.shape[0])]))
        f.write_text("\n".join(rows) + "\n")
        written.append(f)
    return written
