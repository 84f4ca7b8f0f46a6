"""On-disk formats for run artifacts."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..explainers.base import Attribution

ATTRIBUTION_FORMAT = 1


@dataclass
class AttributionFile:
    method: str
    feature_names: tuple[str, ...]
    attributions: list[Attribution]
    meta: dict = field(default_factory=dict)

    @property
    def instance_ids(self) -> np.ndarray:
        return np.array([a.instance_id for a in self.attributions], dtype=np.int64)

    def values(self) -> np.ndarray:
        if not self.attributions:
            return np.zeros((0, len(self.feature_names)))
        return np.array([a.values for a in self.attributions])


def write_attributions(path, method: str, feature_names, attributions, meta: dict) -> None:
    """Columnar text: ``# key: value`` header lines, then one row per instance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# format: {ATTRIBUTION_FORMAT}\n")
        for key in sorted(meta):
            fh.write(f"# {key}: {json.dumps(meta[key], sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", "method", "base_value", *[f"phi_{n}" for n in feature_names],
                    "target_output", "flags"])
        for a in attributions:
            w.writerow([a.instance_id, method, repr(a.base_value), *[repr(float(v)) for v in a.values],
                        repr(a.target_output), "|".join(a.flags)])
    tmp.replace(path)


def read_header(path) -> dict:
    meta = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            key, _, raw = line[2:].rstrip("\n").partition(": ")
            meta[key] = json.loads(raw)
    return meta


def read_attributions(path) -> AttributionFile:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    meta = {}
    body_start = 0
    for body_start, line in enumerate(lines):
        if not line.startswith("# "):
            break
        key, _, raw = line[2:].partition(": ")
        meta[key] = json.loads(raw)
    if meta.get("format") != ATTRIBUTION_FORMAT:
        raise ValueError(f"{path}: unsupported attribution format {meta.get('format')!r}")
    rows = list(csv.reader(lines[body_start:]))
    header, body = rows[0], rows[1:]
    names = tuple(h[4:] for h in header[3:-2])
    atts = []
    method = meta.get("method", "")
    for r in body:
        method = r[1]
        flags = tuple(f for f in r[-1].split("|") if f)
        atts.append(Attribution([float(v) for v in r[3:-2]], float(r[2]), r[1], float(r[-2]), int(r[0]), flags))
    return AttributionFile(method, names, atts, meta)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")
    tmp.replace(path)


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())
