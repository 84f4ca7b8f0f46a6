"""Datasets, CSV ingestion, ordinal encoding and resampling."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

CONTINUOUS = "continuous"
DISCRETE = "discrete"
KINDS = (CONTINUOUS, DISCRETE)
MISSING = ("", "?")


class DataError(ValueError):
    """Raised for malformed input files or contract violations on datasets."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """A binary-labelled table.

    ``features`` is float64 once encoded. Freshly loaded data may hold an
    object array with raw strings in discrete columns and ``None`` for
    missing cells; :func:`encode` turns it into the numeric form.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    feature_kinds: tuple[str, ...]
    provenance: str = ""

    def __post_init__(self):
        features = self.features
        if features.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {features.shape}")
        labels = np.asarray(self.labels)
        if labels.shape != (features.shape[0],):
            raise DataError(f"{features.shape[0]} feature rows but {labels.shape[0]} labels")
        if len(self.feature_names) != features.shape[1] or len(self.feature_kinds) != features.shape[1]:
            raise DataError("feature_names / feature_kinds must have one entry per column")
        bad = set(self.feature_kinds) - set(KINDS)
        if bad:
            raise DataError(f"unknown feature kinds {sorted(bad)}")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise DataError("non-binary label: labels must be 0 or 1")
        object.__setattr__(self, "labels", labels.astype(np.int64))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "feature_kinds", tuple(self.feature_kinds))
        features = np.array(features, dtype=object if features.dtype == object else np.float64)
        object.__setattr__(self, "features", features)
        features.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def is_encoded(self) -> bool:
        return self.features.dtype == np.float64 and bool(np.isfinite(self.features).all())

    def subset(self, idx) -> Dataset:
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.features[idx], self.labels[idx], self.feature_names, self.feature_kinds, self.provenance
        )


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    test: np.ndarray


@dataclass
class CsvSchema:
    """Column roles for :func:`load_csv`.

    ``label_map`` maps raw label strings to 0/1; without it the label column
    must already contain 0/1.
    """

    label: str
    kinds: dict[str, str] = field(default_factory=dict)
    default_kind: str = CONTINUOUS
    drop: tuple[str, ...] = ()
    label_map: dict[str, int] | None = None
    delimiter: str = ","
    names: tuple[str, ...] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> CsvSchema:
        known = {"label", "kinds", "default_kind", "drop", "label_map", "delimiter", "names"}
        kw = {k: v for k, v in d.items() if k in known}
        if "drop" in kw:
            kw["drop"] = tuple(kw["drop"])
        if kw.get("names") is not None:
            kw["names"] = tuple(kw["names"])
        if kw.get("label_map") is not None:
            kw["label_map"] = {str(k): int(v) for k, v in kw["label_map"].items()}
        return cls(**kw)


def _parse_label(raw: str, schema: CsvSchema, row: int) -> int:
    raw = raw.strip()
    if schema.label_map is not None:
        if raw not in schema.label_map:
            raise DataError(f"row {row}, column {schema.label!r}: non-binary label {raw!r}")
        return schema.label_map[raw]
    try:
        val = float(raw)
    except ValueError:
        raise DataError(f"row {row}, column {schema.label!r}: non-binary label {raw!r}") from None
    if val not in (0.0, 1.0):
        raise DataError(f"row {row}, column {schema.label!r}: non-binary label {raw!r}")
    return int(val)


def load_csv(path, schema: CsvSchema | dict) -> Dataset:
    """Read a delimited text file into an (unencoded) :class:`Dataset`."""
    if isinstance(schema, dict):
        schema = CsvSchema.from_dict(schema)
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh, delimiter=schema.delimiter, skipinitialspace=True)
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    if schema.names is not None:
        header = list(schema.names)
        body = rows
        first_row = 1
    else:
        if not rows:
            raise DataError(f"{path}: empty file, header row required")
        header = [h.strip() for h in rows[0]]
        body = rows[1:]
        first_row = 2
    if header.count(schema.label) != 1:
        raise DataError(f"{path}: schema label column {schema.label!r} must appear exactly once in header")
    columns = [h for h in header if h != schema.label and h not in schema.drop]
    kinds = []
    for c in columns:
        kind = schema.kinds.get(c, schema.default_kind)
        if kind not in KINDS:
            raise DataError(f"column {c!r}: unknown kind {kind!r}")
        kinds.append(kind)
    pos = {h: i for i, h in enumerate(header)}
    label_pos = pos[schema.label]
    feats = np.empty((len(body), len(columns)), dtype=object)
    labels = np.empty(len(body), dtype=np.int64)
    for r, row in enumerate(body):
        line = r + first_row
        if len(row) != len(header):
            raise DataError(f"{path}: row {line} has {len(row)} columns, expected {len(header)}")
        labels[r] = _parse_label(row[label_pos], schema, line)
        for j, c in enumerate(columns):
            cell = row[pos[c]].strip()
            if cell in MISSING:
                feats[r, j] = None
            elif kinds[j] == CONTINUOUS:
                try:
                    feats[r, j] = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {line}, column {c!r}: not a number: {cell!r}") from None
            else:
                feats[r, j] = cell
    return Dataset(feats, labels, tuple(columns), tuple(kinds), provenance=str(path))


def save_csv(ds: Dataset, path) -> None:
    """Write an encoded dataset with a ``label`` column last."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*ds.feature_names, "label"])
        for row, y in zip(ds.features.tolist(), ds.labels.tolist()):
            w.writerow([repr(float(v)) for v in row] + [int(y)])


def read_encoded_csv(path, kinds=None, provenance: str | None = None) -> Dataset:
    """Inverse of :func:`save_csv`."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    arr = np.array([[float(v) for v in r] for r in body], dtype=np.float64).reshape(len(body), len(header))
    names = tuple(header[:-1])
    kinds = tuple(kinds) if kinds is not None else (CONTINUOUS,) * len(names)
    return Dataset(arr[:, :-1], arr[:, -1].astype(np.int64), names, kinds, provenance or str(path))


def _category_sort_key(values):
    try:
        return sorted(values, key=float)
    except ValueError:
        return sorted(values)


class OrdinalEncoder:
    """Maps discrete columns to integer codes and imputes missing cells.

    Categories are numbered in sorted order (numeric order when every
    category parses as a number). Continuous gaps get the column median,
    discrete gaps the most frequent category.
    """

    def __init__(self, tables: dict[str, dict[str, int]] | None = None):
        self.tables: dict[str, dict[str, int]] = dict(tables or {})
        self.fill: dict[str, float] = {}

    def fit(self, ds: Dataset) -> OrdinalEncoder:
        for j, (name, kind) in enumerate(zip(ds.feature_names, ds.feature_kinds)):
            col = ds.features[:, j]
            present = [v for v in col if v is not None and not _isnan(v)]
            if kind == DISCRETE:
                if name not in self.tables:
                    cats = _category_sort_key({_as_category(v) for v in present})
                    self.tables[name] = {c: i for i, c in enumerate(cats)}
                codes = [self.tables[name][_as_category(v)] for v in present if _as_category(v) in self.tables[name]]
                if codes:
                    counts = np.bincount(codes, minlength=len(self.tables[name]))
                    self.fill[name] = float(np.argmax(counts))
                else:
                    self.fill[name] = 0.0
            else:
                vals = np.asarray(present, dtype=np.float64)
                self.fill[name] = float(np.median(vals)) if vals.size else 0.0
        return self

    def transform(self, ds: Dataset) -> Dataset:
        out = np.empty(ds.features.shape, dtype=np.float64)
        imputed = 0
        for j, (name, kind) in enumerate(zip(ds.feature_names, ds.feature_kinds)):
            if name not in self.fill:
                raise DataError(f"encoding policy does not cover column {name!r}")
            table = self.tables.get(name)
            if kind == DISCRETE and table is None:
                raise DataError(f"encoding policy has no category table for discrete column {name!r}")
            for i, v in enumerate(ds.features[:, j]):
                if v is None or _isnan(v):
                    out[i, j] = self.fill[name]
                    imputed += 1
                elif kind == DISCRETE:
                    cat = _as_category(v)
                    if cat not in table:
                        raise DataError(f"column {name!r}: unseen category {cat!r}")
                    out[i, j] = table[cat]
                else:
                    out[i, j] = float(v)
        prov = ds.provenance
        if imputed:
            prov = f"{prov}|imputed={imputed}(median/mode)"
        return Dataset(out, ds.labels, ds.feature_names, ds.feature_kinds, prov)

    def decode(self, name: str, codes) -> list[str]:
        inverse = {i: c for c, i in self.tables[name].items()}
        return [inverse[int(c)] for c in codes]


def _isnan(v) -> bool:
    return isinstance(v, float) and math.isnan(v)


def _as_category(v) -> str:
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def encode(ds: Dataset, policy: OrdinalEncoder | None = None) -> Dataset:
    """Encode ``ds``; fits a fresh :class:`OrdinalEncoder` when none is given."""
    if policy is None:
        policy = OrdinalEncoder().fit(ds)
    return policy.transform(ds)


def split(ds_or_n, test_fraction: float = 0.2, seed: int = 0, stratify: bool = False) -> SplitIndices:
    """Seeded random train/test partition."""
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = None
    if isinstance(ds_or_n, Dataset):
        n = ds_or_n.n
        labels = ds_or_n.labels
    else:
        n = int(ds_or_n)
    if n < 2:
        raise DataError(f"need at least 2 rows to split, got {n}")
    rng = np.random.default_rng(seed)
    if stratify and labels is not None:
        test = []
        for cls in (0, 1):
            idx = np.flatnonzero(labels == cls)
            idx = idx[rng.permutation(idx.size)]
            test.append(idx[: int(round(idx.size * test_fraction))])
        test = np.sort(np.concatenate(test))
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        return SplitIndices(np.flatnonzero(mask), test)
    perm = rng.permutation(n)
    n_test = min(max(int(round(n * test_fraction)), 1), n - 1)
    return SplitIndices(perm[n_test:], perm[:n_test])


def kfold(n: int, k: int, seed: int = 0) -> list[SplitIndices]:
    """Seeded k-fold partition; fold sizes differ by at most one."""
    if k < 2:
        raise DataError(f"k must be >= 2, got {k}")
    if k > n:
        raise DataError(f"k={k} folds exceed n={n} rows")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, k)
    out = []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append(SplitIndices(train, test))
    return out
