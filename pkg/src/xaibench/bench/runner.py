"""Pipeline orchestration with digest-keyed stage caching.

Stages: dataset -> model -> explain -> evaluate -> report. Each stage writes
its artifact together with a digest of everything it depends on; a stage
whose artifact already carries the expected digest is skipped.
"""
from __future__ import annotations

import hashlib
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .. import data, metrics, synthgen, trees
from ..explainers.base import METHODS, Background
from ..explainers.batch import explain_batch
from . import artifacts, report
from .config import ExperimentConfig, digest_of

logger = logging.getLogger(__name__)

STAGES = ("dataset", "model", "explain", "evaluate", "report")
MANIFEST_VERSION = 1


class StageError(RuntimeError):
    def __init__(self, stage: str, name: str, message: str):
        super().__init__(f"stage {stage} [{name}] failed: {message}")
        self.stage = stage
        self.name = name


@dataclass
class StageRecord:
    stage: str
    name: str
    digest: str
    artifacts: list = field(default_factory=list)
    seconds: float = 0.0
    status: str = "done"  # done | cached | failed
    error: str | None = None


@dataclass
class RunManifest:
    config_digest: str
    out_dir: str
    framework_version: str
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        per_stage = {s: round(sum(r.seconds for r in self.records if r.stage == s), 6) for s in STAGES}
        return {"version": MANIFEST_VERSION, "config_digest": self.config_digest,
                "framework_version": self.framework_version, "stage_seconds": per_stage,
                "stages": [asdict(r) for r in self.records]}

    def save(self) -> Path:
        path = Path(self.out_dir) / "manifest.json"
        artifacts.write_json(path, self.to_dict())
        return path

    def artifacts_of(self, stage: str) -> list[str]:
        return [a for r in self.records if r.stage == stage for a in r.artifacts]

    def failed(self) -> list[StageRecord]:
        return [r for r in self.records if r.status == "failed"]


# ----------------------------------------------------------------------------
# planning

@dataclass(frozen=True)
class DatasetPlan:
    name: str
    index: int
    group: str
    source: str  # synthetic | registered
    spec: dict
    digest: str


def sub_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([int(seed), *[int(p) for p in path]]).generate_state(1)[0])


def registry_entry(name: str) -> dict:
    root = resources.files("xaibench") / "registry"
    f = root / f"{name}.yaml"
    if not f.is_file():
        known = sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))
        raise StageError("dataset", name, f"no registry entry {name!r}; known: {known}")
    return yaml.safe_load(f.read_text())


def registered_path(cfg: ExperimentConfig, entry: dict) -> Path:
    base = Path(cfg.data_dir) if cfg.data_dir else Path(".")
    return base / entry["file"]


def _file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def plan_datasets(cfg: ExperimentConfig) -> list[DatasetPlan]:
    plans = []
    split = {"test_fraction": cfg.test_fraction, "stratify": cfg.stratify, "seed": cfg.seed}
    if cfg.synthetic is not None:
        s = cfg.synthetic
        for spec in synthgen.enumerate_grid(s.n, cfg.seed, s.mu, s.functions, s.rhos, s.epsilons):
            d = {"source": "synthetic", "spec": spec.to_dict(), "ground_truth": s.ground_truth}
            plans.append(DatasetPlan(spec.name, len(plans), spec.function, "synthetic", d,
                                     digest_of({**d, "split": split, "index": len(plans)})))
    for name in cfg.datasets:
        entry = registry_entry(name)
        path = registered_path(cfg, entry)
        if not path.is_file():
            raise StageError("dataset", name, f"data file not found: {path}")
        d = {"source": "registered", "entry": entry, "path": str(path), "sha256": _file_digest(path)}
        plans.append(DatasetPlan(name, len(plans), name, "registered", d,
                                 digest_of({**{k: v for k, v in d.items() if k != "path"}, "split": split,
                                            "index": len(plans)})))
    if cfg.only:
        keep = set(cfg.only)
        unknown = keep - {p.name for p in plans} - {p.group for p in plans}
        if unknown:
            raise StageError("dataset", ",".join(sorted(unknown)), "--dataset selects nothing in this config")
        plans = [p for p in plans if p.name in keep or p.group in keep]
    return plans


# ----------------------------------------------------------------------------
# paths and cache checks

def _paths(out: Path, name: str, method: str | None = None) -> dict:
    return {"csv": out / "datasets" / f"{name}.csv", "meta": out / "datasets" / f"{name}.json",
            "model": out / "models" / f"{name}.json",
            "attr": out / "attributions" / f"{name}__{method}.csv" if method else None}


def _json_digest(path: Path, *keys) -> str | None:
    try:
        d = artifacts.read_json(path)
        for k in keys:
            d = d[k]
        return d
    except (OSError, ValueError, KeyError, TypeError):
        return None


def _rel(out: Path, p: Path) -> str:
    return str(p.relative_to(out))


def _guard(stage, name, digest, fn):
    """Run ``fn`` and convert any exception into a failed record."""
    t0 = time.perf_counter()
    try:
        rec = fn()
    except Exception as exc:  # noqa: BLE001 -- recorded, then re-raised by the orchestrator
        logger.debug("%s", traceback.format_exc())
        return StageRecord(stage, name, digest, [], time.perf_counter() - t0, "failed",
                           f"{type(exc).__name__}: {exc}")
    rec.seconds = time.perf_counter() - t0
    return rec


# ----------------------------------------------------------------------------
# stages

def _build_dataset(cfg: ExperimentConfig, plan: DatasetPlan) -> data.Dataset:
    if plan.source == "synthetic":
        return synthgen.generate(synthgen.SyntheticSpec.from_dict(plan.spec["spec"]))
    entry = plan.spec["entry"]
    raw = data.load_csv(plan.spec["path"], entry["schema"])
    return data.encode(raw)


def stage_dataset(out: Path, cfg: ExperimentConfig, plan: DatasetPlan) -> StageRecord:
    p = _paths(out, plan.name)

    def work():
        if _json_digest(p["meta"], "digest") == plan.digest and p["csv"].is_file() \
                and _json_digest(p["meta"], "csv_sha256") == _file_digest(p["csv"]):
            return StageRecord("dataset", plan.name, plan.digest, [_rel(out, p["meta"]), _rel(out, p["csv"])],
                               status="cached")
        ds = _build_dataset(cfg, plan)
        sp = data.split(ds, cfg.test_fraction, sub_seed(cfg.seed, 1, plan.index), cfg.stratify)
        data.save_csv(ds, p["csv"])
        meta = {"digest": plan.digest, "name": plan.name, "group": plan.group, "source": plan.source,
                "feature_kinds": list(ds.feature_kinds), "provenance": ds.provenance,
                "train": sp.train.tolist(), "test": sp.test.tolist(), "csv_sha256": _file_digest(p["csv"])}
        if plan.source == "synthetic":
            spec = synthgen.SyntheticSpec.from_dict(plan.spec["spec"])
            gt = synthgen.ground_truth(spec, plan.spec["ground_truth"])
            meta.update(spec=spec.to_dict(), ground_truth={"mode": gt.mode, "raw": list(gt.raw),
                                                          "normalized": list(gt.normalized),
                                                          "degenerate": gt.degenerate})
        artifacts.write_json(p["meta"], meta)
        return StageRecord("dataset", plan.name, plan.digest, [_rel(out, p["meta"]), _rel(out, p["csv"])])

    return _guard("dataset", plan.name, plan.digest, work)


def load_split(out: Path, name: str):
    p = _paths(out, name)
    meta = artifacts.read_json(p["meta"])
    ds = data.read_encoded_csv(p["csv"], meta["feature_kinds"], meta["provenance"])
    return ds, np.array(meta["train"], dtype=np.int64), np.array(meta["test"], dtype=np.int64), meta


def model_digest(cfg: ExperimentConfig, plan: DatasetPlan) -> str:
    return digest_of({"dataset": plan.digest, "model": asdict(cfg.model), "seed": cfg.seed})


def stage_model(out: Path, cfg: ExperimentConfig, plan: DatasetPlan, jobs: int = 1) -> StageRecord:
    p = _paths(out, plan.name)
    digest = model_digest(cfg, plan)

    def work():
        if _json_digest(p["model"], "meta", "digest") == digest:
            return StageRecord("model", plan.name, digest, [_rel(out, p["model"])], status="cached")
        ds, train, test, _ = load_split(out, plan.name)
        tr, te = ds.subset(train), ds.subset(test)
        seed = sub_seed(cfg.seed, 2, plan.index)
        params = dict(cfg.model.params)
        cv = None
        if cfg.model.grid:
            res = trees.grid_search(tr, cfg.model.grid, k=cfg.model.cv_folds, seed=seed, kind=cfg.model.kind,
                                    jobs=jobs)
            params.update(res.best_params)
            cv = res.best_score
        model = trees.fit_model(cfg.model.kind, tr.features, tr.labels, params, seed)
        p["model"].parent.mkdir(parents=True, exist_ok=True)
        trees.save_model(model, p["model"], {
            "digest": digest, "params": params, "cv_accuracy": cv,
            "train_accuracy": trees.accuracy(model, tr.features, tr.labels),
            "test_accuracy": trees.accuracy(model, te.features, te.labels),
            "gini_importance": trees.gini_importance(model).tolist()})
        return StageRecord("model", plan.name, digest, [_rel(out, p["model"])])

    return _guard("model", plan.name, digest, work)


def explain_digest(cfg: ExperimentConfig, plan: DatasetPlan, method: str) -> str:
    return digest_of({"model": model_digest(cfg, plan), "method": method,
                      "options": asdict(cfg.explain.explainer_config(method, 0)),
                      "background_size": cfg.explain.background_size,
                      "max_instances": cfg.explain.max_instances, "seed": cfg.seed})


def background_for(cfg: ExperimentConfig, plan: DatasetPlan, X_train) -> Background:
    return Background.sample(X_train, cfg.explain.background_size, sub_seed(cfg.seed, 3, plan.index))


def explained_rows(cfg: ExperimentConfig, test: np.ndarray) -> np.ndarray:
    return test if cfg.explain.max_instances is None else test[: cfg.explain.max_instances]


def stage_explain(out: Path, cfg: ExperimentConfig, plan: DatasetPlan, method: str) -> StageRecord:
    p = _paths(out, plan.name, method)
    digest = explain_digest(cfg, plan, method)
    name = f"{plan.name}/{method}"

    def work():
        if p["attr"].is_file() and artifacts.read_header(p["attr"]).get("digest") == digest:
            return StageRecord("explain", name, digest, [_rel(out, p["attr"])], status="cached")
        ds, train, test, _ = load_split(out, plan.name)
        model = trees.load_model(p["model"])
        X_train = ds.features[train]
        rows = explained_rows(cfg, test)
        bg = background_for(cfg, plan, X_train)
        ecfg = cfg.explain.explainer_config(method, sub_seed(cfg.seed, 4, plan.index, METHODS.index(method)))
        res = explain_batch(method, model, ds.features[rows], bg, ecfg, training=X_train, instance_ids=rows)
        meta = {"dataset": plan.name, "method": method, "digest": digest, "config_digest": cfg.digest(),
                "seed": ecfg.seed,
                "background": {"origin": bg.origin, "rows": int(bg.rows.shape[0])},
                "failures": [[i, msg] for i, msg in res.failures]}
        artifacts.write_attributions(p["attr"], method, ds.feature_names, list(res), meta)
        return StageRecord("explain", name, digest, [_rel(out, p["attr"])])

    return _guard("explain", name, digest, work)


def evaluate_dataset(out: Path, cfg: ExperimentConfig, plan: DatasetPlan) -> tuple[dict, dict]:
    """Per-instance metric values and share samples for one dataset."""
    ds, train, test, meta = load_split(out, plan.name)
    model = trees.load_model(_paths(out, plan.name)["model"])
    files = {m: artifacts.read_attributions(_paths(out, plan.name, m)["attr"]) for m in cfg.explain.methods}
    common = sorted(set.intersection(*[set(f.instance_ids.tolist()) for f in files.values()]))
    values: dict = {}
    samples: dict = {}
    if not common:
        logger.warning("%s: no instance explained by every method", plan.name)
        return values, samples
    ids = np.array(common, dtype=np.int64)
    X = ds.features[ids]
    bg = background_for(cfg, plan, ds.features[train])
    predicted = trees.predict(model, X)
    mk = cfg.model.kind
    wanted = set(cfg.metrics.names)
    raw, shares = {}, {}
    for method, f in files.items():
        pos = {int(i): r for r, i in enumerate(f.instance_ids)}
        raw[method] = f.values()[[pos[i] for i in common]]
        shares[method] = metrics.normalize_rows(raw[method])
        samples[(plan.name, method)] = (ds.feature_names, ids, shares[method])
    if "consistency" in wanted and len(shares) > 1:
        for method, v in metrics.pairwise_consistency(shares).items():
            values[(plan.name, mk, method, report.CONSISTENCY)] = v
    if "consistency_truth" in wanted and "ground_truth" in meta:
        truth = np.array(meta["ground_truth"]["normalized"])
        for method, s in shares.items():
            values[(plan.name, mk, method, report.CONSISTENCY_TRUTH)] = np.linalg.norm(s - truth, axis=1)
    if "stability" in wanted and ids.size > 1:
        nn = min(cfg.metrics.stability_neighbors, ids.size - 1)
        for method, s in shares.items():
            values[(plan.name, mk, method, report.STABILITY)] = metrics.stability_all(s, X, predicted, nn)[0]
    if "compactness" in wanted:
        k5 = cfg.metrics.compactness_k
        for method, v in raw.items():
            c = metrics.compactness_batch(model, X, v, bg, cfg.metrics.compactness_threshold)
            values[(plan.name, mk, method, report.COMPACTNESS)] = [c.k_needed]
            values[(plan.name, mk, method, report.fidelity_metric(k5))] = [c.fidelity_at(k5)]
            values[(plan.name, mk, method, report.DISTANCE_1)] = c.distances[:, 0]
    if "agreement" in wanted:
        methods = list(shares)
        m = ds.n_features
        for k in cfg.metrics.agreement_k:
            if k > m:
                logger.warning("%s: agreement k=%d exceeds %d features; skipped", plan.name, k, m)
                continue
            for a_i, a in enumerate(methods):
                for b in methods[a_i + 1:]:
                    pair = f"{a}{report.PAIR_SEP}{b}"
                    fa = [metrics.feature_agreement(x, y, k) for x, y in zip(shares[a], shares[b])]
                    ra = [metrics.rank_agreement(x, y, k) for x, y in zip(shares[a], shares[b])]
                    values[(plan.name, mk, pair, report.agreement_metric("feature", k))] = fa
                    values[(plan.name, mk, pair, report.agreement_metric("rank", k))] = ra
    return values, samples


def _evaluate_safe(out, cfg, plan):
    try:
        return evaluate_dataset(out, cfg, plan), None
    except Exception as exc:  # noqa: BLE001
        return None, f"{type(exc).__name__}: {exc}"


def evaluate_digest(cfg: ExperimentConfig, plans) -> str:
    return digest_of({"explain": [explain_digest(cfg, p, m) for p in plans for m in cfg.explain.methods],
                      "metrics": asdict(cfg.metrics)})


# ----------------------------------------------------------------------------
# orchestration

def _pmap(fn, arglists, jobs: int):
    if jobs > 1 and len(arglists) > 1:
        with ProcessPoolExecutor(min(jobs, len(arglists))) as ex:
            return list(ex.map(fn, *zip(*arglists)))
    return [fn(*a) for a in arglists]


def _check(manifest: RunManifest, records) -> None:
    manifest.records.extend(records)
    bad = [r for r in records if r.status == "failed"]
    if bad:
        manifest.save()
        raise StageError(bad[0].stage, bad[0].name, bad[0].error or "unknown error")


def run(cfg: ExperimentConfig, out=None, jobs: int = 1, until: str = "report") -> RunManifest:
    """Execute the pipeline up to and including ``until``."""
    from .. import __version__
    from .config import output_dir

    if until not in STAGES:
        raise ValueError(f"until must be one of {STAGES}")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    out = output_dir(cfg, out).resolve()
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(cfg.digest(), str(out), __version__)
    stop = STAGES.index(until)
    try:
        plans = plan_datasets(cfg)
    except StageError as exc:
        manifest.records.append(StageRecord(exc.stage, exc.name, "", status="failed", error=str(exc)))
        manifest.save()
        raise
    if not plans:
        raise StageError("dataset", "-", "no dataset selected")

    _check(manifest, _pmap(stage_dataset, [(out, cfg, p) for p in plans], jobs))
    if stop >= 1:
        inner = jobs if len(plans) == 1 else 1
        _check(manifest, _pmap(stage_model, [(out, cfg, p, inner) for p in plans], jobs))
    if stop >= 2:
        cells = [(out, cfg, p, m) for p in plans for m in cfg.explain.methods]
        _check(manifest, _pmap(stage_explain, cells, jobs))
    if stop >= 3:
        _check(manifest, [_stage_evaluate(out, cfg, plans, jobs)])
    if stop >= 4:
        _check(manifest, [_stage_report(out)])
    manifest.save()
    return manifest


def _stage_evaluate(out: Path, cfg: ExperimentConfig, plans, jobs: int) -> StageRecord:
    digest = evaluate_digest(cfg, plans)
    rdir = out / "reports"
    produced = [rdir / "metrics.tsv", rdir / "metrics.json", rdir / "shares.tsv"]

    def work():
        tsv = produced[0]
        if tsv.is_file() and all(p.is_file() for p in produced) \
                and report.from_columnar(tsv.read_text()).metadata.get("digest") == digest:
            return StageRecord("evaluate", "all", digest, [_rel(out, p) for p in produced], status="cached")
        results = _pmap(_evaluate_safe, [(out, cfg, p) for p in plans], jobs)
        values, samples = {}, {}
        for plan, (res, err) in zip(plans, results):
            if err is not None:
                raise StageError("evaluate", plan.name, err)
            values.update(res[0])
            samples.update(res[1])
        rep = metrics.aggregate(values)
        groups = {p.name: p.group for p in plans}
        rep.metadata.update({
            "digest": digest, "groups": groups,
            "group_order": list(dict.fromkeys(p.group for p in plans)),
            "compactness_threshold": cfg.metrics.compactness_threshold,
            "compactness_k": cfg.metrics.compactness_k,
            "compactness_masking": "background column means",
            "stability_neighbors": cfg.metrics.stability_neighbors,
            "ground_truth_mode": cfg.synthetic.ground_truth if cfg.synthetic else None,
            "methods": list(cfg.explain.methods), "model": cfg.model.kind,
        })
        report.save_report(rep, rdir)
        report.write_shares(produced[2], samples)
        return StageRecord("evaluate", "all", digest, [_rel(out, p) for p in produced])

    return _guard("evaluate", "all", digest, work)


def emit_all(out: Path) -> list[Path]:
    rdir = Path(out) / "reports"
    rep = report.load_report(rdir)
    written = report.emit_report(rep, "table4-9", rdir / "table.tsv")
    if report.agreement_matrices(rep):
        written += report.emit_report(rep, "figure-heatmap", rdir / "heatmaps")
    samples = report.read_shares(rdir / "shares.tsv")
    if samples:
        written += report.emit_report(rep, "figure-boxplot", rdir / "boxplots", samples)
    return written


def _stage_report(out: Path) -> StageRecord:
    def work():
        rep = report.load_report(out / "reports")
        files = emit_all(out)
        return StageRecord("report", "all", rep.metadata.get("digest", ""), [_rel(out, f) for f in files])

    return _guard("report", "all", "", work)


def validate_manifest(out) -> list[str]:
    """Problems found: missing artifacts or digest mismatches."""
    out = Path(out)
    m = artifacts.read_json(out / "manifest.json")
    problems = []
    for rec in m["stages"]:
        if rec["status"] == "failed":
            continue
        for a in rec["artifacts"]:
            path = out / a
            if not path.is_file():
                problems.append(f"missing {a}")
                continue
            found = None
            if rec["stage"] == "dataset" and a.endswith(".json"):
                found = _json_digest(path, "digest")
                if _json_digest(path, "csv_sha256") != _file_digest(path.with_suffix(".csv")):
                    problems.append(f"{a}: csv content does not match")
            elif rec["stage"] == "model":
                found = _json_digest(path, "meta", "digest")
            elif rec["stage"] == "explain":
                found = artifacts.read_header(path).get("digest")
            elif rec["stage"] == "evaluate" and a.endswith("metrics.tsv"):
                found = report.from_columnar(path.read_text()).metadata.get("digest")
            if found is not None and found != rec["digest"]:
                problems.append(f"{a}: digest {found} != {rec['digest']}")
    return problems
