"""Manifest-driven runs: retrieve, score, label, evaluate, fuse and sweep.

A manifest is a JSON object::

    {
      "reference_descriptors": "ref_descriptors.bin",
      "reference_poses": "ref_poses.csv",
      "query_descriptors": "query_descriptors.bin",
      "query_poses": "query_poses.csv",
      "threshold_m": 25.0,
      "l2_normalize": false,
      "seed": 0,
      "output_dir": "out",
      "methods": [
        {"name": "l2", "type": "L2"},
        {"name": "pa", "type": "PA"},
        {"name": "sue", "type": "SUE", "alpha": 350, "k": 10, "weighting": "exponential"},
        {"name": "sue_dc", "type": "SUE_DC", "alpha": 350, "k": 10, "density_k": 1},
        {"name": "random", "type": "RANDOM"},
        {"name": "gv", "type": "EXTERNAL", "path": "gv.csv", "polarity": "confidence"}
      ],
      "fusion": [{"uncertainty": "sue", "confidence": "gv"}],
      "svm": {"learning_rate": 0.1, "l1_strength": 0.0001, "max_iters": 1000}
    }

Relative paths resolve against the manifest's directory.
"""

from __future__ import annotations

import json
import statistics
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import MethodKind, RankedMatches, UncertaintyRecord, validate_map
from .errors import ConfigError, DataError, QueryCoverageMismatch
from .evaluation import (DEFAULT_THRESHOLD_M, compare_methods, label_retrievals, pr_curve,
                         report_csv, report_json)
from .fusion import (SVMConfig, classification_accuracy, fit_scaler, save_model,
                     svm_decide_batch, train_linear_svm)
from .ingest import Polarity, load_descriptors, load_external_scores, load_poses
from .retrieval import batch_retrieve, build_index
from .uncertainty import (DEFAULT_ALPHA, DEFAULT_K, SueConfig, Weighting, pose_density,
                          score_l2, score_pa, sue_score, sue_score_density_compensated)

METHOD_TYPES = ("L2", "PA", "SUE", "SUE_DC", "EXTERNAL", "RANDOM")


@dataclass(frozen=True)
class MethodSpec:
    name: str
    type: str
    alpha: float = DEFAULT_ALPHA
    k: int = DEFAULT_K
    weighting: str = Weighting.EXPONENTIAL.value
    density_k: int = 1
    path: str | None = None
    polarity: str = Polarity.UNCERTAINTY.value

    @property
    def sue_config(self) -> SueConfig:
        return SueConfig(self.alpha, self.k, Weighting(self.weighting))

    @property
    def neighbors_needed(self) -> int:
        return {"L2": 1, "PA": 2, "SUE": self.k, "SUE_DC": self.k}.get(self.type, 1)


@dataclass(frozen=True)
class RunManifest:
    reference_descriptors: Path
    reference_poses: Path
    query_descriptors: Path
    query_poses: Path
    methods: tuple[MethodSpec, ...]
    output_dir: Path
    threshold_m: float = DEFAULT_THRESHOLD_M
    l2_normalize: bool = False
    seed: int = 0
    fusion: tuple[tuple[str, str], ...] = ()
    svm: SVMConfig = field(default_factory=SVMConfig)

    @classmethod
    def load(cls, path, output_dir=None) -> RunManifest:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(data, path.parent, output_dir)

    @classmethod
    def from_dict(cls, data: dict, base_dir=".", output_dir=None) -> RunManifest:
        base = Path(base_dir)
        known = {"reference_descriptors", "reference_poses", "query_descriptors", "query_poses",
                 "methods", "output_dir", "threshold_m", "l2_normalize", "seed", "fusion", "svm"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown manifest keys: {unknown}")
        missing = [k for k in ("reference_descriptors", "reference_poses",
                               "query_descriptors", "query_poses") if k not in data]
        if missing:
            raise ConfigError(f"manifest is missing {missing}")

        def resolve(p) -> Path:
            p = Path(p)
            return p if p.is_absolute() else base / p

        methods = []
        for raw in data.get("methods") or [{"name": "sue", "type": "SUE"}]:
            raw = dict(raw)
            if "name" not in raw or "type" not in raw:
                raise ConfigError(f"method entry needs 'name' and 'type': {raw}")
            raw["type"] = str(raw["type"]).upper()
            if raw["type"] not in METHOD_TYPES:
                raise ConfigError(f"unknown method type {raw['type']!r} for {raw['name']!r}")
            if raw["type"] == "EXTERNAL":
                if "path" not in raw:
                    raise ConfigError(f"external method {raw['name']!r} needs a 'path'")
                raw["path"] = str(resolve(raw["path"]))
            try:
                spec = MethodSpec(**raw)
                spec.sue_config
                Polarity(spec.polarity)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"method {raw['name']!r}: {exc}") from None
            methods.append(spec)
        names = [m.name for m in methods]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate method names in {names}")

        fusion = []
        for entry in data.get("fusion") or []:
            pair = (entry.get("uncertainty"), entry.get("confidence"))
            for n in pair:
                if n not in names:
                    raise ConfigError(f"fusion refers to unknown method {n!r}")
            fusion.append(pair)
        try:
            svm = SVMConfig(**(data.get("svm") or {}))
        except TypeError as exc:
            raise ConfigError(f"svm: {exc}") from None
        threshold = float(data.get("threshold_m", DEFAULT_THRESHOLD_M))
        if not threshold > 0:
            raise ConfigError("threshold_m must be positive")
        out = output_dir if output_dir is not None else resolve(data.get("output_dir", "out"))
        return cls(resolve(data["reference_descriptors"]), resolve(data["reference_poses"]),
                   resolve(data["query_descriptors"]), resolve(data["query_poses"]),
                   tuple(methods), Path(out), threshold, bool(data.get("l2_normalize", False)),
                   int(data.get("seed", 0)), tuple(fusion), svm)

    def to_json(self, include_output_dir: bool = True) -> str:
        data = {
            "reference_descriptors": str(self.reference_descriptors),
            "reference_poses": str(self.reference_poses),
            "query_descriptors": str(self.query_descriptors),
            "query_poses": str(self.query_poses),
            "threshold_m": self.threshold_m,
            "l2_normalize": self.l2_normalize,
            "seed": self.seed,
            "output_dir": str(self.output_dir),
            "methods": [asdict(m) for m in self.methods],
            "fusion": [{"uncertainty": u, "confidence": c} for u, c in self.fusion],
            "svm": asdict(self.svm),
        }
        if not include_output_dir:
            del data["output_dir"]
        return json.dumps(data, indent=2, sort_keys=True) + "\n"


@dataclass
class Evaluation:
    manifest: RunManifest
    matches: list[RankedMatches]
    correct: dict[str, bool]
    records: dict[str, list[UncertaintyRecord]]
    timing_ms: dict[str, float]

    @property
    def query_ids(self) -> list[str]:
        return [m.query_id for m in self.matches]

    def scores(self, method: str) -> np.ndarray:
        return np.array([r.score for r in self.records[method]])

    def feature(self, method: str) -> np.ndarray:
        """Raw classifier feature: the confidence for confidence channels, else the score."""
        return np.array([r.gv_confidence if r.gv_confidence is not None else r.score
                         for r in self.records[method]])

    def labels(self) -> np.ndarray:
        return np.array([self.correct[q] for q in self.query_ids])


def _median_ms(samples: list[float]) -> float:
    return statistics.median(samples) * 1e3 if samples else 0.0


def retrieve(manifest: RunManifest, k: int):
    refs = load_descriptors(manifest.reference_descriptors)
    ref_poses = load_poses(manifest.reference_poses)
    queries = load_descriptors(manifest.query_descriptors)
    query_poses = load_poses(manifest.query_poses)
    vpr_map = validate_map(refs, ref_poses)
    index = build_index(vpr_map, manifest.l2_normalize)
    k = min(k, len(vpr_map))
    matches = batch_retrieve(index, queries, k)
    return vpr_map, query_poses, matches


def _align_external(spec: MethodSpec, query_ids: list[str]) -> list[UncertaintyRecord]:
    recs = {r.query_id: r for r in load_external_scores(spec.path, spec.name, spec.polarity)}
    missing = [q for q in query_ids if q not in recs]
    if missing or len(recs) != len(query_ids):
        raise QueryCoverageMismatch(
            f"external channel {spec.name!r} covers {len(recs)} queries, run has "
            f"{len(query_ids)}; first missing: {missing[:5]}")
    return [recs[q] for q in query_ids]


def evaluate(manifest: RunManifest) -> Evaluation:
    k_max = max([m.neighbors_needed for m in manifest.methods] + [1])
    vpr_map, query_poses, matches = retrieve(manifest, k_max)
    labels = label_retrievals(query_poses, matches, manifest.threshold_m)
    correct = {lab.query_id: lab.correct for lab in labels}
    qids = [m.query_id for m in matches]

    records: dict[str, list[UncertaintyRecord]] = {}
    timing: dict[str, float] = {}
    density_cache = {}
    for spec in manifest.methods:
        samples: list[float] = []
        if spec.type == "EXTERNAL":
            records[spec.name] = _align_external(spec, qids)
            continue
        if spec.type == "RANDOM":
            rng = np.random.default_rng(manifest.seed)
            records[spec.name] = [UncertaintyRecord(q, MethodKind.RANDOM, float(v), spec.name)
                                  for q, v in zip(qids, rng.random(len(qids)))]
            continue
        if spec.type == "SUE_DC" and spec.density_k not in density_cache:
            density_cache[spec.density_k] = pose_density(vpr_map.poses, spec.density_k)
        cfg = spec.sue_config
        out = []
        for m in matches:
            t0 = time.perf_counter()
            if spec.type == "L2":
                s = score_l2(m)
            elif spec.type == "PA":
                s = score_pa(m)
            elif spec.type == "SUE":
                s = sue_score(m, cfg)[1]
            else:
                s = sue_score_density_compensated(m, density_cache[spec.density_k], cfg)[1]
            samples.append(time.perf_counter() - t0)
            out.append(UncertaintyRecord(m.query_id, MethodKind(spec.type), s, spec.name))
        records[spec.name] = out
        timing[spec.name] = _median_ms(samples)
    return Evaluation(manifest, matches, correct, records, timing)


def _fuse_columns(ev: Evaluation, names: tuple[str, ...]) -> np.ndarray:
    return np.column_stack([ev.feature(n) for n in names])


def fusion_accuracy(train: Evaluation, test: Evaluation, names: tuple[str, ...],
                    config: SVMConfig):
    """Fit scaler + SVM on ``train`` features ``names`` and score accuracy on ``test``."""
    scaler = fit_scaler(_fuse_columns(train, names))
    y_train = np.where(train.labels(), 1.0, -1.0)
    model = train_linear_svm(scaler.transform(_fuse_columns(train, names)), y_train, config)
    decisions = svm_decide_batch(model, scaler.transform(_fuse_columns(test, names)))
    return classification_accuracy(decisions, test.labels()), model, scaler, decisions


def _fusion_rows(train: Evaluation, test: Evaluation, config: SVMConfig):
    rows, models = [], {}
    singles: list[str] = []
    for pair in train.manifest.fusion:
        for n in pair:
            if n not in singles:
                singles.append(n)
    for combo in [(n,) for n in singles] + list(train.manifest.fusion):
        acc, model, scaler, decisions = fusion_accuracy(train, test, combo, config)
        label = "+".join(combo)
        rows.append((label, acc))
        models[label] = (model, scaler, combo, decisions)
    return rows, models


def _write(path: Path, text: str) -> None:
    path.write_bytes(text.encode("utf-8"))


def _scores_csv(ev: Evaluation) -> str:
    names = [m.name for m in ev.manifest.methods]
    lines = [",".join(["query_id", "best_match_id", "correct"] + names)]
    for i, m in enumerate(ev.matches):
        vals = [repr(float(ev.records[n][i].score)) for n in names]
        lines.append(",".join([m.query_id, m.ref_ids[0], str(int(ev.correct[m.query_id]))] + vals))
    return "\n".join(lines) + "\n"


def _accuracy_csv(rows) -> str:
    return "\n".join(["combination,accuracy"] + [f"{n},{a!r}" for n, a in rows]) + "\n"


def write_evaluation(ev: Evaluation, out_dir=None) -> dict:
    """Write every report for one evaluated manifest; returns the summary dict."""
    out = Path(out_dir) if out_dir is not None else ev.manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    labels = ev.labels()
    table = compare_methods({n: ev.records[n] for n in ev.records}, dict(zip(ev.query_ids, labels)))
    files: dict[str, str] = {
        "manifest.json": ev.manifest.to_json(include_output_dir=False),
        "auc.csv": report_csv(table),
        "auc.json": report_json(table),
        "scores.csv": _scores_csv(ev),
    }
    for name in ev.records:
        files[f"pr_{name}.csv"] = pr_curve(ev.scores(name), labels).to_csv()
    summary = {
        "n_queries": len(ev.query_ids),
        "n_correct": int(labels.sum()),
        "auc_pr": {n: a for n, a in table},
    }
    if ev.manifest.fusion:
        rows, _ = _fusion_rows(ev, ev, ev.manifest.svm)
        files["fusion.csv"] = _accuracy_csv(rows)
        summary["fusion_accuracy"] = {n: a for n, a in rows}
    files["summary.json"] = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    for name, text in sorted(files.items()):
        _write(out / name, text)
    _write(out / "timing.json", json.dumps({"median_ms_per_query": ev.timing_ms},
                                           indent=2, sort_keys=True) + "\n")
    return summary


def run_fuse(train_manifest: RunManifest, test_manifest: RunManifest, out_dir) -> dict:
    if not train_manifest.fusion:
        raise ConfigError("training manifest defines no 'fusion' combinations")
    train = evaluate(train_manifest)
    test = evaluate(test_manifest)
    for pair in train_manifest.fusion:
        for n in pair:
            if n not in test.records:
                raise ConfigError(f"test manifest has no method {n!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, models = _fusion_rows(train, test, train_manifest.svm)
    _write(out / "accuracy.csv", _accuracy_csv(rows))
    labels = test.labels()
    for label, (model, scaler, combo, decisions) in models.items():
        save_model(out / f"model_{label}.json", model, scaler, list(combo))
        lines = ["query_id,decision,correct"] + [
            f"{q},{d},{int(c)}" for q, d, c in zip(test.query_ids, decisions, labels)]
        _write(out / f"decisions_{label}.csv", "\n".join(lines) + "\n")
    return {n: a for n, a in rows}


def run_sweep(manifest: RunManifest, ks=(1, 2, 5, 10, 20), alphas=(0, 50, 200, 350, 500),
              out_dir=None) -> dict:
    """AUC-PR of SUE over a K grid (alpha fixed) and an alpha grid (K fixed)."""
    base = next((m for m in manifest.methods if m.type == "SUE"), MethodSpec("sue", "SUE"))
    vpr_map, query_poses, matches = retrieve(manifest, max(max(ks), base.k))
    labels = [lab.correct for lab in label_retrievals(query_poses, matches, manifest.threshold_m)]
    if not any(labels):
        raise DataError("no correctly matched queries; cannot sweep")

    def auc(alpha, k):
        cfg = SueConfig(alpha, k, Weighting.EXPONENTIAL)
        return pr_curve([sue_score(m, cfg)[1] for m in matches], labels).auc

    k_rows = [(k, base.alpha, auc(base.alpha, k)) for k in ks if k <= len(vpr_map)]
    a_rows = [(base.k, a, auc(a, base.k)) for a in alphas]
    by_k = {k: v for k, _, v in k_rows}
    check = None
    if 1 in by_k and 10 in by_k:
        check = {"auc_k1": by_k[1], "auc_k10": by_k[10], "passed": by_k[10] >= by_k[1]}
    result = {"k_sweep": k_rows, "alpha_sweep": a_rows, "plateau_check": check}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        lines = ["sweep,k,alpha,auc_pr"]
        lines += [f"k,{k},{a!r},{v!r}" for k, a, v in k_rows]
        lines += [f"alpha,{k},{a!r},{v!r}" for k, a, v in a_rows]
        _write(out / "sweep.csv", "\n".join(lines) + "\n")
        _write(out / "sweep.json", json.dumps(
            {"k_sweep": [{"k": k, "alpha": a, "auc_pr": v} for k, a, v in k_rows],
             "alpha_sweep": [{"k": k, "alpha": a, "auc_pr": v} for k, a, v in a_rows],
             "plateau_check": check}, indent=2, sort_keys=True) + "\n")
    return result
