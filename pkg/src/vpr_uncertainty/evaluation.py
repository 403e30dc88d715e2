"""Ground-truth labeling, precision-recall curves and method comparison.

Queries are accepted in order of increasing uncertainty. Tied scores form one
block and are accepted together, so the curve has one point per distinct
score. The area is average precision: each correctly matched query
contributes the precision of its block, divided by the number of correctly
matched queries. Contributions are summed with :func:`math.fsum`, which
makes the result independent of summation order.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import GroundTruthLabel, Pose, PoseSet, RankedMatches, UncertaintyRecord
from .errors import MissingQueryPose, NoPositives, NonFiniteScore, QueryCoverageMismatch

DEFAULT_THRESHOLD_M = 25.0


@dataclass(frozen=True, eq=False)
class PRCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    auc: float

    def __len__(self) -> int:
        return self.thresholds.shape[0]

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.precision.tolist(), self.recall.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PRCurve):
            return NotImplemented
        return (np.array_equal(self.thresholds, other.thresholds)
                and np.array_equal(self.precision, other.precision)
                and np.array_equal(self.recall, other.recall)
                and self.auc == other.auc)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["threshold", "precision", "recall"])
        for t, p, r in self.points:
            writer.writerow([repr(t), repr(p), repr(r)])
        return buf.getvalue()


def label_retrievals(query_poses: PoseSet, best_matches: Sequence[RankedMatches],
                     threshold_m: float = DEFAULT_THRESHOLD_M) -> list[GroundTruthLabel]:
    """A match is correct iff its pose lies within ``threshold_m`` of the query (inclusive)."""
    if not threshold_m > 0:
        raise ValueError(f"threshold must be positive, got {threshold_m}")
    truth = query_poses.as_dict()
    labels = []
    for m in best_matches:
        if m.query_id not in truth:
            raise MissingQueryPose(f"no ground-truth pose for query {m.query_id!r}")
        q = truth[m.query_id]
        matched = m.poses[0]
        if q.shape != matched.shape:
            raise MissingQueryPose(
                f"query {m.query_id!r} pose has {q.shape[0]} coordinates, map has {matched.shape[0]}")
        dist = math.dist(q.tolist(), matched.tolist())
        labels.append(GroundTruthLabel(m.query_id, dist <= threshold_m, Pose(m.query_id, q),
                                       Pose(m.ref_ids[0], matched), threshold_m))
    return labels


def _as_arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores but {y.size} labels")
    if not np.all(np.isfinite(s)):
        raise NonFiniteScore("scores must be finite")
    if not y.any():
        raise NoPositives("no correctly matched queries; precision-recall is undefined")
    return s, y


def pr_curve(scores, labels) -> PRCurve:
    """Precision-recall sweep over per-query uncertainty scores (lower = accepted first)."""
    s, y = _as_arrays(scores, labels)
    order = np.argsort(s, kind="stable")
    s, y = s[order], y[order]
    # last index of each block of tied scores
    ends = np.flatnonzero(np.append(s[1:] != s[:-1], True))
    tp_cum = np.cumsum(y)[ends]
    accepted = ends + 1
    total = int(tp_cum[-1])
    precision = tp_cum / accepted
    recall = tp_cum / total
    tp_block = np.diff(tp_cum, prepend=0)
    auc = math.fsum(np.repeat(precision, tp_block).tolist()) / total
    return PRCurve(s[ends], precision, recall, auc)


def auc_pr(curve: PRCurve) -> float:
    return curve.auc


def _score_table(records) -> dict[str, float]:
    if isinstance(records, Mapping):
        return {str(k): float(v) for k, v in records.items()}
    table = {}
    for r in records:
        if isinstance(r, UncertaintyRecord):
            table[r.query_id] = r.score
        else:
            qid, score = r
            table[qid] = float(score)
    return table


def compare_methods(records: Mapping[str, object], labels) -> list[tuple[str, float]]:
    """AUC-PR per method, best first, ties broken by method name.

    ``records`` maps a method name to its UncertaintyRecord list (or a
    ``query_id -> score`` mapping). ``labels`` is a GroundTruthLabel list or a
    ``query_id -> bool`` mapping; every method must cover exactly its queries.
    """
    if isinstance(labels, Mapping):
        truth = {str(k): bool(v) for k, v in labels.items()}
    else:
        truth = {lab.query_id: lab.correct for lab in labels}
    qids = sorted(truth)
    y = [truth[q] for q in qids]
    rows = []
    for name, recs in records.items():
        table = _score_table(recs)
        if set(table) != set(truth):
            missing = sorted(set(truth) - set(table))
            extra = sorted(set(table) - set(truth))
            raise QueryCoverageMismatch(
                f"method {name!r}: missing {missing[:5]}{'...' if len(missing) > 5 else ''}, "
                f"unexpected {extra[:5]}{'...' if len(extra) > 5 else ''}")
        rows.append((name, auc_pr(pr_curve([table[q] for q in qids], y))))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows


def report_csv(table: Sequence[tuple[str, float]]) -> str:
    lines = ["method,auc_pr"] + [f"{name},{auc!r}" for name, auc in table]
    return "\n".join(lines) + "\n"


def report_json(table: Sequence[tuple[str, float]]) -> str:
    return json.dumps([{"method": name, "auc_pr": auc} for name, auc in table], indent=2) + "\n"
