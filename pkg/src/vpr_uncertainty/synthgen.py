"""Seeded synthetic VPR worlds with controlled perceptual aliasing, plus
brute-force oracles used to cross-check the fast code paths.

Places sit on a square grid ``place_spacing_m`` apart. Every place belongs to
one aliasing group; all places in a group share a descriptor prototype drawn
on the unit sphere. A reference or query descriptor is::

    prototype[group] + place_signature_scale * signature[place] + N(0, sigma^2 I)

so with ``place_signature_scale = 0`` aliased places are indistinguishable and
with a larger signature they are only partially confusable. Poses are uniform
in a disc of radius ``pose_spread_m`` around the place center.
"""

from __future__ import annotations

import enum
import json
import math
from fractions import Fraction
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DescriptorSet, PoseSet, VPRMap, validate_map
from .errors import ConfigError, InvalidPartition, NoPositives, ZeroWeightSum
from .evaluation import PRCurve
from .ingest import save_descriptors, save_poses


class QuerySpatialMode(str, enum.Enum):
    MATCH_REFERENCE_DENSITY = "match_reference_density"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class WorldConfig:
    seed: int
    n_places: int
    refs_per_place: tuple[int, ...] | int = 50
    aliasing_groups: tuple[tuple[int, ...], ...] | None = None
    descriptor_dim: int = 64
    descriptor_noise_sigma: float = 0.02
    pose_spread_m: tuple[float, ...] | float = 10.0
    query_count: int = 200
    query_spatial_mode: QuerySpatialMode = QuerySpatialMode.MATCH_REFERENCE_DENSITY
    place_spacing_m: float = 100.0
    place_signature_scale: float = 0.0
    min_prototype_angle_deg: float = 60.0
    pose_dim: int = 2

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        if self.n_places < 1:
            raise ConfigError(f"n_places must be positive, got {self.n_places}")
        if isinstance(self.refs_per_place, int):
            set_("refs_per_place", (self.refs_per_place,) * self.n_places)
        else:
            set_("refs_per_place", tuple(int(v) for v in self.refs_per_place))
        if isinstance(self.pose_spread_m, (int, float)):
            set_("pose_spread_m", (float(self.pose_spread_m),) * self.n_places)
        else:
            set_("pose_spread_m", tuple(float(v) for v in self.pose_spread_m))
        if self.aliasing_groups is None:
            set_("aliasing_groups", tuple((p,) for p in range(self.n_places)))
        else:
            set_("aliasing_groups", tuple(tuple(int(p) for p in g) for g in self.aliasing_groups))
        set_("query_spatial_mode", QuerySpatialMode(self.query_spatial_mode))

        if len(self.refs_per_place) != self.n_places:
            raise ConfigError(
                f"refs_per_place has {len(self.refs_per_place)} entries for {self.n_places} places")
        if min(self.refs_per_place) < 1:
            raise ConfigError("every place needs at least one reference")
        if len(self.pose_spread_m) != self.n_places or min(self.pose_spread_m) <= 0:
            raise ConfigError("pose_spread_m must be positive for every place")
        if self.descriptor_dim < 1 or self.descriptor_noise_sigma < 0:
            raise ConfigError("descriptor_dim must be >= 1 and noise sigma >= 0")
        if self.query_count < 1:
            raise ConfigError("query_count must be positive")
        if self.pose_dim not in (2, 3):
            raise ConfigError("pose_dim must be 2 or 3")
        self._check_partition()

    def _check_partition(self) -> None:
        count = [0] * self.n_places
        for group in self.aliasing_groups:
            if not group:
                raise InvalidPartition("aliasing group is empty")
            for p in group:
                if not 0 <= p < self.n_places:
                    raise InvalidPartition(f"place {p} does not exist (n_places={self.n_places})",
                                           [p])
                count[p] += 1
        repeated = [p for p, c in enumerate(count) if c > 1]
        if repeated:
            raise InvalidPartition(f"place {repeated[0]} appears in more than one aliasing group",
                                   repeated)
        missing = [p for p, c in enumerate(count) if c == 0]
        if missing:
            raise InvalidPartition(f"place {missing[0]} is not in any aliasing group", missing)

    @property
    def group_of(self) -> list[int]:
        out = [0] * self.n_places
        for g, group in enumerate(self.aliasing_groups):
            for p in group:
                out[p] = g
        return out

    def to_json(self) -> str:
        data = asdict(self)
        data["query_spatial_mode"] = self.query_spatial_mode.value
        return json.dumps(data, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> WorldConfig:
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown world config keys: {unknown}")
        if "seed" not in data or "n_places" not in data:
            raise ConfigError("world config needs 'seed' and 'n_places'")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True, eq=False)
class World:
    config: WorldConfig
    map: VPRMap
    queries: DescriptorSet
    query_poses: PoseSet
    ref_places: np.ndarray = field(repr=False)
    query_places: np.ndarray = field(repr=False)
    centers: np.ndarray = field(repr=False)


def place_centers(n_places: int, spacing: float, dim: int = 2) -> np.ndarray:
    cols = math.ceil(math.sqrt(n_places))
    idx = np.arange(n_places)
    centers = np.zeros((n_places, dim))
    centers[:, 0] = (idx % cols) * spacing
    centers[:, 1] = (idx // cols) * spacing
    return centers


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    while True:
        v = rng.standard_normal(dim)
        n = np.linalg.norm(v)
        if n > 0:
            return v / n


def _prototypes(rng: np.random.Generator, n: int, dim: int, min_angle_deg: float) -> np.ndarray:
    max_cos = math.cos(math.radians(min_angle_deg))
    protos: list[np.ndarray] = []
    attempts = 0
    while len(protos) < n:
        attempts += 1
        if attempts > 10000 * n:
            raise ConfigError(
                f"cannot place {n} prototypes {min_angle_deg} degrees apart in D={dim}")
        v = _unit(rng, dim)
        if all(float(v @ p) <= max_cos for p in protos):
            protos.append(v)
    return np.array(protos).reshape(n, dim)


def _disc(rng: np.random.Generator, center: np.ndarray, radius: float, n: int) -> np.ndarray:
    r = radius * np.sqrt(rng.random(n))
    theta = 2.0 * np.pi * rng.random(n)
    out = np.repeat(center[None, :], n, axis=0)
    out[:, 0] += r * np.cos(theta)
    out[:, 1] += r * np.sin(theta)
    return out


def generate_world(config: WorldConfig) -> World:
    """Build a reference map and query set; the seed fully determines the output."""
    rng = np.random.default_rng(config.seed)
    d = config.descriptor_dim
    group_of = np.array(config.group_of)
    centers = place_centers(config.n_places, config.place_spacing_m, config.pose_dim)
    protos = _prototypes(rng, len(config.aliasing_groups), d, config.min_prototype_angle_deg)
    signatures = np.array([_unit(rng, d) for _ in range(config.n_places)]).reshape(-1, d)
    base = protos[group_of] + config.place_signature_scale * signatures

    def sample(places: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        poses = np.empty((places.size, config.pose_dim))
        for p in np.unique(places):
            rows = np.flatnonzero(places == p)
            poses[rows] = _disc(rng, centers[p], config.pose_spread_m[p], rows.size)
        desc = base[places] + config.descriptor_noise_sigma * rng.standard_normal((places.size, d))
        return poses, desc

    ref_places = np.repeat(np.arange(config.n_places), config.refs_per_place)
    ref_poses, ref_desc = sample(ref_places)
    ref_ids = tuple(f"r{p:04d}_{j:05d}" for p, n in enumerate(config.refs_per_place)
                    for j in range(n))

    if config.query_spatial_mode is QuerySpatialMode.UNIFORM:
        mass = np.square(np.array(config.pose_spread_m))
    else:
        mass = np.array(config.refs_per_place, dtype=np.float64)
    query_places = rng.choice(config.n_places, size=config.query_count, p=mass / mass.sum())
    q_poses, q_desc = sample(query_places)
    q_ids = tuple(f"q{i:06d}" for i in range(config.query_count))

    vpr_map = validate_map(DescriptorSet(ref_ids, ref_desc), PoseSet(ref_ids, ref_poses))
    return World(config, vpr_map, DescriptorSet(q_ids, q_desc), PoseSet(q_ids, q_poses),
                 ref_places, query_places, centers)


WORLD_FILES = ("ref_descriptors.bin", "ref_poses.csv", "query_descriptors.bin", "query_poses.csv")


def write_world(world: World, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / name for name in WORLD_FILES]
    save_descriptors(paths[0], world.map.descriptors, fmt="binary")
    save_poses(paths[1], world.map.poses)
    save_descriptors(paths[2], world.queries, fmt="binary")
    save_poses(paths[3], world.query_poses)
    return paths


def synthetic_gv_confidence(correct: Sequence[bool], seed: int, mean_correct: float = 60.0,
                            mean_incorrect: float = 20.0, sigma: float = 15.0) -> np.ndarray:
    """Inlier-count-like confidences correlated with match correctness.

    Counts are Gaussian around a per-class mean, rounded and clipped at 0.
    """
    rng = np.random.default_rng(seed)
    y = np.asarray(correct, dtype=bool)
    mu = np.where(y, mean_correct, mean_incorrect)
    return np.maximum(0.0, np.round(mu + sigma * rng.standard_normal(y.size)))


# ---------------------------------------------------------------------------
# Oracles. Deliberately naive: plain loops, no shared code with the fast paths.
# ---------------------------------------------------------------------------

def oracle_weighted_moments(poses, weights) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and population covariance by explicit loops in exact rationals."""
    pts = [[Fraction(float(v)) for v in p] for p in poses]
    ws = [Fraction(float(w)) for w in weights]
    if any(w < 0 for w in ws):
        raise ValueError("weights must be nonnegative")
    total = sum(ws, Fraction(0))
    if not total > 0:
        raise ZeroWeightSum("weights sum to zero")
    dim = len(pts[0])
    mean = [sum((w * p[a] for w, p in zip(ws, pts)), Fraction(0)) / total for a in range(dim)]
    cov = [[Fraction(0)] * dim for _ in range(dim)]
    for a in range(dim):
        for b in range(dim):
            cov[a][b] = sum((w * (p[a] - mean[a]) * (p[b] - mean[b]) for w, p in zip(ws, pts)),
                            Fraction(0)) / total
    return (np.array([float(m) for m in mean]),
            np.array([[float(c) for c in row] for row in cov]))


def oracle_knn(ref_ids: Sequence[str], ref_values, query, k: int) -> list[tuple[str, float]]:
    """Every distance computed with math.dist, then one full sort by (distance, id)."""
    q = [float(v) for v in query]
    scored = [(math.dist([float(v) for v in row], q), rid) for rid, row in zip(ref_ids, ref_values)]
    scored.sort()
    return [(rid, dist) for dist, rid in scored[:k]]


def oracle_kth_pose_distance(coords, k: int) -> np.ndarray:
    pts = [list(map(float, p)) for p in coords]
    out = []
    for i, p in enumerate(pts):
        dists = sorted(math.dist(p, other) for j, other in enumerate(pts) if j != i)
        out.append(dists[k - 1])
    return np.array(out)


def oracle_pr(scores, labels) -> PRCurve:
    """Recompute precision and recall from scratch at every distinct threshold."""
    s = [float(v) for v in scores]
    y = [bool(v) for v in labels]
    total = sum(y)
    if total == 0:
        raise NoPositives("no positives")
    thresholds, precision, recall = [], [], []
    block_precision = {}
    for t in sorted(set(s)):
        accepted = [lab for sc, lab in zip(s, y) if sc <= t]
        tp = sum(accepted)
        thresholds.append(t)
        precision.append(tp / len(accepted))
        recall.append(tp / total)
        block_precision[t] = tp / len(accepted)
    auc = math.fsum(block_precision[sc] for sc, lab in zip(s, y) if lab) / total
    return PRCurve(np.array(thresholds), np.array(precision), np.array(recall), auc)
