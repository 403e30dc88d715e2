"""Domain types shared across the package.

Descriptor and pose sets are stored column-wise: a tuple of string ids and a
read-only float64 array with one row per id. Construction only checks shapes;
:func:`validate_map` checks the semantic invariants.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateId,
    IdMismatch,
    MapValidationError,
    NonFiniteValue,
)


def _frozen_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Descriptor:
    id: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, 1))


@dataclass(frozen=True)
class Pose:
    id: str
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen_array(self.coords, 1))


@dataclass(frozen=True, eq=False)
class DescriptorSet:
    """N descriptors of dimension D; ``values`` has shape (N, D)."""

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1 and values.size == 0:
            values = values.reshape(0, 0)
        object.__setattr__(self, "values", _frozen_array(values, 2))
        if len(self.ids) != self.values.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids but {self.values.shape[0]} descriptor rows")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[Descriptor]:
        for i, ident in enumerate(self.ids):
            yield Descriptor(ident, self.values[i])

    def __getitem__(self, index: int) -> Descriptor:
        return Descriptor(self.ids[index], self.values[index])

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def from_descriptors(cls, descriptors: list[Descriptor]) -> DescriptorSet:
        dims = {d.values.shape[0] for d in descriptors}
        if len(dims) > 1:
            raise DimensionMismatch([
                ("dimension_mismatch", d.id, f"D={d.values.shape[0]}")
                for d in sorted(descriptors, key=lambda d: d.id)])
        return cls(tuple(d.id for d in descriptors),
                   np.array([d.values for d in descriptors]).reshape(len(descriptors), -1))


@dataclass(frozen=True, eq=False)
class PoseSet:
    """N poses with 2 or 3 spatial coordinates (meters); ``coords`` is (N, 2|3)."""

    ids: tuple[str, ...]
    coords: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "coords", _frozen_array(self.coords, 2))
        if len(self.ids) != self.coords.shape[0]:
            raise ValueError(f"{len(self.ids)} ids but {self.coords.shape[0]} pose rows")

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[Pose]:
        for i, ident in enumerate(self.ids):
            yield Pose(ident, self.coords[i])

    def __getitem__(self, index: int) -> Pose:
        return Pose(self.ids[index], self.coords[index])

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {ident: self.coords[i] for i, ident in enumerate(self.ids)}


@dataclass(frozen=True, eq=False)
class VPRMap:
    """Reference descriptors joined with their poses, rows aligned by id."""

    descriptors: DescriptorSet
    poses: PoseSet

    @property
    def ids(self) -> tuple[str, ...]:
        return self.descriptors.ids

    def __len__(self) -> int:
        return len(self.descriptors)


@dataclass(frozen=True, eq=False)
class RankedMatches:
    """Top-K neighbors of one query, nearest first.

    Stored as parallel arrays; :attr:`neighbors` gives the
    ``(reference_id, distance, pose)`` view.
    """

    query_id: str
    ref_ids: tuple[str, ...]
    distances: np.ndarray
    poses: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ref_ids", tuple(self.ref_ids))
        object.__setattr__(self, "distances", _frozen_array(self.distances, 1))
        poses = np.asarray(self.poses, dtype=np.float64)
        if poses.ndim != 2:
            poses = poses.reshape(len(self.ref_ids), -1)
        object.__setattr__(self, "poses", _frozen_array(poses, 2))
        if not (len(self.ref_ids) == self.distances.shape[0] == self.poses.shape[0]):
            raise ValueError("ref_ids, distances and poses must have equal length")

    def __len__(self) -> int:
        return len(self.ref_ids)

    @property
    def k(self) -> int:
        return len(self.ref_ids)

    @property
    def neighbors(self) -> list[tuple[str, float, Pose]]:
        return [(rid, float(self.distances[i]), Pose(rid, self.poses[i]))
                for i, rid in enumerate(self.ref_ids)]

    @property
    def best(self) -> tuple[str, float, Pose]:
        return self.ref_ids[0], float(self.distances[0]), Pose(self.ref_ids[0], self.poses[0])

    def truncate(self, k: int) -> RankedMatches:
        return RankedMatches(self.query_id, self.ref_ids[:k], self.distances[:k], self.poses[:k])

    def __eq__(self, other) -> bool:
        if not isinstance(other, RankedMatches):
            return NotImplemented
        return (self.query_id == other.query_id and self.ref_ids == other.ref_ids
                and np.array_equal(self.distances, other.distances)
                and np.array_equal(self.poses, other.poses))


class MethodKind(str, enum.Enum):
    L2 = "L2"
    PA = "PA"
    SUE = "SUE"
    SUE_DC = "SUE_DC"
    EXTERNAL = "EXTERNAL"
    RANDOM = "RANDOM"


@dataclass(frozen=True)
class UncertaintyRecord:
    """One per-query score; higher means more uncertain.

    External confidence channels (e.g. geometric-verification inlier counts)
    keep the raw count in ``gv_confidence`` and store ``-count`` as ``score``.
    """

    query_id: str
    method: MethodKind
    score: float
    name: str | None = None
    gv_confidence: float | None = None

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError(f"non-finite score for query {self.query_id!r}")
        if self.gv_confidence is not None and self.gv_confidence < 0:
            raise ValueError(f"negative confidence for query {self.query_id!r}")

    @property
    def label(self) -> str:
        if self.method in (MethodKind.EXTERNAL, MethodKind.RANDOM):
            return f"EXTERNAL({self.name})"
        return self.method.value


@dataclass(frozen=True)
class GroundTruthLabel:
    query_id: str
    correct: bool
    query_pose: Pose
    matched_pose: Pose
    threshold: float = field(default=25.0)


_ISSUE_ORDER = (DuplicateId, IdMismatch, DimensionMismatch, NonFiniteValue)


def validate_map(descriptors: DescriptorSet, poses: PoseSet) -> VPRMap:
    """Join descriptors and poses into a map, or raise with every problem found.

    The exception type reflects the first issue class present, checked in the
    order duplicate ids, id mismatch, dimension, non-finite values; the
    ``issues`` attribute lists all of them sorted by id.
    """
    if len(descriptors) == 0 or len(poses) == 0:
        raise IdMismatch([("id_mismatch", "", "descriptor and pose sets must be nonempty")])

    issues: dict[type, list[tuple[str, str, str]]] = {cls: [] for cls in _ISSUE_ORDER}

    for source, ids in (("descriptors", descriptors.ids), ("poses", poses.ids)):
        seen: set[str] = set()
        dups: set[str] = set()
        for ident in ids:
            if ident in seen:
                dups.add(ident)
            seen.add(ident)
        issues[DuplicateId].extend(("duplicate_id", d, source) for d in dups)

    d_ids, p_ids = set(descriptors.ids), set(poses.ids)
    issues[IdMismatch].extend(("id_mismatch", i, "descriptor without pose") for i in d_ids - p_ids)
    issues[IdMismatch].extend(("id_mismatch", i, "pose without descriptor") for i in p_ids - d_ids)

    if descriptors.dim < 1:
        issues[DimensionMismatch].append(("dimension_mismatch", "", "descriptor dimension is 0"))
    if poses.dim not in (2, 3):
        issues[DimensionMismatch].append(
            ("dimension_mismatch", "", f"pose dimension {poses.dim} is not 2 or 3"))

    bad_desc = ~np.isfinite(descriptors.values).all(axis=1)
    issues[NonFiniteValue].extend(
        ("non_finite", descriptors.ids[i], "descriptor") for i in np.flatnonzero(bad_desc))
    bad_pose = ~np.isfinite(poses.coords).all(axis=1)
    issues[NonFiniteValue].extend(
        ("non_finite", poses.ids[i], "pose") for i in np.flatnonzero(bad_pose))

    found = [cls for cls in _ISSUE_ORDER if issues[cls]]
    if found:
        everything = sorted(
            (item for cls in _ISSUE_ORDER for item in issues[cls]),
            key=lambda t: (t[1], t[0], t[2]))
        raise found[0](everything)

    index = {ident: i for i, ident in enumerate(poses.ids)}
    order = [index[ident] for ident in descriptors.ids]
    aligned = PoseSet(descriptors.ids, poses.coords[order])
    return VPRMap(descriptors, aligned)


__all__ = [
    "Descriptor", "Pose", "DescriptorSet", "PoseSet", "VPRMap", "RankedMatches",
    "MethodKind", "UncertaintyRecord", "GroundTruthLabel", "validate_map",
    "MapValidationError",
]
