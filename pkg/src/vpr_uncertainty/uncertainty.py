"""Retrieval-based uncertainty scores and the spatial-variance estimator.

SUE fits a weighted Gaussian to the poses of the K retrieved references and
uses the trace of its covariance as the uncertainty. Reference weights decay
exponentially with descriptor distance: ``w_i = exp(-alpha * d_i)``.
Weights are always formed in log space and shifted by their maximum before
exponentiating, which leaves the normalized weights unchanged and avoids
underflow for large ``alpha * d``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .core import PoseSet, RankedMatches
from .errors import EmptyMatches, KTooLarge, MissingDensity, NeedTwoNeighbors, ZeroWeightSum

DEFAULT_ALPHA = 350.0
DEFAULT_K = 10


class Weighting(str, enum.Enum):
    EXPONENTIAL = "exponential"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class SueConfig:
    alpha: float = DEFAULT_ALPHA
    k_neighbors: int = DEFAULT_K
    weighting: Weighting = Weighting.EXPONENTIAL

    def __post_init__(self):
        object.__setattr__(self, "weighting", Weighting(self.weighting))
        if not (self.alpha >= 0 and np.isfinite(self.alpha)):
            raise ValueError(f"alpha must be finite and nonnegative, got {self.alpha}")
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be positive, got {self.k_neighbors}")

    @property
    def effective_alpha(self) -> float:
        return 0.0 if self.weighting is Weighting.UNIFORM else float(self.alpha)


@dataclass(frozen=True, eq=False)
class WeightedPoseSummary:
    weights: np.ndarray
    mean: np.ndarray
    covariance: np.ndarray
    trace: float


@dataclass(frozen=True, eq=False)
class PoseDensity:
    """k-th nearest-neighbor distance in pose space for each reference."""

    ids: tuple[str, ...]
    z: np.ndarray
    k: int

    def __post_init__(self):
        z = np.array(self.z, dtype=np.float64)
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "_lookup", {ident: i for i, ident in enumerate(self.ids)})

    def lookup(self, ref_ids) -> np.ndarray:
        out = np.empty(len(ref_ids))
        for j, rid in enumerate(ref_ids):
            i = self._lookup.get(rid)
            if i is None:
                raise MissingDensity(rid)
            out[j] = self.z[i]
        return out


def score_l2(matches: RankedMatches) -> float:
    """Distance to the best match."""
    if len(matches) == 0:
        raise EmptyMatches(f"no neighbors for query {matches.query_id!r}")
    return float(matches.distances[0])


def score_pa(matches: RankedMatches) -> float:
    """Ratio of the first to the second neighbor distance.

    Two exact duplicate matches (``d2 == 0``) count as maximal ambiguity, 1.0.
    """
    if len(matches) < 2:
        raise NeedTwoNeighbors(
            f"PA score needs two neighbors, query {matches.query_id!r} has {len(matches)}")
    d1, d2 = float(matches.distances[0]), float(matches.distances[1])
    if d2 == 0.0:
        return 1.0
    return d1 / d2


def _normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    top = log_w.max()
    if top == -np.inf:
        raise ZeroWeightSum("every neighbor has zero weight")
    w = np.exp(log_w - top)
    return w / w.sum()


def sue_weights(distances, config: SueConfig = SueConfig()) -> np.ndarray:
    """Normalized exponential-decay weights for sorted neighbor distances."""
    d = np.asarray(distances, dtype=np.float64)
    if d.size == 0:
        return d.copy()
    if config.weighting is Weighting.UNIFORM:
        return np.full(d.shape, 1.0 / d.size)
    # d is sorted, so d[0] is the shift that makes the leading weight exactly 1
    return _normalize_log_weights(-config.alpha * (d - d[0]))


def weighted_pose_moments(poses: np.ndarray, weights: np.ndarray
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and population covariance; ``weights`` must sum to 1."""
    mean = weights @ poses
    centered = poses - mean
    cov = (centered * weights[:, None]).T @ centered
    return mean, 0.5 * (cov + cov.T)


def _summarize(poses: np.ndarray, weights: np.ndarray) -> WeightedPoseSummary:
    mean, cov = weighted_pose_moments(poses, weights)
    for arr in (weights, mean, cov):
        arr.setflags(write=False)
    return WeightedPoseSummary(weights, mean, cov, float(np.trace(cov)))


def _leading(matches: RankedMatches, config: SueConfig) -> RankedMatches:
    if len(matches) == 0:
        raise EmptyMatches(f"no neighbors for query {matches.query_id!r}")
    if len(matches) > config.k_neighbors:
        return matches.truncate(config.k_neighbors)
    return matches


def sue_score(matches: RankedMatches, config: SueConfig = SueConfig()
              ) -> tuple[WeightedPoseSummary, float]:
    """Spatial uncertainty of one query: trace of the weighted pose covariance.

    Uses the first ``config.k_neighbors`` matches (all of them if fewer).
    """
    top = _leading(matches, config)
    summary = _summarize(top.poses, sue_weights(top.distances, config))
    return summary, summary.trace


def posterior_match_belief(matches: RankedMatches, config: SueConfig = SueConfig(),
                           prior=None) -> np.ndarray:
    """Posterior probability that each retrieved reference is the true match.

    The exponential weight acts as an unnormalized likelihood. ``prior`` is an
    optional nonnegative multiplier per neighbor; ``None`` means uniform.
    """
    top = _leading(matches, config)
    if prior is None:
        return sue_weights(top.distances, config)
    prior = np.asarray(prior, dtype=np.float64)
    if prior.shape != (len(top),):
        raise ValueError(f"prior has shape {prior.shape}, expected ({len(top)},)")
    if np.any(prior < 0) or not np.all(np.isfinite(prior)):
        raise ValueError("prior multipliers must be finite and nonnegative")
    with np.errstate(divide="ignore"):
        log_prior = np.log(prior)
    return _normalize_log_weights(-config.effective_alpha * (top.distances - top.distances[0])
                                  + log_prior)


def pose_density(poses: PoseSet, k: int = 1) -> PoseDensity:
    """Distance from each reference to its k-th nearest other reference in pose space.

    Coincident references count as neighbors at distance 0, so z may be 0.
    """
    n = len(poses)
    if not 1 <= k < n:
        raise KTooLarge(f"density k={k} needs k < N={n}")
    tree = cKDTree(poses.coords)
    # k+1 because each point finds itself (or a coincident twin) at distance 0;
    # the k-th value after dropping one zero is the same either way.
    dist, _ = tree.query(poses.coords, k=k + 1)
    return PoseDensity(poses.ids, dist[:, k], k)


def sue_score_density_compensated(matches: RankedMatches, density: PoseDensity,
                                  config: SueConfig = SueConfig()
                                  ) -> tuple[WeightedPoseSummary, float]:
    """SUE with each neighbor's weight multiplied by its squared density radius z^2.

    This imposes a uniform spatial prior on the query location. References with
    z = 0 receive zero weight; if every neighbor has z = 0, ZeroWeightSum is raised.
    """
    top = _leading(matches, config)
    z = density.lookup(top.ref_ids)
    weights = posterior_match_belief(top, config, prior=z * z)
    summary = _summarize(top.poses, weights)
    return summary, summary.trace
