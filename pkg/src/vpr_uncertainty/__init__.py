"""Uncertainty estimation for visual place recognition over precomputed descriptors."""

from .core import (Descriptor, DescriptorSet, GroundTruthLabel, MethodKind, Pose, PoseSet,
                   RankedMatches, UncertaintyRecord, VPRMap, validate_map)
from .evaluation import PRCurve, auc_pr, compare_methods, label_retrievals, pr_curve
from .fusion import (MinMaxScaler, SVMConfig, SVMModel, classification_accuracy, fit_scaler,
                     svm_decide, svm_decide_batch, train_linear_svm)
from .ingest import load_descriptors, load_external_scores, load_poses, save_descriptors, save_poses
from .retrieval import RetrievalIndex, batch_retrieve, build_index, query_knn
from .uncertainty import (PoseDensity, SueConfig, WeightedPoseSummary, Weighting,
                          posterior_match_belief, pose_density, score_l2, score_pa, sue_score,
                          sue_score_density_compensated, sue_weights)

from .synthgen import QuerySpatialMode, World, WorldConfig, generate_world, write_world

__version__ = "0.1.0"
