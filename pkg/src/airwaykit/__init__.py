"""Airway-tree segmentation evaluation and biomarker toolkit."""

from .analysis import (
    BiomarkerSet,
    HeatmapGrid,
    compute_biomarkers,
    compute_tav,
    radiomics_lite,
    residual_heatmap,
)
from .cls_metrics import ClsReport, PredictionSet, classification_report, roc_curve
from .morphology import (
    DistanceField,
    LabelGrid,
    connected_components,
    distance_transform,
    largest_component,
    skeletonize,
)
from .nifti import read_mask, read_volume, write_mask, write_volume
from .perturb import PerturbKind, PerturbSpec, add_noise, downsample_z, flip
from .ranking import LeaderboardEntry, rank_teams, time_runner
from .seg_metrics import (
    CaseMetrics,
    ConfusionCounts,
    branch_detection,
    case_metrics,
    overlap_metrics,
)
from .survival import (
    CoxFit,
    SurvivalRecord,
    cox_fit,
    cox_model_suite,
    wilcoxon_signed_rank,
)
from .synth import TreeSpec, corrupt, generate_tree
from .tree import AirwayTree, Branch, SizeClass, build_tree, classify_size
from .volume import Geometry, IntensityVolume, VoxelGrid

__version__ = "0.1.0"
