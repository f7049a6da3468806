"""Weak-label synthesis, boundary-mining loss kernels, post-processing and
evaluation for nuclei instance segmentation trained from point annotations.

The package is framework-free: every loss returns its value together with
the gradient raster, so any training loop can consume it.
"""

from .affinity import (
    AffinityPair,
    AffinityPairs,
    BoundaryLossResult,
    CoarseInstancePrediction,
    affinity_from_boundary,
    affinity_label,
    boundary_loss,
    build_affinity_pairs,
    coarse_instances,
    half_disk_offsets,
    pair_affinities,
    path_max,
    path_pixels,
    total_fine_loss,
)
from .coarse import (
    KMeansResult,
    cluster_labels,
    coarse_loss,
    kmeans,
    masked_cross_entropy,
    nearest_point_index,
    voronoi_labels,
)
from .config import ConfigError, DataError, PipelineConfig, PointSegError
from .curriculum import (
    Candidate,
    admission_count,
    candidates_from_heatmap,
    normalize_unit,
    select_pseudo_labels,
    training_difficulty,
)
from .heatmap import LossResult, detection_loss, extract_peaks, gaussian_heatmap
from .metrics import (
    aji,
    detection_prf,
    object_dice,
    panoptic_quality,
    pixel_accuracy_f1,
    segmentation_metrics,
)
from .postprocess import dilate_disk1, fill_holes, instance_postprocess, remove_small
from .raster import (
    BACKGROUND,
    IGNORE,
    PointSet,
    component_stats,
    connected_components,
    distance_to_nearest_point,
)

__version__ = "0.1.0"
