"""Forest cover mapping from multispectral imagery.

Pipeline: mean-shift object segmentation, per-object spectral features
optionally fused with deep-model probability-heatmap statistics, linear-SVM
classification, thresholding to a binary forest map, and pixel-wise
evaluation against ground truth.
"""

from .errors import ForcmError
from .features import (
    FeatureScaler,
    FeatureSpec,
    FeatureTable,
    extract_features,
    standardize,
)
from .meanshift import (
    MeanShiftParams,
    SegmentMap,
    label_modes,
    mean_shift_filter,
    merge_small_segments,
    segment,
)
from .metrics import (
    ConfusionMatrix,
    MetricsReport,
    compare_runs,
    compute_metrics,
    confusion,
)
from .pipeline import (
    ClassifiedSegments,
    PipelineConfig,
    config_hash,
    derive_segment_labels,
    paint_segments,
    run_pipeline,
    sample_training_segments,
)
from .raster_io import (
    Heatmap,
    LabelMask,
    Raster,
    normalize_image,
    read_heatmap,
    read_image,
    read_mask,
    write_binary_map,
    write_heatmap,
    write_image,
    write_label_raster,
    write_mask_png,
)
from .svm import (
    SvmModel,
    SvmParams,
    decision_value,
    decision_values,
    load_model,
    predict,
    save_model,
    train,
)
from .synth import SceneSpec, generate_scene, ndvi_pseudo_heatmap, oracle_heatmap

__version__ = "0.1.0"

__all__ = [
    "ClassifiedSegments",
    "ConfusionMatrix",
    "FeatureScaler",
    "FeatureSpec",
    "FeatureTable",
    "ForcmError",
    "Heatmap",
    "LabelMask",
    "MeanShiftParams",
    "MetricsReport",
    "PipelineConfig",
    "Raster",
    "SceneSpec",
    "SegmentMap",
    "SvmModel",
    "SvmParams",
    "compare_runs",
    "compute_metrics",
    "config_hash",
    "confusion",
    "decision_value",
    "decision_values",
    "derive_segment_labels",
    "extract_features",
    "generate_scene",
    "label_modes",
    "load_model",
    "mean_shift_filter",
    "merge_small_segments",
    "ndvi_pseudo_heatmap",
    "normalize_image",
    "oracle_heatmap",
    "paint_segments",
    "predict",
    "read_heatmap",
    "read_image",
    "read_mask",
    "run_pipeline",
    "sample_training_segments",
    "save_model",
    "segment",
    "standardize",
    "train",
    "write_binary_map",
    "write_heatmap",
    "write_image",
    "write_label_raster",
    "write_mask_png",
]
