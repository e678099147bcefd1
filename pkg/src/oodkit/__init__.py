"""oodkit: out-of-domain intent detection and novel-intent discovery.

Detects OOD utterances by thresholding a variational autoencoder's
reconstruction loss on sentence embeddings, classifies in-domain intents with
a one-layer softmax, and discovers new intents among flagged rows via
polynomial kernel PCA followed by hierarchical density-based clustering.
"""

from .dataset import (
    DatasetError,
    EmbeddingDataset,
    ScalerStats,
    SplitConfig,
    apply_split,
    assign_splits,
    fit_scaler,
    load_dataset,
    scale,
    synth_generate,
    write_dataset,
)
from .vae import (
    LossBreakdown,
    VaeConfig,
    VaeError,
    VaeModel,
    calibrate_threshold,
    detect_ood,
    init_model,
    reconstruction_scores,
)
from .classifier import ClassifierModel, predict_intent, train_classifier
from .kpca import KernelConfig, KpcaModel
from .hdbscan import ClusterAssignment, CondensedTree, HdbscanConfig
from .metrics import EvalReport
from .pipeline import PipelineConfig, PipelineError, run_eval, run_train

__all__ = [
    "DatasetError",
    "EmbeddingDataset",
    "ScalerStats",
    "SplitConfig",
    "apply_split",
    "assign_splits",
    "fit_scaler",
    "load_dataset",
    "scale",
    "synth_generate",
    "write_dataset",
    "LossBreakdown",
    "VaeConfig",
    "VaeError",
    "VaeModel",
    "calibrate_threshold",
    "detect_ood",
    "init_model",
    "reconstruction_scores",
    "ClassifierModel",
    "predict_intent",
    "train_classifier",
    "KernelConfig",
    "KpcaModel",
    "HdbscanConfig",
    "ClusterAssignment",
    "CondensedTree",
    "EvalReport",
    "PipelineConfig",
    "PipelineError",
    "run_eval",
    "run_train",
]

__version__ = "0.1.0"
