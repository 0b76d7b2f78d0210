"""Multimodal novel-domain generation for cross-domain activity recognition."""

__version__ = "0.1.0"

from .modalities import Modality, PoseSkeleton, SkeletonEdges, render_heatmaps, render_limbs, to_modality_image
from .flow import FlowConfig, FlowField, estimate_flow, flow_to_image
from .sinkhorn import SinkhornConfig, cost_matrix, exact_ot_oracle, sinkhorn_distance
from .losses import LossReport, LossWeights, ac_task_loss, class_loss, cycle_loss, dg_objective, diversity_loss, novelty_loss
from .models import NetConfig, build_model, freeze_copy
from .training import TrainConfig, joint_train, pretrain_action_classifier, pretrain_domain_classifier
from .evaluation import balanced_accuracy, dump_embeddings, evaluate_model, sweep_combinations

__all__ = [
    "Modality",
    "PoseSkeleton",
    "SkeletonEdges",
    "render_heatmaps",
    "render_limbs",
    "to_modality_image",
    "FlowConfig",
    "FlowField",
    "estimate_flow",
    "flow_to_image",
    "SinkhornConfig",
    "cost_matrix",
    "exact_ot_oracle",
    "sinkhorn_distance",
    "LossReport",
    "LossWeights",
    "ac_task_loss",
    "class_loss",
    "cycle_loss",
    "dg_objective",
    "diversity_loss",
    "novelty_loss",
    "NetConfig",
    "build_model",
    "freeze_copy",
    "TrainConfig",
    "joint_train",
    "pretrain_action_classifier",
    "pretrain_domain_classifier",
    "balanced_accuracy",
    "dump_embeddings",
    "evaluate_model",
    "sweep_combinations",
]
