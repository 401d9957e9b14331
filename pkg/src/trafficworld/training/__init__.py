from .augment import AugmentConfig, augment_scenario
from .data import TrainItem, build_train_item
from .losses import (BatchOutputs, BatchTargets, LossWeights, compute_losses,
                     multipath_loss)
from .trainer import (OptimConfig, TrainReport, forward_batch, train_model,
                      value_token_marginal_entropy, _collate_items)
from .scaling import ScalingReport, ScalingRow, scaling_report

__all__ = [
    "AugmentConfig", "augment_scenario",
    "TrainItem", "build_train_item",
    "BatchOutputs", "BatchTargets", "LossWeights", "compute_losses",
    "multipath_loss",
    "OptimConfig", "TrainReport", "train_model", "forward_batch",
    "value_token_marginal_entropy",
    "ScalingReport", "ScalingRow", "scaling_report",
]
