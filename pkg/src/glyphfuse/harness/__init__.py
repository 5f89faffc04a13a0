"""Training orchestration, evaluation and ablations."""
from .ablation import AblationRow, run_ablation, standard_grid
from .metrics import MetricsReport, baseline_report, evaluate, l1, rmse, ssim
from .train import (
    TrainState,
    corpus_for,
    load_checkpoint,
    pretrain_codec,
    run_train,
    save_checkpoint,
)

__all__ = [
    "AblationRow", "MetricsReport", "TrainState", "baseline_report", "corpus_for", "evaluate",
    "l1", "load_checkpoint", "pretrain_codec", "rmse", "run_ablation", "run_train",
    "save_checkpoint", "ssim", "standard_grid",
]
