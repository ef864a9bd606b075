from .ensemble import out_of_fold_probs, stacking_ensemble, voting_ensemble
from .gbdt import GbdtModel, GbdtParams, gbdt_fit, gbdt_predict_proba
from .linear import ConvergenceError, LogRegModel, logreg_fit, logreg_predict_proba
from .metrics import mean_rank, rank_matrix, relative_gain, roc_auc, roc_auc_gain
from .validation import EvalReport, FoldError, cross_validate, grouped_split, stratified_folds

__all__ = [
    "ConvergenceError", "EvalReport", "FoldError", "GbdtModel", "GbdtParams", "LogRegModel",
    "cross_validate", "gbdt_fit", "gbdt_predict_proba", "grouped_split", "logreg_fit",
    "logreg_predict_proba", "mean_rank", "out_of_fold_probs", "rank_matrix", "relative_gain",
    "roc_auc", "roc_auc_gain", "stacking_ensemble", "stratified_folds", "voting_ensemble",
]
