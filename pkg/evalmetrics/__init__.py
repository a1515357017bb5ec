from .interpret import (
    attention_entropy,
    effective_instance_count,
    excitatory_fraction,
    roi_recall,
    top_tiles,
)
from .reports import metrics_row, write_fold_report, write_metrics_report, write_roc_points
from .roc import RocCurve, auc_score, roc_auc, roc_curve
from .summary import RunSummary, aggregate_runs, best_fold_index, select_best_fold
