"""
The evaluation protocol: for each independent run, a fresh stratified
train/test split (seed + run), k-fold training on the training part and
external validation of the best fold on the held-out test bags.
"""
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

from bagdata import Bag, balance_classes, labels_of
from evalmetrics import RocCurve, RunSummary, aggregate_runs, metrics_row, roc_auc
from utils.logging_config import get_logger

from .training import TrainConfig, TrainResult, predict, train_model

log = get_logger(__name__)


@dataclass
class RunResult:
    run: int
    seed: int
    train: TrainResult
    test_auc: float
    curve: RocCurve


@dataclass
class ExperimentResult:
    architecture: str
    runs: List[RunResult] = field(default_factory=list)

    @property
    def test_aucs(self) -> List[float]:
        return [r.test_auc for r in self.runs]

    @property
    def summary(self) -> Optional[RunSummary]:
        return aggregate_runs(self.test_aucs) if len(self.runs) >= 2 else None

    def metrics_row(self, task: str, magnification: str) -> dict:
        summary = self.summary or RunSummary(self.test_aucs, self.test_aucs[0], 0.0)
        return metrics_row(self.architecture, task, magnification, summary)

    def fold_rows(self) -> List[dict]:
        rows = []
        for r in self.runs:
            for f in r.train.folds:
                rows.append({"architecture": self.architecture, "run": r.run, "seed": r.seed,
                             **f.report_row(), "best": f.fold == r.train.best_fold})
        return rows


def _run_once(bags: Sequence[Bag], config: TrainConfig, run: int, run_seed: int, balance: bool) -> RunResult:
    data = balance_classes(bags, run_seed) if balance else list(bags)
    trained = train_model(data, config, seed=run_seed)
    test = trained.split.test
    curve, auc = roc_auc(predict(trained.model, test), labels_of(test))
    log.info("%s run %d (seed %d): test AUC %.4f on %d bags", config.architecture, run, run_seed,
             auc, len(test))
    return RunResult(run, run_seed, trained, auc, curve)


def run_experiment(bags: Sequence[Bag], config: TrainConfig, runs: int = 5, seed: int = 0,
                   balance: bool = False) -> ExperimentResult:
    """Run ``runs`` independent protocols with seeds ``seed .. seed + runs - 1``.

    Runs share ``config.workers`` threads (their folds then train serially)
    and are merged by run index.
    """
    result = ExperimentResult(architecture=config.architecture)
    workers = min(config.workers, runs)
    per_run = config if workers == 1 else config.model_copy(update={"workers": 1})
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(_run_once, bags, per_run, run, seed + run, balance): run
                   for run in range(runs)}
        done = {}
        for future in as_completed(futures):
            done[futures[future]] = future.result()
    result.runs = [done[run] for run in sorted(done)]
    if result.summary is not None:
        log.info("%s: test AUC %s over %d runs", config.architecture, result.summary.formatted, runs)
    return result
