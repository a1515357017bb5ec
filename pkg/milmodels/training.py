"""
Training: one bag per Adam step, cosine-annealed (or constant) learning rate,
k-fold cross-validation on the training split with best-fold selection.
"""
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from bagdata import Bag, DatasetSplit, labels_of, split_train_test
from diffcore import Tape, adam_step, cosine_anneal, zero_grad
from evalmetrics import auc_score, best_fold_index
from utils.errors import DegenerateLabelsError, DimensionError, EmptyBagError
from utils.logging_config import get_logger

from .models import BagOutput, BaseMILModel, build_model

log = get_logger(__name__)


class TrainConfig(BaseModel):
    architecture: str = "amil"
    attention_dim: int = Field(128, ge=1)
    classifier_hidden: Tuple[int, ...] = ()
    lr0: float = Field(5e-4, gt=0)
    lr_min: float = Field(1e-5, ge=0)
    use_cosine: bool = True
    epochs: int = Field(30, ge=1)
    k_folds: int = Field(5, ge=2)
    test_frac: float = Field(0.2, gt=0, lt=1)
    workers: int = Field(1, ge=1)

    @classmethod
    def from_experiment(cls, cfg) -> "TrainConfig":
        values = {name: getattr(cfg, name) for name in cls.model_fields if hasattr(cfg, name)}
        values["workers"] = cfg.worker_count
        return cls(**values)

    def learning_rate(self, epoch: int) -> float:
        if not self.use_cosine:
            return self.lr0
        return cosine_anneal(self.lr0, self.lr_min, epoch, self.epochs)


@dataclass
class FoldResult:
    fold: int
    model: BaseMILModel
    losses: List[float]
    val_auc: float
    val_size: int

    def report_row(self) -> dict:
        return {"fold": self.fold, "val_bags": self.val_size, "val_auc": self.val_auc,
                "first_loss": self.losses[0], "final_loss": self.losses[-1]}


@dataclass
class TrainResult:
    split: DatasetSplit
    folds: List[FoldResult] = field(default_factory=list)
    best_fold: int = 0

    @property
    def model(self) -> BaseMILModel:
        return self.folds[self.best_fold].model

    @property
    def val_aucs(self) -> List[float]:
        return [f.val_auc for f in self.folds]


def derive_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def embed_dim_of(bags: Sequence[Bag]) -> int:
    if not bags:
        raise EmptyBagError("no bags to train on")
    dims = {b.embed_dim for b in bags}
    if len(dims) != 1:
        raise DimensionError(f"bags disagree on the embedding width: {sorted(dims)}")
    return dims.pop()


def fit(model: BaseMILModel, bags: Sequence[Bag], config: TrainConfig, seed: int = 0) -> List[float]:
    """Train in place; returns the mean loss of every epoch."""
    params = model.parameters()
    rng = np.random.default_rng(seed)
    losses = []
    for epoch in range(config.epochs):
        lr = config.learning_rate(epoch)
        total = 0.0
        for i in rng.permutation(len(bags)):
            bag = bags[i]
            zero_grad(params)
            tape = Tape()
            loss = model.loss(tape, bag.instances, bag.label)
            tape.backward(loss)
            adam_step(params, lr)
            total += loss.item()
        losses.append(total / len(bags))
        log.debug("%s epoch %d/%d lr=%.3g loss=%.6f", model.architecture, epoch + 1, config.epochs, lr, losses[-1])
    return losses


def predict(model: BaseMILModel, bags: Sequence[Bag]) -> np.ndarray:
    return np.array([model.forward(b.instances).bag_prob for b in bags])


def score_map(model: BaseMILModel, bag: Bag) -> BagOutput:
    """Attention, and for additive models patch contributions, of every instance."""
    return model.forward(bag.instances)


def evaluate_auc(model: BaseMILModel, bags: Sequence[Bag]) -> float:
    """Bag-level AUC; NaN when the bags hold a single class."""
    try:
        return auc_score(predict(model, bags), labels_of(bags))
    except DegenerateLabelsError:
        return float("nan")


def _train_fold(split: DatasetSplit, fold: int, embed_dim: int, config: TrainConfig, seed: int) -> FoldResult:
    fit_bags, val_bags = split.fold_bags(fold)
    model = build_model(config.architecture, embed_dim, config.attention_dim, config.classifier_hidden,
                        seed=derive_seed(seed, fold, 0))
    losses = fit(model, fit_bags, config, seed=derive_seed(seed, fold, 1))
    val_auc = evaluate_auc(model, val_bags)
    log.info("%s fold %d: val AUC %.4f on %d bags (loss %.4f -> %.4f)", config.architecture, fold,
             val_auc, len(val_bags), losses[0], losses[-1])
    return FoldResult(fold, model, losses, val_auc, len(val_bags))


def train_model(bags: Sequence[Bag], config: TrainConfig, seed: int = 0,
                split: Optional[DatasetSplit] = None) -> TrainResult:
    """k-fold cross-validation on the training split; the best fold's model is kept.

    Folds are independent jobs on up to ``config.workers`` threads and are
    merged by fold index, so the result does not depend on scheduling.
    """
    embed_dim = embed_dim_of(bags)
    split = split or split_train_test(bags, config.test_frac, seed=seed, k=config.k_folds)
    result = TrainResult(split=split)
    with ThreadPoolExecutor(max_workers=config.workers) as executor:
        futures = {executor.submit(_train_fold, split, i, embed_dim, config, seed): i
                   for i in range(len(split.folds))}
        folds = {}
        for future in as_completed(futures):
            folds[futures[future]] = future.result()
    result.folds = [folds[i] for i in sorted(folds)]
    result.best_fold = best_fold_index(result.val_aucs)
    log.info("%s: best fold %d (val AUC %.4f)", config.architecture, result.best_fold,
             result.folds[result.best_fold].val_auc)
    return result
