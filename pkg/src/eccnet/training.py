"""SGD training loop, variable-size graph batching, stratified k-fold cross
validation, test-time randomization averaging, and the perturbation
robustness harness.

Batching takes the disjoint union of the pyramids at every level, offsetting
vertex indices and pooling maps; per-graph vertex ranges are retained so
global pooling reduces each graph separately. Training is plain SGD (no
momentum or weight decay unless configured) with a step-wise learning-rate
schedule, fully deterministic under a fixed seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from .batchutil import PyramidBatch, batch
from .errors import ContractError, StratificationError
from .graph import GraphPyramid
from .layers import softmax_cross_entropy, softmax_probs
from .network import EccNetwork
from .tensor import Tape, backward

__all__ = [
    "TrainConfig", "FoldPlan", "CVResult", "batch", "PyramidBatch", "train",
    "evaluate", "predict_classes", "predict_scores", "make_folds",
    "cross_validate", "test_time_average", "robustness_eval", "write_metrics",
]


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    base_lr: float = 0.1
    lr_decay_epochs: tuple[int, ...] = ()
    lr_decay_factor: float = 0.1
    momentum: float = 0.0
    seed: int = 0
    augment_ops: tuple[str, ...] = ()
    augment_params: dict = field(default_factory=dict)
    test_time_runs: int = 1

    def __post_init__(self):
        decays = tuple(self.lr_decay_epochs)
        if any(b <= a for a, b in zip(decays, decays[1:])):
            raise ContractError(f"decay epochs must be strictly increasing: {decays}")
        if decays and decays[-1] >= self.epochs:
            raise ContractError(
                f"decay epochs must precede total epochs {self.epochs}: {decays}")
        self.lr_decay_epochs = decays


def learning_rate(cfg: TrainConfig, epoch: int) -> float:
    """Right-continuous step schedule: one drop at each decay epoch."""
    drops = sum(1 for e in cfg.lr_decay_epochs if epoch >= e)
    return cfg.base_lr * (cfg.lr_decay_factor ** drops)


def train(model: EccNetwork, pyramids: Sequence[GraphPyramid], targets: np.ndarray,
          cfg: TrainConfig, eval_pyramids: Sequence[GraphPyramid] | None = None,
          eval_targets: np.ndarray | None = None,
          refresh: Callable[[int, np.random.Generator], list[GraphPyramid]] | None = None,
          ) -> list[dict]:
    """Train in place; returns the per-epoch metric log.

    ``refresh`` may rebuild the training pyramids at the start of each epoch
    (online augmentation). Divergence (non-finite loss) aborts training and
    restores the last epoch-end state.
    """
    if len(pyramids) == 0:
        raise ContractError("training set is empty")
    targets = np.asarray(targets, dtype=np.intp)
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    velocity = {id(p): np.zeros_like(p.data) for p in params} if cfg.momentum else None
    log: list[dict] = []
    last_good = model.state_arrays()
    last_good = {k: v.copy() for k, v in last_good.items()}
    pyramids = list(pyramids)
    for epoch in range(cfg.epochs):
        if refresh is not None:
            pyramids = list(refresh(epoch, rng))
        lr = learning_rate(cfg, epoch)
        order = rng.permutation(len(pyramids))
        total_loss = 0.0
        correct = 0
        diverged = False
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            b = batch([pyramids[i] for i in idx], targets[idx])
            with Tape() as tape:
                logits = model.forward(b, "train", rng)
                loss = softmax_cross_entropy(logits, b.targets)
            if not np.isfinite(loss.data):
                diverged = True
                break
            grads = backward(tape, loss)
            for p in params:
                g = grads.get(p)
                if g is None:
                    continue
                if velocity is not None:
                    v = velocity[id(p)]
                    v *= cfg.momentum
                    v += g
                    g = v
                p.data = p.data - lr * g
            total_loss += float(loss.data) * len(idx)
            correct += int((np.argmax(logits.data, axis=1) == b.targets).sum())
        if diverged:
            model.load_state(last_good)
            log.append({"epoch": epoch, "lr": lr, "train_loss": float("nan"),
                        "train_acc": float("nan"), "test_acc": "", "note": "diverged"})
            break
        row = {
            "epoch": epoch,
            "lr": lr,
            "train_loss": total_loss / len(order),
            "train_acc": correct / len(order),
            "test_acc": "",
        }
        if eval_pyramids is not None:
            row["test_acc"] = evaluate(model, eval_pyramids, eval_targets, cfg.batch_size)
        log.append(row)
        last_good = {k: v.copy() for k, v in model.state_arrays().items()}
    return log


def predict_scores(model: EccNetwork, pyramids: Sequence[GraphPyramid],
                   batch_size: int = 64) -> np.ndarray:
    """Softmax class scores, eval mode."""
    outs = []
    for lo in range(0, len(pyramids), batch_size):
        b = batch(list(pyramids[lo:lo + batch_size]))
        logits = model.forward(b, "eval")
        outs.append(softmax_probs(logits.data))
    return np.vstack(outs)


def predict_classes(model: EccNetwork, pyramids: Sequence[GraphPyramid],
                    batch_size: int = 64) -> np.ndarray:
    return np.argmax(predict_scores(model, pyramids, batch_size), axis=1)


def evaluate(model: EccNetwork, pyramids: Sequence[GraphPyramid],
             targets: np.ndarray, batch_size: int = 64) -> float:
    pred = predict_classes(model, pyramids, batch_size)
    return float(np.mean(pred == np.asarray(targets)))


@dataclass
class FoldPlan:
    """Stratified partition: one test-index array per fold."""

    folds: list[np.ndarray]

    def train_indices(self, fold: int, n: int) -> np.ndarray:
        mask = np.ones(n, dtype=bool)
        mask[self.folds[fold]] = False
        return np.flatnonzero(mask)


def make_folds(targets: np.ndarray, k: int, seed: int = 0) -> FoldPlan:
    targets = np.asarray(targets)
    if k > len(targets):
        raise StratificationError(f"cannot split {len(targets)} samples into {k} folds")
    _, counts = np.unique(targets, return_counts=True)
    if counts.min() < k:
        raise StratificationError(
            f"smallest class has {counts.min()} samples, fewer than {k} folds")
    skf = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    folds = [test.astype(np.intp) for _, test in skf.split(np.zeros(len(targets)), targets)]
    return FoldPlan(folds)


@dataclass
class CVResult:
    fold_accuracies: list[float]

    @property
    def mean(self) -> float:
        return float(np.mean(self.fold_accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.fold_accuracies))


def cross_validate(samples: Sequence, targets: np.ndarray, cfg: TrainConfig,
                   make_pyramid: Callable[[object, np.random.Generator], GraphPyramid],
                   model_factory: Callable[[GraphPyramid, np.random.Generator], EccNetwork],
                   k: int = 10, expand: int = 1) -> CVResult:
    """k-fold stratified cross-validation with per-fold independent models.

    Each training sample is expanded into ``expand`` pyramids generated with
    fresh randomness (useful when pyramid construction is randomized); test
    samples use one pyramid each.
    """
    targets = np.asarray(targets, dtype=np.intp)
    plan = make_folds(targets, k, cfg.seed)
    accs = []
    for fold in range(k):
        rng = np.random.default_rng((cfg.seed, fold))
        test_idx = plan.folds[fold]
        train_idx = plan.train_indices(fold, len(targets))
        train_pyr, train_y = [], []
        for i in train_idx:
            for _ in range(expand):
                train_pyr.append(make_pyramid(samples[i], rng))
                train_y.append(targets[i])
        test_pyr = [make_pyramid(samples[i], rng) for i in test_idx]
        model = model_factory(train_pyr[0], np.random.default_rng((cfg.seed, fold, 1)))
        train(model, train_pyr, np.asarray(train_y), cfg)
        accs.append(evaluate(model, test_pyr, targets[test_idx], cfg.batch_size))
    return CVResult(accs)


def test_time_average(model: EccNetwork, sample, runs: int, mode: str,
                      make_pyramid: Callable[[object, np.random.Generator], GraphPyramid],
                      rng: np.random.Generator) -> int:
    """Predict one sample by averaging over freshly randomized pyramids.

    ``votes``: majority class over runs, ties to the lowest class index.
    ``scores``: argmax of the mean softmax scores.
    """
    if runs < 1:
        raise ContractError(f"need at least one run, got {runs}")
    if mode not in ("votes", "scores"):
        raise ContractError(f"mode must be 'votes' or 'scores', got {mode!r}")
    scores = []
    for _ in range(runs):
        pyr = make_pyramid(sample, rng)
        scores.append(predict_scores(model, [pyr])[0])
    scores = np.asarray(scores)
    if mode == "scores":
        return int(np.argmax(scores.mean(axis=0)))
    votes = np.argmax(scores, axis=1)
    counts = np.bincount(votes, minlength=scores.shape[1])
    return int(np.argmax(counts))  # argmax takes the lowest index on ties


def robustness_eval(model: EccNetwork, clouds: Sequence, targets: np.ndarray,
                    perturbation: str, levels: Sequence[float],
                    make_pyramid: Callable[[object], GraphPyramid],
                    seed: int = 0) -> list[tuple[float, float]]:
    """Accuracy under increasing perturbation of the input point clouds.

    ``perturbation`` is ``delete`` (random point removal fraction) or
    ``gaussian`` (coordinate noise sigma); pyramids are rebuilt per perturbed
    copy. Returns (level, accuracy) pairs.
    """
    from .pointcloud import augment

    if not len(levels):
        raise ContractError("perturbation grid is empty")
    if perturbation not in ("delete", "gaussian"):
        raise ContractError(f"perturbation must be 'delete' or 'gaussian', got {perturbation!r}")
    targets = np.asarray(targets, dtype=np.intp)
    curve = []
    for level in levels:
        rng = np.random.default_rng((seed, int(round(level * 1e6))))
        pyramids = []
        for pc in clouds:
            if level > 0:
                if perturbation == "delete":
                    pc = augment(pc, ["delete_points"], rng, delete_fraction=level)
                else:
                    pc = augment(pc, ["gaussian_noise"], rng, noise_sigma=level)
            pyramids.append(make_pyramid(pc))
        acc = evaluate(model, pyramids, targets)
        curve.append((float(level), acc))
    return curve


def write_metrics(path, rows: list[dict]) -> None:
    """Metric log as CSV: epoch, lr, train_loss, train_acc, test_acc."""
    fields = ["epoch", "lr", "train_loss", "train_acc", "test_acc"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
