"""Epoch loop, evaluation, and metrics rows.

All reported numbers are deterministic functions of (spec, params, data,
seed): evaluation always walks the dataset in order with a fixed batch
size, training accuracy is accumulated from the same forward passes that
produce the updates, and wall-clock time is kept out of the metrics rows
(it travels separately so metrics files are byte-reproducible).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

from .data import Dataset, batches
from .errors import NumericsError
from .linalg import softmax_xent
from .network import NetworkSpec, ParamSet, forward_network, loss_and_grads
from .optim import OptimState, optimizer_step
from .rng import Rng

EVAL_BATCH = 256  # fixed so any two evaluations of the same data agree exactly


@dataclass
class MetricsRow:
    epoch: int
    split: str  # "train" or "test"
    loss: float
    accuracy: float


@dataclass
class TrainResult:
    rows: list[MetricsRow]
    epoch_seconds: list[float]
    params: ParamSet          # after the last epoch
    best_params: ParamSet     # highest test accuracy (or last, without test data)
    best_epoch: int
    best_test_accuracy: float
    final_train_accuracy: float


def evaluate(
    spec: NetworkSpec, params: ParamSet, ds: Dataset, batch_size: int = EVAL_BATCH
) -> tuple[float, float]:
    """(mean loss, accuracy) over the dataset in its stored order."""
    total_loss = 0.0
    correct = 0
    for X, y in batches(ds, batch_size):
        logits, _ = forward_network(spec, params, X)
        loss, _ = softmax_xent(logits, y)
        total_loss += loss * len(y)
        correct += int((logits.argmax(axis=1) == y).sum())
    n = len(ds)
    return total_loss / n, correct / n


def train(
    spec: NetworkSpec,
    params: ParamSet,
    train_ds: Dataset,
    opt: OptimState,
    epochs: int,
    batch_size: int,
    shuffle_rng: Rng,
    test_ds: Dataset | None = None,
    eval_batch: int = EVAL_BATCH,
) -> TrainResult:
    """Minibatch training with per-epoch metrics.

    Each epoch reshuffles with the given rng, steps the optimizer per
    batch, and records a train row (from the training forwards) plus a
    test row when test data is present. The best checkpoint is the one
    with the highest test accuracy, earliest epoch winning ties.
    """
    rows: list[MetricsRow] = []
    epoch_seconds: list[float] = []
    best_params = params
    best_epoch = 0
    best_acc = -1.0
    final_train_acc = 0.0

    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        running_loss = 0.0
        correct = 0
        for batch_no, (X, y) in enumerate(batches(train_ds, batch_size, rng=shuffle_rng), 1):
            loss, grads, logits = loss_and_grads(spec, params, X, y, return_logits=True)
            try:
                if not math.isfinite(loss):
                    raise NumericsError(f"non-finite loss {loss}")
                params = optimizer_step(opt, spec, params, grads)
            except NumericsError as exc:
                raise NumericsError(f"epoch {epoch}, batch {batch_no}: {exc}") from exc
            running_loss += loss * len(y)
            correct += int((logits.argmax(axis=1) == y).sum())
        n = len(train_ds)
        final_train_acc = correct / n
        rows.append(MetricsRow(epoch=epoch, split="train",
                               loss=running_loss / n, accuracy=final_train_acc))
        if test_ds is not None:
            test_loss, test_acc = evaluate(spec, params, test_ds, eval_batch)
            rows.append(MetricsRow(epoch=epoch, split="test",
                                   loss=test_loss, accuracy=test_acc))
            if test_acc > best_acc:
                best_acc = test_acc
                best_params = params
                best_epoch = epoch
        epoch_seconds.append(time.perf_counter() - t0)

    if test_ds is None:
        best_params = params
        best_epoch = epochs
        best_acc = float("nan")
    return TrainResult(rows=rows, epoch_seconds=epoch_seconds, params=params,
                       best_params=best_params, best_epoch=best_epoch,
                       best_test_accuracy=best_acc,
                       final_train_accuracy=final_train_acc)
