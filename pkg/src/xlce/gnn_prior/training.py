"""End-to-end training of the prior updater.

One parameter set is shared by every subarray; training minimizes the
squared error of the unrolled estimator's final posterior mean against
the known coefficients, with Adam on the exact gradients of the
unrolling convention.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..measurement import SparseProblem
from ..numerics import rng_from_seed
from .backprop import UnrollSettings, forward_backward, prepare_batch
from .params import GnnParams


class TrainingError(RuntimeError):
    """Training diverged or was fed unusable data."""


@dataclass(frozen=True)
class TrainSettings:
    """Optimizer schedule plus the unrolling convention to train under."""

    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-4
    unroll: UnrollSettings = field(default_factory=UnrollSettings)
    shuffle_seed: int = 0


class Adam:
    """Standard Adam on a named tensor collection, updating in place."""

    def __init__(self, params: GnnParams, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = params.zeros_like()
        self.v = params.zeros_like()

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.step_count += 1
        bc1 = 1.0 - self.beta1**self.step_count
        bc2 = 1.0 - self.beta2**self.step_count
        for name, g in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            update = (self.m[name] / bc1) / (np.sqrt(self.v[name] / bc2) + self.eps)
            self.params.tensors[name] -= self.lr * update


def gradients(
    params: GnnParams,
    batch: list[SparseProblem],
    sbl_layers: int,
    rounds: int = 3,
    edge_policy: str | int = "block",
    update_zeta: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    """Summed loss over a batch and its exact parameter gradients.

    Summation (rather than averaging) makes the gradient additive in the
    batch: duplicating an instance doubles its contribution.
    """
    settings = UnrollSettings(
        layers=sbl_layers, rounds=rounds, edge_policy=edge_policy, update_zeta=update_zeta
    )
    prepared = prepare_batch(batch, edge_policy=settings.edge_policy)
    loss, grads = forward_backward(params, prepared, settings, reduction="sum")
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}")
    return loss, grads


def train(
    dataset: list[SparseProblem],
    params: GnnParams,
    settings: TrainSettings = TrainSettings(),
    loss_csv=None,
    log=None,
) -> tuple[GnnParams, list[tuple[int, int, float]]]:
    """Train the shared parameters on a dataset of recovery instances.

    Returns the trained parameters and the loss trace as (epoch, batch,
    loss) tuples; the trace is also written as CSV when ``loss_csv`` is
    given. Raises :class:`TrainingError` on divergence.
    """
    if not dataset:
        raise TrainingError("empty training dataset")
    rng = rng_from_seed(settings.shuffle_seed)
    trace: list[tuple[int, int, float]] = []
    optimizer = Adam(params, settings.learning_rate)
    n_batches = max(len(dataset) // settings.batch_size, 1)
    for epoch in range(settings.epochs):
        order = rng.permutation(len(dataset))
        for b in range(n_batches):
            idx = order[b * settings.batch_size : (b + 1) * settings.batch_size]
            problems = [dataset[i] for i in idx]
            prepared = prepare_batch(problems, edge_policy=settings.unroll.edge_policy)
            loss, grads = forward_backward(params, prepared, settings.unroll, reduction="mean")
            if not np.isfinite(loss):
                raise TrainingError(
                    f"loss diverged at epoch {epoch} batch {b}: {loss}"
                )
            optimizer.step(grads)
            trace.append((epoch, b, loss))
            if log is not None:
                log(epoch, b, loss)
    if loss_csv is not None:
        with open(loss_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "batch", "loss"])
            writer.writerows(trace)
    return params, trace
