"""Datasets, shard assignment and adversarial tampering.

Features live in [0, 1] and labels in 0..9 throughout; both attacks are
involutions on that domain.  Tampering happens on a vehicle's local copy
only, the trusted roadside shard is never routed through any attack path.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import LabeledBatch, ModelParams, params_axpy

NUM_CLASSES = 10
ATTACK_KINDS = ("none", "class_flip", "data_flip")


@dataclass
class DataShard:
    """A participant's local dataset plus its tampering annotations."""

    owner: int                    # vehicle id, or -1 for the roadside unit
    batch: LabeledBatch
    attack: str = "none"
    bad_node: bool = False
    attacked: LabeledBatch = field(default=None, repr=False)

    def training_view(self) -> LabeledBatch:
        """The data actually trained on (tampered copy when attacked)."""
        if self.attack == "none":
            return self.batch
        if self.attacked is None:
            self.attacked = apply_attack(self.batch, self.attack)
        return self.attacked


def _check_batch(batch: LabeledBatch) -> None:
    if batch.inputs.ndim != 2:
        raise ValueError("inputs must be a 2-d array")
    if batch.inputs.shape[0] != batch.labels.shape[0]:
        raise ValueError("inputs and labels disagree in length")
    if batch.inputs.min(initial=0.0) < 0.0 or batch.inputs.max(initial=0.0) > 1.0:
        raise ValueError("features must lie in [0, 1]")
    if batch.labels.min(initial=0) < 0 or batch.labels.max(initial=0) >= NUM_CLASSES:
        raise ValueError(f"labels must lie in 0..{NUM_CLASSES - 1}")


def synthetic_blobs(n: int, dim: int, rng: np.random.Generator,
                    spread: float = 0.08) -> LabeledBatch:
    """Ten Gaussian clusters with centres inside [0.2, 0.8]^dim, clipped.

    Labels are balanced round-robin so every shard size yields all classes.
    """
    if n <= 0 or dim <= 0:
        raise ValueError("n and dim must be positive")
    centers = rng.uniform(0.2, 0.8, size=(NUM_CLASSES, dim))
    labels = np.arange(n) % NUM_CLASSES
    rng.shuffle(labels)
    inputs = centers[labels] + spread * rng.standard_normal((n, dim))
    np.clip(inputs, 0.0, 1.0, out=inputs)
    batch = LabeledBatch(inputs, labels.astype(int))
    _check_batch(batch)
    return batch


def load_csv(path) -> LabeledBatch:
    """Rows of ``label, f1, ..., fd`` with features already in [0, 1]."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    if raw.shape[1] < 2:
        raise ValueError("need a label column plus at least one feature")
    batch = LabeledBatch(raw[:, 1:].astype(float), raw[:, 0].astype(int))
    _check_batch(batch)
    return batch


def partition(dataset: LabeledBatch, shard_sizes, rsu_size: int,
              rng: np.random.Generator):
    """Disjoint random shards for each vehicle plus the trusted shard.

    Returns (vehicle_batches, rsu_batch, remainder); the remainder serves
    as a clean held-out evaluation pool.
    """
    sizes = [int(s) for s in shard_sizes]
    if any(s <= 0 for s in sizes) or rsu_size <= 0:
        raise ValueError("shard sizes must be positive")
    needed = sum(sizes) + rsu_size
    if needed > len(dataset):
        raise ValueError(f"partition wants {needed} samples, "
                         f"dataset has {len(dataset)}")
    order = rng.permutation(len(dataset))
    cuts, pos = [], 0
    for s in sizes + [rsu_size]:
        cuts.append(order[pos:pos + s])
        pos += s
    rest = order[pos:]
    take = lambda idx: LabeledBatch(dataset.inputs[idx].copy(),
                                    dataset.labels[idx].copy())
    return [take(c) for c in cuts[:-1]], take(cuts[-1]), take(rest)


def class_flip(batch: LabeledBatch) -> LabeledBatch:
    """Label inversion y -> 9 - y; features untouched."""
    _check_batch(batch)
    return LabeledBatch(batch.inputs.copy(),
                        (NUM_CLASSES - 1) - batch.labels)


def data_flip(batch: LabeledBatch) -> LabeledBatch:
    """Feature inversion a -> 1 - a; labels untouched."""
    _check_batch(batch)
    return LabeledBatch(1.0 - batch.inputs, batch.labels.copy())


def apply_attack(batch: LabeledBatch, kind: str) -> LabeledBatch:
    if kind == "none":
        return batch
    if kind == "class_flip":
        return class_flip(batch)
    if kind == "data_flip":
        return data_flip(batch)
    raise ValueError(f"unknown attack kind {kind!r}")


def degrade_bad_node(params: ModelParams, noise_scale: float,
                     rng: np.random.Generator) -> ModelParams:
    """Additive Gaussian corruption of an upload from a failing vehicle."""
    if noise_scale < 0.0:
        raise ValueError("noise_scale must be nonnegative")
    noise = ModelParams(
        [rng.standard_normal(w.shape) for w in params.layer_weights],
        [rng.standard_normal(b.shape) for b in params.layer_biases],
        params.architecture)
    return params_axpy(params, noise, noise_scale)
