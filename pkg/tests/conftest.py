"""Shared builders for the test suite."""

import numpy as np
import pytest

from vecafl.model import LabeledBatch, ModelParams
from vecafl.rng import substream


def make_params(weights, biases):
    """ModelParams from plain nested lists."""
    ws = [np.array(w, dtype=float) for w in weights]
    bs = [np.array(b, dtype=float) for b in biases]
    arch = tuple([ws[0].shape[0]] + [w.shape[1] for w in ws])
    return ModelParams(ws, bs, arch)


def tiny_122_net():
    """1-2-2 stack with hand-set weights; the oracle values in the tests
    were produced from exactly these numbers."""
    return make_params(
        [[[1.0, -1.0]], [[0.5, -0.25], [1.5, 0.75]]],
        [[0.1, 0.2], [0.05, -0.05]])


def params_equal(a: ModelParams, b: ModelParams) -> bool:
    return (a.architecture == b.architecture
            and all(np.array_equal(x, y)
                    for x, y in zip(a.layer_weights, b.layer_weights))
            and all(np.array_equal(x, y)
                    for x, y in zip(a.layer_biases, b.layer_biases)))


def params_allclose(a: ModelParams, b: ModelParams, tol=1e-12) -> bool:
    return (a.architecture == b.architecture
            and all(np.allclose(x, y, rtol=0.0, atol=tol)
                    for x, y in zip(a.layer_weights, b.layer_weights))
            and all(np.allclose(x, y, rtol=0.0, atol=tol)
                    for x, y in zip(a.layer_biases, b.layer_biases)))


def balanced_batch(n: int, dim: int, seed: int = 0) -> LabeledBatch:
    rng = substream(seed, "test-batch")
    inputs = rng.uniform(0.0, 1.0, size=(n, dim))
    labels = np.arange(n) % 10
    return LabeledBatch(inputs, labels)


@pytest.fixture
def rng():
    return substream(1234, "fixture")
