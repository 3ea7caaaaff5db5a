"""Shared helpers: exhaustive-assignment oracles and small data factories."""

import numpy as np
import pytest

from regenci.estimators import Dataset
from regenci.numkit import RngStream


def all_patterns(n: int) -> np.ndarray:
    """All 2^n binary vectors as an (2^n, n) int array."""
    codes = np.arange(2 ** n, dtype=np.int64)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(np.int64)


def pattern_weights(patterns: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Product Bernoulli weights for each pattern row."""
    return np.prod(np.where(patterns == 1, p, 1.0 - p), axis=1)


def enumerate_moments(values: np.ndarray, weights: np.ndarray):
    mean = float(weights @ values)
    var = float(weights @ (values - mean) ** 2)
    return mean, var


def random_potential_outcomes(n: int, stream: RngStream):
    y0 = stream.standard_normal(n)
    y1 = y0 + 1.0 + 0.5 * stream.standard_normal(n)
    return y0, y1


def ate_dataset_for(z, y0, y1):
    z = np.asarray(z, dtype=np.int64)
    y = np.where(z == 1, y1, y0)
    return Dataset.for_ate(z, np.zeros((len(z), 1)), y)


@pytest.fixture
def stream():
    return RngStream(20260810, 0)
