"""Synthetic Gaussian-mixture vectors, a stand-in for real feature sets."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgument


def gaussian_mixture(
    n: int,
    dim: int,
    clusters: int,
    seed: int = 0,
    spread: float = 0.35,
    center_scale: float = 1.0,
    centers_seed: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``n`` points around ``clusters`` random centres; returns ``(X, labels)``.

    Centres are ``N(0, center_scale^2 I)`` drawn from ``centers_seed``
    (defaults to ``seed``), labels are uniform, and each point adds
    ``N(0, spread^2 I)`` noise.  Passing the same ``centers_seed`` with a
    different ``seed`` samples fresh points (e.g. queries) from the same mixture.
    """
    if n < 1 or dim < 1 or clusters < 1:
        raise InvalidArgument(f"n, dim and clusters must be positive (got {n}, {dim}, {clusters})")
    if spread < 0 or center_scale < 0:
        raise InvalidArgument("spread and center_scale must be non-negative")
    centers = np.random.default_rng(seed if centers_seed is None else centers_seed).normal(
        0.0, center_scale, size=(clusters, dim)
    )
    rng = np.random.default_rng([seed, 1])
    labels = rng.integers(0, clusters, size=n)
    x = centers[labels] + rng.normal(0.0, spread, size=(n, dim))
    return x, labels
