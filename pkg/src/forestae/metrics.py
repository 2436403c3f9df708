"""Reconstruction and embedding-structure metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Table

__all__ = ["DistortionReport", "distortion", "separation_ratio"]

SEPARATION_SENTINEL = 1e12


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class DistortionReport:
    per_feature: tuple[float, ...]
    combined: float
    n_continuous: int
    n_categorical: int

    def to_dict(self) -> dict:
        return {
            "per_feature": list(self.per_feature),
            "combined": self.combined,
            "n_continuous": self.n_continuous,
            "n_categorical": self.n_categorical,
        }


def distortion(original: Table, reconstructed: Table) -> DistortionReport:
    """Unit-interval reconstruction error, averaged over features.

    Continuous columns score the unexplained variance share 1 - R^2 (clipped
    to [0, 1]; a zero-variance column scores 0 only on exact recovery).
    Categorical columns score the mismatch fraction.
    """
    if original.schema != reconstructed.schema:
        raise MetricError("schema mismatch")
    if original.n != reconstructed.n:
        raise MetricError("row count mismatch")
    if original.n < 2:
        raise MetricError("need at least 2 rows")
    per = []
    n_cont = n_cat = 0
    for j, col in enumerate(original.schema.columns):
        x = original.values[:, j]
        xh = reconstructed.values[:, j]
        if col.is_categorical:
            n_cat += 1
            per.append(float(np.mean(x != xh)))
        else:
            n_cont += 1
            ss_tot = float(np.sum((x - x.mean()) ** 2))
            ss_res = float(np.sum((x - xh) ** 2))
            if ss_tot == 0.0:
                per.append(0.0 if ss_res == 0.0 else 1.0)
            else:
                per.append(min(1.0, max(0.0, ss_res / ss_tot)))
    return DistortionReport(
        per_feature=tuple(per),
        combined=float(np.mean(per)),
        n_continuous=n_cont,
        n_categorical=n_cat,
    )


def separation_ratio(Z: np.ndarray, labels) -> float:
    """How much farther points sit from other classes' centroids than their own.

    Mean distance from each point to the centroids of the other classes,
    divided by the mean distance to its own class centroid. Roughly 1 for
    fully overlapping classes, large for well-separated ones; a zero
    denominator returns a large sentinel.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.shape[0] < 2:
        raise MetricError("need at least 2 classes")
    centroids = {}
    for c in classes:
        members = labels == c
        if members.sum() < 2:
            raise MetricError(f"class {c!r} has fewer than 2 points")
        centroids[c] = Z[members].mean(axis=0)
    within = np.empty(Z.shape[0])
    between = np.empty(Z.shape[0])
    for i in range(Z.shape[0]):
        own = labels[i]
        within[i] = np.linalg.norm(Z[i] - centroids[own])
        others = [np.linalg.norm(Z[i] - centroids[c]) for c in classes if c != own]
        between[i] = np.mean(others)
    denom = within.mean()
    if denom == 0.0:
        return SEPARATION_SENTINEL
    return float(between.mean() / denom)
