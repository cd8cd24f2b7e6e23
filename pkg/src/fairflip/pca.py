"""Principal component analysis via dense symmetric eigendecomposition.

Uses the exact LAPACK symmetric eigensolver on the centered covariance (no
randomized sketching); feature dimensions here stay at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import TabularDataset

__all__ = ["PcaTransform", "pca_fit", "pca_transform"]


@dataclass(frozen=True)
class PcaTransform:
    """Fitted PCA: mean vector, component rows (orthonormal, by descending
    eigenvalue), eigenvalues, and explained-variance ratios."""

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def apply(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.mean) @ self.components.T


def pca_fit(data: TabularDataset, n_components: int | None = None) -> PcaTransform:
    """Fit PCA on the dataset's features.

    Components are eigenvectors of the centered covariance (1/(n-1)
    normalisation), sorted by descending eigenvalue. Degenerate (constant)
    directions yield zero eigenvalues and are allowed. Tiny negative
    eigenvalues from rounding are clipped to zero.
    """
    if data.n < 2:
        raise ValueError("PCA needs at least 2 rows")
    d = data.dim
    if n_components is None:
        n_components = d
    if not 1 <= n_components <= d:
        raise ValueError(f"n_components must be in [1, {d}], got {n_components}")
    X = data.features
    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (data.n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    total = float(eigvals.sum())
    ratios = eigvals / total if total > 0 else np.zeros_like(eigvals)
    return PcaTransform(
        mean=mean,
        components=eigvecs[:, :n_components].T.copy(),
        eigenvalues=eigvals[:n_components].copy(),
        explained_variance_ratio=ratios[:n_components].copy(),
    )


def pca_transform(transform: PcaTransform, data: TabularDataset) -> TabularDataset:
    """Project a dataset through a fitted transform (labels and attribute
    carried over unchanged)."""
    if data.dim != transform.mean.shape[0]:
        raise ValueError(
            f"dimension mismatch: transform fitted on {transform.mean.shape[0]} features, "
            f"data has {data.dim}"
        )
    projected = transform.apply(data.features)
    names = tuple(f"pc{i}" for i in range(transform.n_components))
    return TabularDataset(projected, data.labels, data.attribute, names)
