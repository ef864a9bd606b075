"""Principal component analysis by thin SVD of the centered matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .serialize import envelope, open_envelope

DEFAULT_COMPONENTS = 30


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # k x d, orthonormal rows
    explained_variance: np.ndarray

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]

    def transform(self, X) -> np.ndarray:
        if X.shape[1] != self.d:
            raise ValueError(f"expected width {self.d}, got {X.shape[1]}")
        if sp.issparse(X):
            return np.asarray(X @ self.components.T) - self.mean @ self.components.T
        return (np.asarray(X, dtype=np.float64) - self.mean) @ self.components.T

    def inverse_transform(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z) @ self.components + self.mean

    def to_json(self) -> dict:
        return envelope("pca", {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance": self.explained_variance.tolist(),
        })

    @classmethod
    def from_json(cls, doc: dict) -> "PcaModel":
        st = open_envelope(doc, "pca")
        return cls(
            np.asarray(st["mean"], dtype=np.float64),
            np.asarray(st["components"], dtype=np.float64).reshape(len(st["explained_variance"]), -1),
            np.asarray(st["explained_variance"], dtype=np.float64),
        )


def _fix_signs(components: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(components), axis=1)
    signs = np.sign(components[np.arange(len(components)), idx])
    signs[signs == 0] = 1.0
    return components * signs[:, None]


def _svd_route(Xc: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    _, s, vt = np.linalg.svd(Xc, full_matrices=False)
    return s[:k], vt[:k]


def _gram_route(X, mean: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray] | None:
    """Top-k axes from the n x n Gram matrix of the centered data.

    Used when d > n, so a sparse TF-IDF matrix never gets densified. Returns
    None when a requested axis has (numerically) zero variance.
    """
    n = X.shape[0]
    xm = np.asarray(X @ mean).ravel()
    G = X @ X.T
    G = G.toarray() if sp.issparse(G) else np.asarray(G)
    G = G - xm[:, None] - xm[None, :] + float(mean @ mean)
    evals, evecs = np.linalg.eigh((G + G.T) / 2)
    order = np.argsort(evals)[::-1][:k]
    evals, U = evals[order], evecs[:, order]
    if evals[-1] <= 1e-10 * max(evals[0], 1e-300):
        return None
    s = np.sqrt(evals)
    XtU = np.asarray(X.T @ U) - np.outer(mean, U.sum(axis=0))
    V = (XtU / s).T
    # one re-orthonormalization pass against round-off
    q, r = np.linalg.qr(V.T)
    V = (q * np.sign(np.diag(r))).T
    return s, V


def pca_fit(X, k: int = DEFAULT_COMPONENTS) -> PcaModel:
    """Fit the top ``k`` principal axes; ``k`` is clamped to ``min(k, n-1, d)``.

    Each axis is oriented so its largest-magnitude loading is positive.
    Explained variances use the ``n - 1`` denominator.
    """
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least two rows")
    if k < 1:
        raise ValueError("PCA needs k >= 1")
    data = X.data if sp.issparse(X) else np.asarray(X)
    if not np.all(np.isfinite(data)):
        raise ValueError("PCA input contains non-finite values")
    k = min(k, n - 1, d)
    mean = np.asarray(X.mean(axis=0)).ravel().astype(np.float64)
    out = None
    if sp.issparse(X) or d > n:
        out = _gram_route(X.astype(np.float64) if sp.issparse(X) else np.asarray(X, dtype=np.float64),
                          mean, k)
    if out is None:
        dense = X.toarray() if sp.issparse(X) else np.asarray(X, dtype=np.float64)
        out = _svd_route(dense - mean, k)
    s, V = out
    return PcaModel(mean, _fix_signs(V), s**2 / (n - 1))


def pca_transform(model: PcaModel, X) -> np.ndarray:
    return model.transform(X)
