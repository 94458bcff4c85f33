"""Gaussian kernel ridge regression, exact and with Nystrom anchors."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

# Eigenvalues below this fraction of the largest one are treated as zero.
EIG_CUTOFF = 1e-10


@dataclass(frozen=True)
class KernelSpec:
    gamma: float

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError(f"gamma must be finite and positive, got {self.gamma}")


@dataclass(frozen=True)
class KernelRidgeModel:
    """Kernel expansion ``h(x) = sum_j alpha_j k(anchor_j, x)``.

    ``indices`` holds the training rows used as anchors; for an exact fit these
    are all rows and ``seed`` is None.
    """

    anchors: np.ndarray
    alpha: np.ndarray
    spec: KernelSpec
    lam: float
    indices: np.ndarray
    seed: int | None = None

    @property
    def p(self) -> int:
        return len(self.anchors)

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "kernel_ridge",
                "gamma": self.spec.gamma,
                "lambda": self.lam,
                "seed": self.seed,
                "indices": [int(i) for i in self.indices],
                "anchors": self.anchors.tolist(),
                "alpha": self.alpha.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "KernelRidgeModel":
        doc = json.loads(text)
        return cls(
            anchors=np.asarray(doc["anchors"], dtype=float),
            alpha=np.asarray(doc["alpha"], dtype=float),
            spec=KernelSpec(doc["gamma"]),
            lam=float(doc["lambda"]),
            indices=np.asarray(doc["indices"], dtype=int),
            seed=doc["seed"],
        )


# Kept as an alias so the Nystrom variant reads naturally at call sites.
NystromKrrModel = KernelRidgeModel


def _as_2d(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return A[:, None] if A.ndim == 1 else A


def sq_distances(A, B) -> np.ndarray:
    A, B = _as_2d(A), _as_2d(B)
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return cdist(A, B, "sqeuclidean")


def gaussian_gram(A, B, spec: KernelSpec) -> np.ndarray:
    """Matrix of ``exp(-gamma * ||a_i - b_j||^2)``."""
    return np.exp(-spec.gamma * sq_distances(A, B))


def krr_fit_exact(X, y, spec: KernelSpec, lam: float) -> KernelRidgeModel:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    X = _as_2d(X)
    y = np.asarray(y, dtype=float)
    K = gaussian_gram(X, X, spec)
    if not np.isfinite(K).all():
        raise ValueError("non-finite kernel matrix")
    n = len(X)
    alpha = linalg.solve(K + n * lam * np.eye(n), y, assume_a="pos")
    return KernelRidgeModel(anchors=X.copy(), alpha=alpha, spec=spec, lam=float(lam), indices=np.arange(n))


def sym_pinv(A, cutoff: float = EIG_CUTOFF) -> np.ndarray:
    """Pseudo-inverse of a symmetric matrix with relative eigenvalue thresholding."""
    vals, vecs = np.linalg.eigh((A + A.T) / 2)
    keep = vals > cutoff * max(vals.max(initial=0.0), 0.0)
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / vals[keep]
    return (vecs * inv) @ vecs.T


def sym_inv_sqrt(A, cutoff: float = EIG_CUTOFF) -> np.ndarray:
    """Thresholded ``A^{-1/2}`` of a symmetric positive semi-definite matrix."""
    vals, vecs = np.linalg.eigh((A + A.T) / 2)
    keep = vals > cutoff * max(vals.max(initial=0.0), 0.0)
    inv = np.zeros_like(vals)
    inv[keep] = 1.0 / np.sqrt(vals[keep])
    return (vecs * inv) @ vecs.T


def sample_anchors(n: int, p: int, seed) -> np.ndarray:
    """``p`` distinct row indices drawn uniformly from ``range(n)``."""
    if not 1 <= p <= n:
        raise ValueError(f"anchor count {p} must lie in [1, {n}]")
    return np.random.default_rng(seed).choice(n, size=p, replace=False)


def nystrom_krr_fit(X, y, spec: KernelSpec, lam: float, p: int = 300, seed: int | None = 0) -> KernelRidgeModel:
    """Solve ``(Knp' Knp + lam n Kpp)^+ Knp' y`` on ``p`` uniformly sampled anchors.

    ``y`` may be a vector or a matrix of right-hand sides.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    X = _as_2d(X)
    n = len(X)
    idx = sample_anchors(n, p, seed)
    anchors = X[idx]
    Knp = gaussian_gram(X, anchors, spec)
    Kpp = Knp[idx]
    system = Knp.T @ Knp + lam * n * Kpp
    alpha = sym_pinv(system) @ (Knp.T @ np.asarray(y, dtype=float))
    return KernelRidgeModel(anchors=anchors, alpha=alpha, spec=spec, lam=float(lam), indices=idx, seed=seed)


class NystromPath:
    """Nystrom KRR solutions for many ridge values on one anchor set and bandwidth.

    Whitening by ``Kpp^{-1/2}`` turns the system into ``(B + lam n I)`` with
    ``B = Kpp^{-1/2} Knp' Knp Kpp^{-1/2}``, so one eigendecomposition of ``B``
    serves every ``lam``. Range(Knp') lies in range(Kpp), so this agrees with
    :func:`nystrom_krr_fit` up to eigenvalue truncation.
    """

    def __init__(self, X, y, spec: KernelSpec, p: int = 300, seed: int | None = 0, sq_dist=None, idx=None):
        X = _as_2d(X)
        self.n = len(X)
        self.spec = spec
        self.seed = seed
        self.idx = sample_anchors(self.n, p, seed) if idx is None else np.asarray(idx)
        self.anchors = X[self.idx]
        D = sq_distances(X, self.anchors) if sq_dist is None else sq_dist
        Knp = np.exp(-spec.gamma * D)
        W = sym_inv_sqrt(Knp[self.idx])
        B = W @ (Knp.T @ Knp) @ W
        vals, U = np.linalg.eigh((B + B.T) / 2)
        self._vals = np.maximum(vals, 0.0)
        self._W = W
        self._U = U
        self._proj = U.T @ (W @ (Knp.T @ np.asarray(y, dtype=float)))

    def alpha(self, lam: float) -> np.ndarray:
        coef = self._proj / (self._vals + lam * self.n)
        return self._W @ (self._U @ coef)

    def model(self, lam: float) -> KernelRidgeModel:
        return KernelRidgeModel(
            anchors=self.anchors, alpha=self.alpha(lam), spec=self.spec, lam=float(lam), indices=self.idx, seed=self.seed
        )

    def alphas(self, lambdas: Sequence[float]) -> np.ndarray:
        """Columns of anchor coefficients, one per ridge value."""
        coef = self._proj[:, None] / (self._vals[:, None] + np.asarray(lambdas)[None, :] * self.n)
        return self._W @ (self._U @ coef)


def krr_predict(model: KernelRidgeModel, X_query) -> np.ndarray:
    X_query = _as_2d(X_query)
    if X_query.shape[1] != model.anchors.shape[1]:
        raise ValueError(f"query has {X_query.shape[1]} features, model expects {model.anchors.shape[1]}")
    return gaussian_gram(X_query, model.anchors, model.spec) @ model.alpha
