"""HSIC dependence estimates and backward elimination (BAHSIC)."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .kernel_models import KernelSpec, gaussian_gram, sample_anchors, sym_inv_sqrt


@dataclass(frozen=True)
class HsicConfig:
    """Kernel bandwidths and Nystrom anchor counts.

    A ``None`` bandwidth means ``1 / (2 d)`` with ``d`` the dimension of the
    kernel's input (suited to standardized data).
    """

    gamma_x: float | None = None
    gamma_y: float | None = None
    p: int = 100
    p_prime: int = 100
    seed: int | None = 0

    def __post_init__(self):
        for g in (self.gamma_x, self.gamma_y):
            if g is not None and not g > 0:
                raise ValueError("bandwidths must be positive")
        if self.p < 1 or self.p_prime < 1:
            raise ValueError("anchor counts must be >= 1")


def _as_2d(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return A[:, None] if A.ndim == 1 else A


def _gamma(value: float | None, dim: int) -> float:
    return value if value is not None else 1.0 / (2.0 * dim)


def hsic_exact(X, Y, config: HsicConfig = HsicConfig()) -> float:
    """Biased estimate ``Trace(K H G H) / n^2`` with ``H = I - 11'/n``."""
    X, Y = _as_2d(X), _as_2d(Y)
    n = len(X)
    if n < 2 or len(Y) != n:
        raise ValueError("X and Y need the same number of rows, at least 2")
    K = gaussian_gram(X, X, KernelSpec(_gamma(config.gamma_x, X.shape[1])))
    G = gaussian_gram(Y, Y, KernelSpec(_gamma(config.gamma_y, Y.shape[1])))
    Kc = K - K.mean(axis=0) - K.mean(axis=1)[:, None] + K.mean()
    return float(np.sum(Kc * G) / n**2)


def nystrom_features(Z, gamma: float, idx) -> np.ndarray:
    """Centered feature map ``H Knp Kpp^{-1/2}``."""
    Z = _as_2d(Z)
    spec = KernelSpec(gamma)
    Knp = gaussian_gram(Z, Z[idx], spec)
    F = Knp @ sym_inv_sqrt(Knp[idx])
    return F - F.mean(axis=0)


def _hsic_from_features(phi, psi) -> float:
    n = len(phi)
    return float(np.sum((phi.T @ psi / n) ** 2))


def nystrom_hsic(X, Y, config: HsicConfig = HsicConfig()) -> float:
    """``||Phi' Psi / n||_F^2`` with independently sampled input and output anchors."""
    X, Y = _as_2d(X), _as_2d(Y)
    n = len(X)
    if len(Y) != n or n < 2:
        raise ValueError("X and Y need the same number of rows, at least 2")
    rng = np.random.default_rng(config.seed)
    idx_x = sample_anchors(n, config.p, rng)
    idx_y = sample_anchors(n, config.p_prime, rng)
    phi = nystrom_features(X, _gamma(config.gamma_x, X.shape[1]), idx_x)
    psi = nystrom_features(Y, _gamma(config.gamma_y, Y.shape[1]), idx_y)
    return _hsic_from_features(phi, psi)


class _HsicEvaluator:
    """HSIC between column subsets of X and a fixed Y.

    Output features and anchor indices are computed once, so every candidate
    subset is scored against the same random anchors.
    """

    def __init__(self, X, Y, config: HsicConfig, method: str):
        self.X, self.Y = _as_2d(X), _as_2d(Y)
        self.config = config
        n = len(self.X)
        if method == "auto":
            method = "nystrom" if max(config.p, config.p_prime) < n else "exact"
        self.method = method
        if method == "nystrom":
            rng = np.random.default_rng(config.seed)
            self.idx_x = sample_anchors(n, min(config.p, n), rng)
            idx_y = sample_anchors(n, min(config.p_prime, n), rng)
            self.psi = nystrom_features(self.Y, _gamma(config.gamma_y, self.Y.shape[1]), idx_y)
        elif method != "exact":
            raise ValueError(f"unknown HSIC method {method!r}")

    def __call__(self, cols) -> float:
        if len(cols) == 0:
            return 0.0  # constant input kernel
        Xs = self.X[:, cols]
        if self.method == "exact":
            return hsic_exact(Xs, self.Y, self.config)
        phi = nystrom_features(Xs, _gamma(self.config.gamma_x, Xs.shape[1]), self.idx_x)
        return _hsic_from_features(phi, self.psi)


def _group_columns(groups: Mapping[str, Sequence[int]], names) -> np.ndarray:
    return np.concatenate([np.asarray(groups[v], dtype=int) for v in names]) if names else np.empty(0, int)


@dataclass
class EliminationTrace:
    rounds: list[tuple[tuple[str, ...], float]]
    survivors: tuple[str, ...]
    candidate_hsic: list[dict[str, float]] = field(default_factory=list)

    @property
    def final_ranking(self) -> list[str]:
        """Variables from least to most important."""
        order = [v for names, _ in self.rounds for v in names]
        return order + list(self.survivors)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["variable", "round", "hsic", "score"])
            for r, (names, value) in enumerate(self.rounds, start=1):
                for v in names:
                    out.writerow([v, r, repr(value), ""])
            for v in self.survivors:
                out.writerow([v, "", "", ""])


def bahsic_rank(
    X,
    Y,
    groups: Mapping[str, Sequence[int]],
    config: HsicConfig = HsicConfig(),
    elimination_fraction: float = 0.1,
    stop_at: int = 5,
    method: str = "auto",
) -> EliminationTrace:
    """Backward elimination of column groups by HSIC.

    Each round scores every remaining group by the HSIC of the data with that
    group left out, then drops the ``ceil(fraction * remaining)`` groups whose
    absence keeps HSIC highest. Ties favour removing the later group.
    """
    if not 0 < elimination_fraction < 1:
        raise ValueError("elimination fraction must lie in (0, 1)")
    remaining = list(groups)
    if stop_at < 1 or stop_at >= len(remaining):
        raise ValueError(f"stop_at={stop_at} must lie in [1, {len(remaining) - 1}]")
    evaluate = _HsicEvaluator(X, Y, config, method)
    rounds: list[tuple[tuple[str, ...], float]] = []
    candidates: list[dict[str, float]] = []
    while len(remaining) > stop_at:
        values = {v: evaluate(_group_columns(groups, [u for u in remaining if u != v])) for v in remaining}
        count = min(max(1, math.ceil(elimination_fraction * len(remaining))), len(remaining) - stop_at)
        pos = {v: i for i, v in enumerate(remaining)}
        doomed = sorted(remaining, key=lambda v: (-values[v], -pos[v]))[:count]
        remaining = [v for v in remaining if v not in doomed]
        after = values[doomed[0]] if count == 1 else evaluate(_group_columns(groups, remaining))
        rounds.append((tuple(doomed), after))
        candidates.append(values)
    return EliminationTrace(rounds=rounds, survivors=tuple(remaining), candidate_hsic=candidates)


def hsic_importance(
    X,
    Y,
    groups: Mapping[str, Sequence[int]],
    variables: Sequence[str],
    config: HsicConfig = HsicConfig(),
    method: str = "auto",
) -> dict[str, float]:
    """``1 - HSIC(without v) / max_u HSIC(without u)`` over the retained variables."""
    variables = list(variables)
    if not variables:
        raise ValueError("empty variable set")
    evaluate = _HsicEvaluator(X, Y, config, method)
    left_out = {v: evaluate(_group_columns(groups, [u for u in variables if u != v])) for v in variables}
    top = max(left_out.values())
    if top <= 0:
        return {v: 0.0 for v in variables}
    return {v: 1.0 - val / top for v, val in left_out.items()}


def average_scores(tables: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Mean score per variable over the tables that contain it."""
    keys = list(dict.fromkeys(k for t in tables for k in t))
    return {k: float(np.mean([t[k] for t in tables if k in t])) for k in keys}
