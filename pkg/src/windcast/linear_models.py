"""Least squares, forward stepwise selection and coordinate-descent LASSO."""
from __future__ import annotations

import csv
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numba
import numpy as np

from .data import FeatureLabel


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    selected: tuple[int, ...] | None = None  # stepwise: column indices in selection order
    lam: float | None = None
    converged: bool = True
    n_iter: int = 0

    @property
    def n_features(self) -> int:
        return len(self.weights)


def _check_xy(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ValueError("X must be a matrix")
    if len(X) != len(y) or len(y) < 1:
        raise ValueError(f"X has {len(X)} rows but y has {len(y)} entries")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in X or y")
    return X, y


def ols_fit(X, y) -> LinearModel:
    """Least squares with an unpenalized intercept (minimum-norm for rank-deficient X)."""
    X, y = _check_xy(X, y)
    x_mean, y_mean = X.mean(axis=0), y.mean()
    w = np.linalg.pinv(X - x_mean) @ (y - y_mean)
    return LinearModel(weights=w, intercept=float(y_mean - x_mean @ w))


def linear_predict(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} columns, got shape {X.shape}")
    return X @ model.weights + model.intercept


def _nrmse(pred, y, z_bar):
    return float(np.sqrt(np.mean((pred - y) ** 2)) / z_bar)


def forward_stepwise_fit(
    X_train,
    y_train,
    X_score,
    y_score,
    candidate_counts: Iterable[int] = (5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 20),
    z_bar: float = 1.0,
) -> LinearModel:
    """Greedy forward selection scored on a held-out block.

    Each step refits least squares on the training rows for every remaining
    column and keeps the one with the lowest NRMSE on the scoring rows. The
    returned model uses the prefix of the selection order whose length, among
    ``candidate_counts``, scores best. Ties go to the lowest column index.
    """
    X_train, y_train = _check_xy(X_train, y_train)
    X_score, y_score = _check_xy(X_score, y_score)
    q = X_train.shape[1]
    counts = sorted(set(int(c) for c in candidate_counts))
    if not counts or counts[0] < 1 or counts[-1] > q:
        raise ValueError(f"candidate counts {counts} must lie in [1, {q}]")

    x_mean, y_mean = X_train.mean(axis=0), y_train.mean()
    Xc = X_train - x_mean
    gram = Xc.T @ Xc
    cross = Xc.T @ (y_train - y_mean)
    Xs = X_score - x_mean

    order: list[int] = []
    prefix_weights: dict[int, np.ndarray] = {}
    prefix_scores: dict[int, float] = {}
    remaining = list(range(q))
    for step in range(1, counts[-1] + 1):
        best = None
        for j in remaining:
            cols = order + [j]
            w = np.linalg.lstsq(gram[np.ix_(cols, cols)], cross[cols], rcond=None)[0]
            score = _nrmse(Xs[:, cols] @ w + y_mean, y_score, z_bar)
            if best is None or score < best[0]:
                best = (score, j, w)
        score, j, w = best
        order.append(j)
        remaining.remove(j)
        prefix_weights[step] = w
        prefix_scores[step] = score

    k = min(counts, key=lambda c: (prefix_scores[c], c))
    weights = np.zeros(q)
    weights[order[:k]] = prefix_weights[k]
    return LinearModel(
        weights=weights,
        intercept=float(y_mean - x_mean @ weights),
        selected=tuple(order[:k]),
    )


def stepwise_order(model: LinearModel) -> tuple[int, ...]:
    return model.selected or ()


@numba.njit(cache=True)
def _cd_gram(gram, cross, lam, tol, max_iter):
    # Minimizes w'Gw - 2c'w + lam*|w|_1 with G = Xc'Xc/n, c = Xc'yc/n.
    q = gram.shape[0]
    w = np.zeros(q)
    gw = np.zeros(q)
    n_iter = 0
    converged = False
    for it in range(max_iter):
        n_iter = it + 1
        max_delta = 0.0
        for j in range(q):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            rho = 2.0 * (cross[j] - gw[j] + gjj * w[j])
            if rho > lam:
                new = (rho - lam) / (2.0 * gjj)
            elif rho < -lam:
                new = (rho + lam) / (2.0 * gjj)
            else:
                new = 0.0
            delta = new - w[j]
            if delta != 0.0:
                for k in range(q):
                    gw[k] += gram[k, j] * delta
                w[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            # stop only once the subgradient conditions hold too
            worst = 0.0
            for j in range(q):
                g = 2.0 * (cross[j] - gw[j])
                if w[j] > 0.0:
                    v = abs(g - lam)
                elif w[j] < 0.0:
                    v = abs(g + lam)
                else:
                    v = max(abs(g) - lam, 0.0)
                if v > worst:
                    worst = v
            if worst <= tol:
                converged = True
                break
    return w, n_iter, converged


def lasso_lambda_max(X, y) -> float:
    X, y = _check_xy(X, y)
    # same arithmetic as the solver's first sweep, so lam == lambda_max gives exact zeros
    cross = (X - X.mean(axis=0)).T @ (y - y.mean()) / len(y)
    return float(np.max(np.abs(2.0 * cross), initial=0.0))


def lasso_fit(X, y, lam: float, tol: float = 1e-6, max_iter: int = 10000) -> LinearModel:
    """Cyclic coordinate descent on ``mean((Xw + b - y)**2) + lam * |w|_1``.

    The intercept is not penalized. Sweeps stop when the largest coefficient
    change falls below ``tol`` and the subgradient conditions hold within
    ``tol``; otherwise a :class:`ConvergenceWarning` is issued and the last
    iterate is returned with ``converged=False``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    X, y = _check_xy(X, y)
    n = len(y)
    x_mean, y_mean = X.mean(axis=0), y.mean()
    Xc = X - x_mean
    gram = Xc.T @ Xc / n
    cross = Xc.T @ (y - y_mean) / n
    return _lasso_from_gram(gram, cross, x_mean, y_mean, lam, tol, max_iter)


def _lasso_from_gram(gram, cross, x_mean, y_mean, lam, tol, max_iter) -> LinearModel:
    w, n_iter, converged = _cd_gram(
        np.ascontiguousarray(gram), np.ascontiguousarray(cross), float(lam), float(tol), int(max_iter)
    )
    if not converged:
        warnings.warn(f"lasso did not converge in {max_iter} sweeps (lambda={lam:g})", ConvergenceWarning)
    return LinearModel(
        weights=w, intercept=float(y_mean - x_mean @ w), lam=float(lam), converged=bool(converged), n_iter=int(n_iter)
    )


def lasso_path(X, y, lambdas: Sequence[float], tol: float = 1e-6, max_iter: int = 10000) -> list[LinearModel]:
    """Independent single-lambda fits sharing one Gram matrix."""
    X, y = _check_xy(X, y)
    n = len(y)
    x_mean, y_mean = X.mean(axis=0), y.mean()
    Xc = X - x_mean
    gram = Xc.T @ Xc / n
    cross = Xc.T @ (y - y_mean) / n
    return [_lasso_from_gram(gram, cross, x_mean, y_mean, lam, tol, max_iter) for lam in lambdas]


def lasso_kkt_violation(model: LinearModel, X, y) -> float:
    """Largest violation of the subgradient optimality conditions."""
    X, y = _check_xy(X, y)
    r = y - linear_predict(model, X)
    g = 2.0 / len(y) * X.T @ r
    w, lam = model.weights, model.lam
    viol = np.where(w != 0, np.abs(g - lam * np.sign(w)), np.maximum(np.abs(g) - lam, 0.0))
    return float(viol.max(initial=0.0))


# --------------------------------------------------------------------------- #
# Coefficient-based variable scores
# --------------------------------------------------------------------------- #


@dataclass
class VariableScoreTable:
    """LASSO scores per (variable, horizon) after averaging over splits (and farms)."""

    scores: dict[tuple[str, int], float]
    n_splits: int = 0
    n_farms: int = 1
    per_split: dict[tuple[str, int, object], float] = field(default_factory=dict)

    @property
    def horizons(self) -> list[int]:
        return sorted({h for _, h in self.scores})

    @property
    def variables(self) -> list[str]:
        return list(dict.fromkeys(v for v, _ in self.scores))

    def ranking(self, horizon: int) -> list[tuple[str, float]]:
        rows = [(v, s) for (v, h), s in self.scores.items() if h == horizon]
        return sorted(rows, key=lambda r: (-r[1], r[0]))

    def top(self, horizon: int, k: int = 6) -> list[str]:
        return [v for v, _ in self.ranking(horizon)[:k]]

    def to_csv(self, path: str | Path, minutes_per_step: int = 10) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["variable", "horizon_minutes", "score"])
            for h in self.horizons:
                for v, s in self.ranking(h):
                    out.writerow([v, h * minutes_per_step, repr(float(s))])


def normalized_contributions(model: LinearModel, labels: Sequence[FeatureLabel]) -> dict[str, float]:
    """Sum over time offsets of |w| / max|w|, per channel; an all-zero model gives zeros."""
    if len(labels) != model.n_features:
        raise ValueError("labels do not match model coefficients")
    mag = np.abs(model.weights)
    top = mag.max(initial=0.0)
    norm = mag / top if top > 0 else np.zeros_like(mag)
    out: dict[str, float] = defaultdict(float)
    for lab, v in zip(labels, norm):
        out[lab.channel] += float(v)
    return dict(out)


def lasso_variable_scores(
    models: Mapping[tuple[object, int], LinearModel],
    labels: Sequence[FeatureLabel] | Mapping[tuple[object, int], Sequence[FeatureLabel]],
) -> VariableScoreTable:
    """Score variables from fitted LASSO models keyed by ``(split, horizon)``.

    ``labels`` is either one label list shared by every model or a mapping with
    the same keys as ``models``; in the latter case every list must name the
    same channels.
    """
    if not models:
        raise ValueError("no models to score")
    per_split: dict[tuple[str, int, object], float] = {}
    by_cell: dict[tuple[str, int], list[float]] = defaultdict(list)
    channels = None
    for (split, horizon), model in models.items():
        labs = labels[(split, horizon)] if isinstance(labels, Mapping) else labels
        contrib = normalized_contributions(model, labs)
        names = sorted(contrib)
        if channels is None:
            channels = names
        elif names != channels:
            raise ValueError(f"label mismatch across models: {names} vs {channels}")
        for var, val in contrib.items():
            per_split[(var, int(horizon), split)] = val
            by_cell[(var, int(horizon))].append(val)
    scores = {key: float(np.mean(vals)) for key, vals in by_cell.items()}
    n_splits = len({split for split, _ in models})
    return VariableScoreTable(scores=scores, n_splits=n_splits, per_split=per_split)


def average_over_farms(tables: Sequence[VariableScoreTable]) -> VariableScoreTable:
    if not tables:
        raise ValueError("no tables to average")
    keys = set(tables[0].scores)
    for t in tables[1:]:
        if set(t.scores) != keys:
            raise ValueError("farm tables cover different (variable, horizon) cells")
    scores = {k: float(np.mean([t.scores[k] for t in tables])) for k in tables[0].scores}
    return VariableScoreTable(scores=scores, n_splits=sum(t.n_splits for t in tables), n_farms=len(tables))
