"""Empirical speed-to-power curve by median of nearest neighbours."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class PowerCurve:
    speed: np.ndarray  # training speeds, sorted (stable, so equal speeds keep index order)
    power: np.ndarray
    index: np.ndarray  # original training position of each sorted pair
    k: int = 250

    @property
    def size(self) -> int:
        return len(self.speed)

    def __call__(self, ws) -> np.ndarray:
        return apply_power_curve(self, ws)


def fit_power_curve(ws, pw, k: int = 250) -> PowerCurve:
    ws = np.asarray(ws, dtype=float).ravel()
    pw = np.asarray(pw, dtype=float).ravel()
    if len(ws) != len(pw):
        raise ValueError(f"length mismatch: {len(ws)} speeds, {len(pw)} powers")
    if len(ws) == 0:
        raise ValueError("empty training data")
    if not (np.isfinite(ws).all() and np.isfinite(pw).all()):
        raise ValueError("non-finite training pairs")
    if k < 1:
        raise ValueError("k must be >= 1")
    order = np.argsort(ws, kind="stable")
    return PowerCurve(speed=ws[order], power=pw[order], index=order, k=int(k))


def _tie_broken(curve: PowerCurve, q: float, lo: int, hi: int, k: int) -> float:
    cand = np.arange(lo, hi)
    dist = np.abs(curve.speed[cand] - q)
    pick = cand[np.lexsort((curve.index[cand], dist))[:k]]
    return float(np.median(curve.power[pick]))


def apply_power_curve(curve: PowerCurve, ws_query, chunk: int = 2048) -> np.ndarray:
    """Median power of the ``k`` training speeds closest to each query.

    Neighbours are ranked by absolute speed difference, then by training
    position. With ``n`` training pairs each query costs ``O(log n + k)``.
    """
    q_all = np.asarray(ws_query, dtype=float)
    shape = q_all.shape
    q_all = q_all.ravel()
    if not np.isfinite(q_all).all():
        raise ValueError("non-finite query speeds")
    n = curve.size
    k = min(curve.k, n)
    width = min(2 * k, n)
    out = np.empty(len(q_all))
    for s in range(0, len(q_all), chunk):
        q = q_all[s : s + chunk]
        pos = np.searchsorted(curve.speed, q)
        start = np.clip(pos - k, 0, n - width)
        win = start[:, None] + np.arange(width)
        dist = np.abs(curve.speed[win] - q[:, None])
        # the k smallest distances always sit within k positions of the insertion point
        d_k = np.partition(dist, k - 1, axis=1)[:, k - 1]
        # slack keeps every point at distance d_k inside [lo, hi) despite rounding
        slack = 1e-12 * (np.abs(q) + d_k + 1.0)
        lo = np.searchsorted(curve.speed, q - d_k - slack, side="left")
        hi = np.searchsorted(curve.speed, q + d_k + slack, side="right")
        res = np.empty(len(q))
        plain = hi - lo == k
        if plain.any():
            rows = lo[plain][:, None] + np.arange(k)
            res[plain] = np.median(curve.power[rows], axis=1)
        for i in np.flatnonzero(~plain):
            res[i] = _tie_broken(curve, q[i], lo[i], hi[i], k)
        out[s : s + chunk] = res
    return out.reshape(shape)


def export_power_curve(curve: PowerCurve, path: str | Path, step: float = 0.1) -> None:
    """Write the curve sampled on a uniform speed grid from 0 to the largest training speed."""
    top = max(float(curve.speed[-1]), 0.0)
    grid = np.round(np.arange(0.0, top + step / 2, step), 10)
    values = apply_power_curve(curve, grid)
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["speed", "power"])
        for g, v in zip(grid, values):
            out.writerow([f"{g:.1f}", repr(float(v))])
