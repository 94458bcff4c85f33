"""Baselines, NRMSE, skill scores and the cross-horizon degradation metric."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import TimeSeriesFrame
from .power_curve import PowerCurve, apply_power_curve


def persistence_forecast(y, anchors, horizon: int) -> np.ndarray:
    """Last observed value at the anchor, for every horizon."""
    y = np.asarray(y, dtype=float)
    anchors = np.asarray(anchors, dtype=int)
    if anchors.size and (anchors.min() < 0 or anchors.max() + horizon >= len(y)):
        raise IndexError("anchor plus horizon runs past the series")
    return y[anchors]


def nwp_forecast(
    frame: TimeSeriesFrame,
    nwp_channel: str,
    anchors,
    horizon: int,
    curve: PowerCurve | None = None,
) -> np.ndarray:
    """NWP value at the target time ``t + h``, optionally mapped through a power curve."""
    values = frame[nwp_channel]
    idx = np.asarray(anchors, dtype=int) + int(horizon)
    if idx.size and (idx.min() < 0 or idx.max() >= len(values)):
        raise IndexError("anchor plus horizon runs past the series")
    pred = values[idx]
    return apply_power_curve(curve, pred) if curve is not None else pred


def nrmse(y_hat, y, z_bar: float) -> float:
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if y_hat.shape != y.shape or y.size < 1:
        raise ValueError(f"shape mismatch {y_hat.shape} vs {y.shape}")
    if z_bar == 0:
        raise ValueError("normalizing mean is zero (degenerate target)")
    return float(np.sqrt(np.mean((y_hat - y) ** 2)) / z_bar)


def delta_nrmse(score: float, baseline_scores: Iterable[float]) -> float:
    """Relative improvement over the best baseline; positive means skill."""
    base = list(baseline_scores)
    if not base:
        raise ValueError("at least one baseline score is required")
    if min(base) <= 0:
        raise ValueError("baseline scores must be positive")
    best = min(base)
    return (best - score) / best


@dataclass(frozen=True)
class ScoreEntry:
    predictor: str
    split: int
    horizon: int
    nrmse: float
    n_test: int = 0


@dataclass
class ScoreReport:
    """NRMSE cells per (predictor, split, horizon) plus run metadata."""

    entries: list[ScoreEntry] = field(default_factory=list)
    z_bar: float = 1.0
    baselines: tuple[str, ...] = ()
    minutes_per_step: int = 10
    fit_log: list[dict] = field(default_factory=list)
    provenance: list[dict] = field(default_factory=list)
    importance: list[dict] = field(default_factory=list)
    power_curves: dict = field(default_factory=dict)
    models: dict | None = None
    lasso_scores: object = None

    def add(self, predictor: str, split: int, horizon: int, value: float, n_test: int = 0) -> None:
        self.entries.append(ScoreEntry(predictor, int(split), int(horizon), float(value), int(n_test)))

    @property
    def predictors(self) -> list[str]:
        return list(dict.fromkeys(e.predictor for e in self.entries))

    @property
    def splits(self) -> list[int]:
        return sorted({e.split for e in self.entries})

    @property
    def horizons(self) -> list[int]:
        return sorted({e.horizon for e in self.entries})

    def cells(self) -> dict[tuple[str, int, int], float]:
        out = {}
        for e in self.entries:
            key = (e.predictor, e.split, e.horizon)
            if key in out:
                raise ValueError(f"duplicate score cell {key}")
            out[key] = e.nrmse
        return out

    def nrmse_curve(self, predictor: str) -> dict[int, float]:
        """NRMSE per horizon, averaged over splits."""
        cells = self.cells()
        return {
            h: float(np.mean([cells[(predictor, s, h)] for s in self.splits if (predictor, s, h) in cells]))
            for h in self.horizons
            if any((predictor, s, h) in cells for s in self.splits)
        }

    def delta_curves(self, baselines: Sequence[str] | None = None) -> dict[str, dict[int, float]]:
        base = list(baselines if baselines is not None else self.baselines)
        if not base:
            return {}
        curves = {f: self.nrmse_curve(f) for f in self.predictors}
        out = {}
        for f in self.predictors:
            if f in base:
                continue
            out[f] = {h: delta_nrmse(v, [curves[b][h] for b in base]) for h, v in curves[f].items()}
        return out

    def degradations(self) -> dict[str, float]:
        return {f: nrmse_degradation(self, f) for f in self.predictors}

    def ranks(self) -> dict[str, float]:
        return rank_by_degradation(self.degradations())

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["predictor", "split", "horizon_minutes", "nrmse"])
        for e in sorted(self.entries, key=lambda e: (self.predictors.index(e.predictor), e.split, e.horizon)):
            out.writerow([e.predictor, e.split, e.horizon * self.minutes_per_step, repr(e.nrmse)])
        return buf.getvalue()

    def aggregates(self) -> dict:
        m = self.minutes_per_step
        return {
            "z_bar": self.z_bar,
            "baselines": list(self.baselines),
            "nrmse": {f: {str(h * m): v for h, v in c.items()} for f, c in ((f, self.nrmse_curve(f)) for f in self.predictors)},
            "delta_nrmse": {f: {str(h * m): v for h, v in c.items()} for f, c in self.delta_curves().items()},
            "degradation": self.degradations(),
            "rank": self.ranks(),
        }

    def aggregates_json(self) -> str:
        return json.dumps(self.aggregates(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_csv(cls, text: str, z_bar: float = 1.0, baselines: Sequence[str] = (), minutes_per_step: int = 10):
        report = cls(z_bar=z_bar, baselines=tuple(baselines), minutes_per_step=minutes_per_step)
        for row in csv.DictReader(io.StringIO(text)):
            report.add(row["predictor"], int(row["split"]), int(row["horizon_minutes"]) // minutes_per_step, float(row["nrmse"]))
        return report


def nrmse_degradation(report: ScoreReport, predictor: str) -> float:
    """Mean over (split, horizon) of the excess NRMSE over the cell-wise best predictor."""
    cells = report.cells()
    preds, splits, horizons = report.predictors, report.splits, report.horizons
    if predictor not in preds:
        raise KeyError(f"predictor {predictor!r} not in report")
    total = 0.0
    for s in splits:
        for h in horizons:
            try:
                row = [cells[(f, s, h)] for f in preds]
            except KeyError as exc:
                raise ValueError(f"report is missing cell {exc.args[0]}") from None
            total += cells[(predictor, s, h)] - min(row)
    return total / (len(splits) * len(horizons))


def rank_by_degradation(degradation: Mapping[str, float]) -> dict[str, float]:
    """Rank 1 is best; tied values share their mean rank."""
    names = list(degradation)
    values = np.array([degradation[f] for f in names])
    ranks = {}
    for f, v in zip(names, values):
        below = np.sum(values < v)
        equal = np.sum(values == v)
        ranks[f] = float(below + (equal + 1) / 2)
    return ranks


def average_rank(per_farm: Sequence[Mapping[str, float]]) -> dict[str, float]:
    """Mean over farms of the degradation rank of each predictor."""
    ranked = [rank_by_degradation(d) for d in per_farm]
    names = list(dict.fromkeys(f for r in ranked for f in r))
    return {f: float(np.mean([r[f] for r in ranked if f in r])) for f in names}
