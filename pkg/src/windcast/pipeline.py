"""Experiment configuration, the rolling evaluation protocol and report output."""
from __future__ import annotations

import json
import logging
import os
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from . import evaluation as ev
from .data import (
    TEN_MINUTES,
    DataError,
    SupervisedDataset,
    TimeSeriesFrame,
    WindowSpec,
    average_turbines,
    build_supervised,
    encode_direction,
    fit_standardizer,
    ingest_csv,
    join_frames,
    make_rolling_splits,
    mask_time_ranges,
    resample_linear,
)
from .hsic_select import HsicConfig, bahsic_rank, hsic_importance
from .kernel_models import KernelRidgeModel, KernelSpec, NystromPath, krr_predict, nystrom_krr_fit, sample_anchors, sq_distances
from .linear_models import (
    LinearModel,
    forward_stepwise_fit,
    lasso_fit,
    lasso_path,
    lasso_variable_scores,
    linear_predict,
    normalized_contributions,
    ols_fit,
)
from .power_curve import export_power_curve, fit_power_curve
from .synthetic import SyntheticFarmSpec, synth_generate

log = logging.getLogger(__name__)

SEED_ENV = "WINDCAST_SEED"
MODEL_KINDS = ("lasso", "stepwise", "krr")
BASELINE_KINDS = ("persistence", "nwp")


class ExperimentError(RuntimeError):
    """A failure inside the experiment, tagged with where it happened."""


def geometric_grid(lo: float, hi: float, count: int) -> np.ndarray:
    """``count`` log-uniformly spaced values from ``lo`` to ``hi`` inclusive."""
    if not (0 < lo < hi) or count < 2:
        raise ValueError(f"invalid grid bounds ({lo}, {hi}, {count})")
    return np.geomspace(lo, hi, int(count))


def _grid(value) -> list[float]:
    if isinstance(value, dict):
        return [float(v) for v in geometric_grid(value["lo"], value["hi"], value["count"])]
    if np.isscalar(value):
        return [float(value)]
    return [float(v) for v in value]


# --------------------------------------------------------------------------- #
# Configuration
# --------------------------------------------------------------------------- #


def default_predictors() -> dict[str, dict]:
    return {
        "lasso": {"lambdas": {"lo": 1e-5, "hi": 1.0, "count": 30}},
        "stepwise": {"counts": [5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 20]},
        "krr": {
            "gammas": {"lo": 1e-6, "hi": 1e-3, "count": 30},
            "lambdas": {"lo": 1e-4, "hi": 5.0, "count": 30},
            "p": 300,
        },
        "persistence": {},
        "nwp": {},
    }


@dataclass
class SelectionConfig:
    method: str = "bahsic"  # bahsic | lasso | none
    top_k: int = 4
    fraction: float = 0.1
    p: int = 100
    p_prime: int = 100

    def __post_init__(self):
        if self.method not in ("bahsic", "lasso", "none"):
            raise ValueError(f"unknown selection method {self.method!r}")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass
class DataConfig:
    synthetic: SyntheticFarmSpec | None = None
    turbines: list[str] = field(default_factory=list)
    nwp: list[str] = field(default_factory=list)
    channels: dict[str, Any] = field(default_factory=dict)
    direction_channels: list[str] = field(default_factory=list)
    exclude: list[tuple[str, str]] = field(default_factory=list)
    base_dir: str = "."


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=lambda: DataConfig(synthetic=SyntheticFarmSpec()))
    window: WindowSpec = field(default_factory=WindowSpec)
    split_sizes: tuple[int, int, int] = (10000, 10000, 10000)
    target: str = "WS"
    target_kind: str = "wind_speed"  # wind_speed | wind_power
    speed_channel: str = "WS"
    nwp_channel: str = "F100"
    power_modes: tuple[str, ...] = ("direct", "indirect")
    power_curve_k: int = 250
    horizons: tuple[int, ...] | None = None
    predictors: dict[str, dict] = field(default_factory=default_predictors)
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    lasso_tol: float = 1e-6
    lasso_max_iter: int = 200000
    seed: int = 0

    def __post_init__(self):
        if self.target_kind not in ("wind_speed", "wind_power"):
            raise ValueError(f"unknown target kind {self.target_kind!r}")
        for mode in self.power_modes:
            if mode not in ("direct", "indirect"):
                raise ValueError(f"unknown power mode {mode!r}")
        for name, opts in self.predictors.items():
            kind = opts.get("kind", name)
            if kind not in MODEL_KINDS + BASELINE_KINDS:
                raise ValueError(f"unknown predictor kind {kind!r}")
            for key in ("lambdas", "gammas", "counts"):
                if key in opts and not _grid(opts[key]):
                    raise ValueError(f"empty grid {key!r} for predictor {name!r}")

    @property
    def horizon_list(self) -> list[int]:
        return list(self.horizons) if self.horizons else list(range(1, self.window.horizon_count + 1))

    @property
    def is_power(self) -> bool:
        return self.target_kind == "wind_power"

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path = ".") -> "ExperimentConfig":
        doc = dict(doc)
        data_doc = dict(doc.pop("data", {}))
        synth = data_doc.pop("synthetic", None)
        data = DataConfig(
            synthetic=SyntheticFarmSpec.from_dict(synth) if synth is not None else None,
            base_dir=str(base_dir),
            **{k: v for k, v in data_doc.items() if k != "base_dir"},
        )
        if data.synthetic is None and not data.turbines:
            raise ValueError("data section needs either 'synthetic' or 'turbines'")
        kwargs: dict[str, Any] = {"data": data}
        if "window" in doc:
            kwargs["window"] = WindowSpec(**doc.pop("window"))
        if "selection" in doc:
            kwargs["selection"] = SelectionConfig(**doc.pop("selection"))
        if "split_sizes" in doc:
            kwargs["split_sizes"] = tuple(int(s) for s in doc.pop("split_sizes"))
        for key in ("power_modes", "horizons"):
            if doc.get(key) is not None:
                kwargs[key] = tuple(doc.pop(key))
        kwargs.update(doc)
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)


def apply_seed_override(config: ExperimentConfig) -> ExperimentConfig:
    """Honour the ``WINDCAST_SEED`` environment variable."""
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return config
    seed = int(raw)
    data = config.data
    if data.synthetic is not None:
        data = replace(data, synthetic=replace(data.synthetic, seed=seed))
    return replace(config, seed=seed, data=data)


# --------------------------------------------------------------------------- #
# Data preparation
# --------------------------------------------------------------------------- #


def load_frame(config: ExperimentConfig) -> TimeSeriesFrame:
    data = config.data
    if data.synthetic is not None:
        frame = synth_generate(data.synthetic)
        directions = data.direction_channels or (["DIR"] if "DIR" in frame else [])
    else:
        base = Path(data.base_dir)
        roles = {name: spec for name, spec in data.channels.items()}

        def schema_for(path):
            header = list(pd.read_csv(base / path, nrows=0).columns)[1:]
            return {h: roles[h] for h in header if h in roles}

        turbines = [ingest_csv(base / p, schema_for(p)) for p in data.turbines]
        frame = average_turbines(turbines) if len(turbines) > 1 else turbines[0]
        if frame.cadence != TEN_MINUTES:
            frame = resample_linear(frame, TEN_MINUTES)
        parts = [frame]
        for p in data.nwp:
            parts.append(resample_linear(ingest_csv(base / p, schema_for(p)), TEN_MINUTES))
        frame = join_frames(parts) if len(parts) > 1 else frame
        directions = data.direction_channels
    for name in directions:
        frame = encode_direction(frame, name)
    if data.exclude:
        frame = mask_time_ranges(frame, data.exclude)
    return frame


# --------------------------------------------------------------------------- #
# Per-cell fitting
# --------------------------------------------------------------------------- #


def _seed(*parts) -> int:
    words = [p if isinstance(p, int) else zlib.crc32(str(p).encode()) for p in parts]
    return int(np.random.SeedSequence(words).generate_state(1)[0])


@dataclass
class _Cell:
    """Standardized train / validation / train+val / test views of one dataset."""

    ds: SupervisedDataset
    rows: dict[str, np.ndarray]
    x_std: Any
    y_std: Any
    z_bar: float

    def X(self, part, cols=None):
        X = self.x_std.transform(self.ds.X[self.rows[part]])
        return X if cols is None else X[:, cols]

    def y(self, part):
        return self.y_std.transform(self.ds.y[self.rows[part]][:, None])[:, 0]

    def y_raw(self, part):
        return self.ds.y[self.rows[part]]

    def unscale(self, pred):
        return self.y_std.inverse_transform(np.asarray(pred)[:, None])[:, 0]

    def score(self, pred_std, part) -> float:
        return ev.nrmse(self.unscale(pred_std), self.y_raw(part), self.z_bar)


def _make_cell(ds: SupervisedDataset, split, z_bar: float, anchors=None) -> _Cell:
    if anchors is not None:
        ds = ds.subset(np.isin(ds.sample_anchors, anchors))
    rows = {
        "train": np.flatnonzero(ds.rows_within(split.train.start, split.train.stop)),
        "val": np.flatnonzero(ds.rows_within(split.val.start, split.val.stop)),
        "train_val": np.flatnonzero(ds.rows_within(split.train.start, split.val.stop)),
        "test": np.flatnonzero(ds.rows_within(split.test.start, split.test.stop)),
    }
    for part in ("train", "val", "test"):
        if rows[part].size == 0:
            raise DataError(f"no complete samples in the {part} block")
    x_std = fit_standardizer(ds.X, rows["train"], fitted_on="train")
    y_std = fit_standardizer(ds.Y, rows["train"], fitted_on="train")
    return _Cell(ds, rows, x_std, y_std, z_bar)


@dataclass
class _Fitted:
    model: Any  # refit on train+val; maps standardized X to standardized y
    params: dict
    val_score: float
    n_train: int
    n_refit: int
    selection_model: Any = None  # model fitted on train only with the chosen parameters

    def predict(self, X) -> np.ndarray:
        if isinstance(self.model, KernelRidgeModel):
            return krr_predict(self.model, X)
        return linear_predict(self.model, X)


def _fit_lasso(cell: _Cell, opts: dict, config: ExperimentConfig, cols=None) -> _Fitted:
    lambdas = _grid(opts.get("lambdas", {"lo": 1e-5, "hi": 1.0, "count": 30}))
    Xtr, ytr, Xva = cell.X("train", cols), cell.y("train"), cell.X("val", cols)
    models = lasso_path(Xtr, ytr, lambdas, tol=config.lasso_tol, max_iter=config.lasso_max_iter)
    scores = [cell.score(linear_predict(m, Xva), "val") for m in models]
    best = int(np.argmin(scores))
    lam = lambdas[best]
    final = lasso_fit(cell.X("train_val", cols), cell.y("train_val"), lam, tol=config.lasso_tol, max_iter=config.lasso_max_iter)
    return _Fitted(
        model=final,
        params={"lambda": lam},
        val_score=scores[best],
        n_train=len(ytr),
        n_refit=len(cell.rows["train_val"]),
        selection_model=models[best],
    )


def _fit_stepwise(cell: _Cell, opts: dict, config: ExperimentConfig, cols=None) -> _Fitted:
    Xtr, ytr = cell.X("train", cols), cell.y("train")
    q = Xtr.shape[1]
    counts = [c for c in _grid(opts.get("counts", [5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 20])) if c <= q] or [q]
    Xva, yva = cell.X("val", cols), cell.y("val")
    half = max(1, len(yva) // 2)  # validation rows are in time order
    model = forward_stepwise_fit(Xtr, ytr, Xva[:half], yva[:half], [int(c) for c in counts])
    chosen = list(model.selected)
    val_score = cell.score(linear_predict(model, Xva), "val")
    sub = ols_fit(cell.X("train_val", cols)[:, chosen], cell.y("train_val"))
    weights = np.zeros(q)
    weights[chosen] = sub.weights
    final = LinearModel(weights=weights, intercept=sub.intercept, selected=tuple(chosen))
    return _Fitted(
        model=final,
        params={"count": len(chosen)},
        val_score=val_score,
        n_train=len(ytr),
        n_refit=len(cell.rows["train_val"]),
        selection_model=model,
    )


def _fit_krr(cell: _Cell, opts: dict, config: ExperimentConfig, cols, seed: int) -> _Fitted:
    gammas = _grid(opts.get("gammas", {"lo": 1e-6, "hi": 1e-3, "count": 30}))
    lambdas = _grid(opts.get("lambdas", {"lo": 1e-4, "hi": 5.0, "count": 30}))
    Xtr, ytr, Xva = cell.X("train", cols), cell.y("train"), cell.X("val", cols)
    p = min(int(opts.get("p", 300)), len(Xtr))
    idx = sample_anchors(len(Xtr), p, seed)
    D_tr = sq_distances(Xtr, Xtr[idx])
    D_va = sq_distances(Xva, Xtr[idx])
    yva = cell.y_raw("val")
    best = (np.inf, None, None)
    for g in gammas:
        path = NystromPath(Xtr, ytr, KernelSpec(g), p=p, seed=seed, sq_dist=D_tr, idx=idx)
        preds = np.exp(-g * D_va) @ path.alphas(lambdas)
        preds = preds * cell.y_std.std[0] + cell.y_std.mean[0]
        rmse = np.sqrt(np.mean((preds - yva[:, None]) ** 2, axis=0)) / cell.z_bar
        j = int(np.argmin(rmse))
        if rmse[j] < best[0]:
            best = (float(rmse[j]), g, lambdas[j])
    score, g, lam = best
    final = nystrom_krr_fit(cell.X("train_val", cols), cell.y("train_val"), KernelSpec(g), lam, p=p, seed=seed)
    return _Fitted(
        model=final,
        params={"gamma": g, "lambda": lam, "p": p},
        val_score=score,
        n_train=len(ytr),
        n_refit=len(cell.rows["train_val"]),
        selection_model=final,
    )


# --------------------------------------------------------------------------- #
# Experiment
# --------------------------------------------------------------------------- #


def _needs_selection(config: ExperimentConfig) -> bool:
    return config.selection.method != "none" and any(
        opts.get("kind", name) == "krr" for name, opts in config.predictors.items()
    )


def select_split_variables(
    frame: TimeSeriesFrame, config: ExperimentConfig, split, split_id: int, target: str
) -> tuple[list[str], dict]:
    """BAHSIC on the training block with all horizons as a joint output."""
    sel = config.selection
    ds = build_supervised(frame, config.window, target, "all")
    rows = np.flatnonzero(ds.rows_within(split.train.start, split.train.stop))
    if rows.size < 2:
        raise DataError("not enough training samples for variable selection")
    X = fit_standardizer(ds.X, rows).transform(ds.X[rows])
    Y = fit_standardizer(ds.Y, rows).transform(ds.Y[rows])
    groups = {v: ds.columns_of([v]) for v in ds.variables()}
    hcfg = HsicConfig(p=sel.p, p_prime=sel.p_prime, seed=_seed(config.seed, split_id, "bahsic", target))
    if sel.top_k >= len(groups):
        survivors, trace = list(groups), None
    else:
        trace = bahsic_rank(X, Y, groups, hcfg, elimination_fraction=sel.fraction, stop_at=sel.top_k)
        survivors = list(trace.survivors)
    scores = hsic_importance(X, Y, groups, survivors, hcfg) if len(survivors) > 1 else {survivors[0]: 1.0}
    info = {
        "trace": trace,
        "scores": scores,
        "max_index": int(ds.last_target_index[rows].max()),
    }
    return survivors, info


def baseline_names(config: ExperimentConfig) -> list[str]:
    """Report names of the configured baselines (power targets get a mode suffix)."""
    modes = config.power_modes if config.is_power else ("direct",)
    names = []
    for name, opts in config.predictors.items():
        kind = opts.get("kind", name)
        if kind not in BASELINE_KINDS:
            continue
        if not config.is_power:
            names.append(name)
            continue
        if kind == "persistence" and "direct" in modes:
            names.append(f"{name}_direct")
        if "indirect" in modes:
            names.append(f"{name}_indirect")
    return names


def run_selection(config: ExperimentConfig, frame: TimeSeriesFrame | None = None) -> ev.ScoreReport:
    """Variable selection only; returns a report carrying importance rows and provenance."""
    frame = load_frame(config) if frame is None else frame
    method = config.selection.method
    if method == "none":
        raise ExperimentError("selection method is 'none'; nothing to select")
    if method == "lasso":
        lasso = {n: o for n, o in config.predictors.items() if o.get("kind", n) == "lasso"} or {"lasso": {}}
        name, opts = next(iter(lasso.items()))
        return run_experiment(replace(config, predictors={name: opts}, power_modes=("direct",)), frame)
    plan = make_rolling_splits(len(frame), config.split_sizes)
    report = ev.ScoreReport()
    targets = [config.target]
    if config.is_power and "indirect" in config.power_modes:
        targets.append(config.speed_channel)
    for split_id, split in enumerate(plan):
        for tgt in targets:
            try:
                _, info = select_split_variables(frame, config, split, split_id, tgt)
            except Exception as exc:
                raise ExperimentError(f"split {split_id}, selection for {tgt}: {exc}") from exc
            report.provenance.append(
                {"split": split_id, "horizon": 0, "object": f"bahsic[{tgt}]",
                 "max_index": info["max_index"], "test_start": split.test.start}
            )
            for v, sc in info["scores"].items():
                report.importance.append(
                    {"method": "hsic", "target": tgt, "variable": v, "split": split_id, "horizon": 0, "score": sc}
                )
    return report


def run_experiment(config: ExperimentConfig, frame: TimeSeriesFrame | None = None, keep_models: bool = False):
    """Rolling-origin evaluation of every configured predictor; returns a ScoreReport."""
    if not config.predictors:
        raise ExperimentError("empty predictor set")
    frame = load_frame(config) if frame is None else frame
    if config.target not in frame:
        raise ExperimentError(f"target channel {config.target!r} not in data")
    plan = make_rolling_splits(len(frame), config.split_sizes)
    z_bar = float(np.nanmean(frame[config.target]))
    z_speed = float(np.nanmean(frame[config.speed_channel])) if config.is_power else z_bar

    modes = config.power_modes if config.is_power else ("direct",)
    models = {n: o for n, o in config.predictors.items() if o.get("kind", n) in MODEL_KINDS}
    baselines = {n: o for n, o in config.predictors.items() if o.get("kind", n) in BASELINE_KINDS}

    def label(name, mode):
        return f"{name}_{mode}" if config.is_power else name

    report = ev.ScoreReport(z_bar=z_bar, baselines=tuple(baseline_names(config)))
    if keep_models:
        report.models = {}
    lasso_for_scores: dict[tuple[int, int], LinearModel] = {}
    lasso_labels: dict[tuple[int, int], tuple] = {}

    def record(split_id, h, obj, max_index, split):
        report.provenance.append(
            {"split": split_id, "horizon": h, "object": obj, "max_index": int(max_index), "test_start": split.test.start}
        )

    for split_id, split in enumerate(plan):
        ctx = f"split {split_id}"
        try:
            curve = None
            if config.is_power and ("indirect" in modes):
                ws, pw = frame[config.speed_channel], frame[config.target]
                idx = np.arange(split.train.start, split.train.stop)
                ok = idx[np.isfinite(ws[idx]) & np.isfinite(pw[idx])]
                curve = fit_power_curve(ws[ok], pw[ok], config.power_curve_k)
                report.power_curves[split_id] = curve
                record(split_id, 0, "power_curve", ok.max(), split)

            selected: dict[str, list[str]] = {}
            if _needs_selection(config) and config.selection.method == "bahsic":
                targets = []
                if "direct" in modes:
                    targets.append(config.target)
                if config.is_power and "indirect" in modes:
                    targets.append(config.speed_channel)
                for tgt in targets:
                    survivors, info = select_split_variables(frame, config, split, split_id, tgt)
                    selected[tgt] = survivors
                    record(split_id, 0, f"bahsic[{tgt}]", info["max_index"], split)
                    for v, s in info["scores"].items():
                        report.importance.append(
                            {"method": "hsic", "target": tgt, "variable": v, "split": split_id, "horizon": 0, "score": s}
                        )
        except Exception as exc:
            raise ExperimentError(f"{ctx}: {exc}") from exc

        for h in config.horizon_list:
            ctx = f"split {split_id}, horizon {h}"
            try:
                ds = build_supervised(frame, config.window, config.target, h)
                anchors = ds.sample_anchors
                ds_ws = None
                if config.is_power and "indirect" in modes:
                    ds_ws = build_supervised(frame, config.window, config.speed_channel, h)
                    anchors = np.intersect1d(anchors, ds_ws.sample_anchors)
                cell = _make_cell(ds, split, z_bar, anchors)
                cell_ws = _make_cell(ds_ws, split, z_speed, anchors) if ds_ws is not None else None
                te_anchors = cell.ds.sample_anchors[cell.rows["test"]]
                y_test = cell.y_raw("test")
                assert cell_ws is None or np.array_equal(te_anchors, cell_ws.ds.sample_anchors[cell_ws.rows["test"]])
                for c, tag in ((cell, "target"), (cell_ws, "speed")):
                    if c is not None:
                        top = int(c.ds.last_target_index[c.rows["train"]].max())
                        record(split_id, h, f"standardizer[{tag}]", top, split)
            except Exception as exc:
                raise ExperimentError(f"{ctx}: {exc}") from exc

            for name, opts in models.items():
                kind = opts.get("kind", name)
                for mode in modes:
                    pred_name = label(name, mode)
                    ctx = f"split {split_id}, horizon {h}, predictor {pred_name}"
                    try:
                        c = cell if mode == "direct" else cell_ws
                        tgt = config.target if mode == "direct" else config.speed_channel
                        cols = None
                        if kind == "krr" and config.selection.method == "bahsic":
                            cols = c.ds.columns_of(selected[tgt])
                        elif kind == "krr" and config.selection.method == "lasso":
                            lasso_model = _fit_lasso(c, models.get("lasso", {}), config).selection_model
                            contrib = normalized_contributions(lasso_model, c.ds.feature_labels)
                            keep = sorted(contrib, key=lambda v: (-contrib[v], v))[: config.selection.top_k]
                            cols = c.ds.columns_of(keep)
                        seed = _seed(config.seed, split_id, h, pred_name)
                        if kind == "lasso":
                            fitted = _fit_lasso(c, opts, config, cols)
                        elif kind == "stepwise":
                            fitted = _fit_stepwise(c, opts, config, cols)
                        else:
                            fitted = _fit_krr(c, opts, config, cols, seed)
                        pred = c.unscale(fitted.predict(c.X("test", cols)))
                        if mode == "indirect":
                            pred = curve(pred)
                        report.add(pred_name, split_id, h, ev.nrmse(pred, y_test, z_bar), len(y_test))
                        report.fit_log.append(
                            {
                                "predictor": pred_name, "split": split_id, "horizon": h,
                                "params": fitted.params, "val_nrmse": fitted.val_score,
                                "n_train": fitted.n_train, "n_refit": fitted.n_refit,
                                "n_features": int(c.ds.X.shape[1] if cols is None else len(cols)),
                            }
                        )
                        tv = c.rows["train_val"]
                        record(split_id, h, f"{pred_name}:hyperparameters", c.ds.last_target_index[c.rows["val"]].max(), split)
                        record(split_id, h, f"{pred_name}:refit", c.ds.last_target_index[tv].max(), split)
                        if kind == "lasso" and mode == "direct":
                            lasso_for_scores[(split_id, h)] = fitted.selection_model
                            lasso_labels[(split_id, h)] = c.ds.feature_labels
                        if report.models is not None:
                            report.models[(pred_name, split_id, h)] = (fitted, cols, c.x_std, c.y_std)
                    except Exception as exc:
                        raise ExperimentError(f"{ctx}: {exc}") from exc

            for name, opts in baselines.items():
                kind = opts.get("kind", name)
                ctx = f"split {split_id}, horizon {h}, predictor {name}"
                try:
                    if kind == "persistence":
                        if not config.is_power:
                            report.add(name, split_id, h, ev.nrmse(ev.persistence_forecast(frame[config.target], te_anchors, h), y_test, z_bar), len(y_test))
                        else:
                            if "direct" in modes:
                                pred = ev.persistence_forecast(frame[config.target], te_anchors, h)
                                report.add(label(name, "direct"), split_id, h, ev.nrmse(pred, y_test, z_bar), len(y_test))
                            if "indirect" in modes:
                                pred = curve(ev.persistence_forecast(frame[config.speed_channel], te_anchors, h))
                                report.add(label(name, "indirect"), split_id, h, ev.nrmse(pred, y_test, z_bar), len(y_test))
                    else:
                        channel = opts.get("channel", config.nwp_channel)
                        if not config.is_power:
                            pred = ev.nwp_forecast(frame, channel, te_anchors, h)
                            report.add(name, split_id, h, ev.nrmse(pred, y_test, z_bar), len(y_test))
                        elif "indirect" in modes:
                            pred = ev.nwp_forecast(frame, channel, te_anchors, h, curve)
                            report.add(label(name, "indirect"), split_id, h, ev.nrmse(pred, y_test, z_bar), len(y_test))
                except Exception as exc:
                    raise ExperimentError(f"{ctx}: {exc}") from exc

    if lasso_for_scores:
        table = lasso_variable_scores(lasso_for_scores, lasso_labels)
        for (var, h, split_id), val in sorted(table.per_split.items(), key=lambda kv: (kv[0][2], kv[0][1], kv[0][0])):
            report.importance.append(
                {"method": "lasso", "target": config.target, "variable": var, "split": split_id, "horizon": h, "score": val}
            )
        report.lasso_scores = table
    return report


def check_provenance(report: ev.ScoreReport) -> list[dict]:
    """Provenance records that touched a test observation (empty when the protocol is clean)."""
    return [r for r in report.provenance if r["max_index"] >= r["test_start"]]


# --------------------------------------------------------------------------- #
# Output
# --------------------------------------------------------------------------- #


def importance_rows(report: ev.ScoreReport) -> list[tuple]:
    """Importance scores averaged over splits, keyed by (method, target, variable, horizon)."""
    acc: dict[tuple, list[float]] = {}
    for r in report.importance:
        acc.setdefault((r["method"], r["target"], r["variable"], r["horizon"]), []).append(r["score"])
    rows = [(m, t, v, h, float(np.mean(s))) for (m, t, v, h), s in acc.items()]
    return sorted(rows, key=lambda r: (r[0], r[1], r[3], -r[4], r[2]))


def write_importance(report: ev.ScoreReport, out_dir: str | Path) -> Path:
    path = Path(out_dir) / "importance.csv"
    lines = ["method,target,variable,horizon_minutes,score"]
    for m, t, v, h, s in importance_rows(report):
        lines.append(f"{m},{t},{v},{h * report.minutes_per_step if h else ''},{s!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_report(report: ev.ScoreReport, out_dir: str | Path, formats: Sequence[str] = ("csv", "json")) -> list[Path]:
    """Write scores.csv, aggregates.json, and importance.csv / powercurve.csv when available."""
    if not report.entries:
        raise ExperimentError("report has no predictors; nothing to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out / "scores.csv"
        path.write_text(report.to_csv())
        written.append(path)
    if "json" in formats:
        path = out / "aggregates.json"
        path.write_text(report.aggregates_json())
        written.append(path)
    if report.importance:
        written.append(write_importance(report, out))
    if report.power_curves:
        path = out / "powercurve.csv"
        first = min(report.power_curves)
        export_power_curve(report.power_curves[first], path)
        written.append(path)
    return written


def model_document(report: ev.ScoreReport) -> dict:
    """JSON-ready dump of the refit models kept by ``run_experiment(keep_models=True)``."""
    doc = []
    for (name, split_id, h), (fitted, cols, x_std, y_std) in sorted(report.models.items()):
        model = fitted.model
        entry = {
            "predictor": name, "split": split_id, "horizon": h, "params": fitted.params,
            "columns": None if cols is None else [int(c) for c in cols],
            "x_mean": x_std.mean.tolist(), "x_std": x_std.std.tolist(),
            "y_mean": float(y_std.mean[0]), "y_std": float(y_std.std[0]),
        }
        if isinstance(model, KernelRidgeModel):
            entry["model"] = json.loads(model.to_json())
        else:
            entry["model"] = {"kind": "linear", "weights": model.weights.tolist(), "intercept": model.intercept}
        doc.append(entry)
    return {"models": doc}
