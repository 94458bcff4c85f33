"""Time-series ingestion, preprocessing, windowing and rolling splits.

Missing values are represented as NaN throughout.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

TEN_MINUTES = timedelta(minutes=10)


class DataError(ValueError):
    """Raised for malformed inputs to the data layer."""


class Role(str, enum.Enum):
    INSITU = "insitu"
    NWP = "nwp"
    TARGET = "target"

    @classmethod
    def parse(cls, value: "Role | str") -> "Role":
        if isinstance(value, Role):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"insitu": cls.INSITU, "nwp": cls.NWP, "ecmwf": cls.NWP, "target": cls.TARGET}
        if key not in aliases:
            raise DataError(f"unknown channel role {value!r}")
        return aliases[key]

    @property
    def observed(self) -> bool:
        # Target channels are measured on site, so their past is usable like any in-situ channel.
        return self is not Role.NWP


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Channel:
    name: str
    role: Role
    values: np.ndarray
    unit: str = ""

    def __post_init__(self):
        object.__setattr__(self, "role", Role.parse(self.role))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 1:
            raise DataError(f"channel {self.name!r} must be one-dimensional")


@dataclass(frozen=True)
class TimeSeriesFrame:
    """Uniformly sampled multi-channel series."""

    start_time: datetime
    cadence: timedelta
    channels: tuple[Channel, ...]

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        if self.cadence <= timedelta(0):
            raise DataError("cadence must be strictly positive")
        names = [c.name for c in self.channels]
        if len(set(names)) != len(names):
            raise DataError(f"duplicate channel names in {names}")
        lengths = {len(c.values) for c in self.channels}
        if len(lengths) > 1:
            raise DataError(f"channels have unequal lengths {sorted(lengths)}")

    def __len__(self) -> int:
        return len(self.channels[0].values) if self.channels else 0

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.channels)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channel(name).values

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def channel(self, name: str) -> Channel:
        for c in self.channels:
            if c.name == name:
                return c
        raise DataError(f"channel {name!r} not in frame (have {self.names})")

    def timestamps(self) -> pd.DatetimeIndex:
        return pd.date_range(self.start_time, periods=len(self), freq=self.cadence)

    def with_channels(self, channels: Iterable[Channel]) -> "TimeSeriesFrame":
        return replace(self, channels=tuple(channels))

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame({c.name: c.values for c in self.channels}, index=self.timestamps())
        df.index.name = "timestamp"
        return df

    def to_csv(self, path: str | Path) -> None:
        self.to_dataframe().to_csv(path, date_format="%Y-%m-%dT%H:%M:%S", float_format="%.10g")


# --------------------------------------------------------------------------- #
# Ingestion and preprocessing
# --------------------------------------------------------------------------- #


def _schema_entry(entry) -> tuple[Role, str]:
    if isinstance(entry, Mapping):
        return Role.parse(entry["role"]), str(entry.get("unit", ""))
    return Role.parse(entry), ""


def ingest_csv(
    path: str | Path,
    schema: Mapping[str, object],
    cadence: timedelta | None = None,
) -> TimeSeriesFrame:
    """Read a CSV whose first column is an ISO-8601 timestamp.

    ``schema`` maps channel name to a role (``"insitu"``, ``"nwp"``, ``"target"``)
    or to ``{"role": ..., "unit": ...}``. Gaps in the timestamp grid are filled
    with NaN rows; unparseable cells become NaN. ``cadence`` is only needed for
    single-row files.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    raw = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    if raw.shape[1] < 1:
        raise DataError(f"{path}: no columns")
    time_col, *names = list(raw.columns)
    for name in names:
        if name not in schema:
            raise DataError(f"{path}: channel {name!r} not declared in schema")
    missing = [name for name in schema if name not in names]
    if missing:
        raise DataError(f"{path}: declared channels absent from file: {missing}")

    try:
        stamps = pd.to_datetime(raw[time_col], format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise DataError(f"{path}: unparseable timestamp column") from exc
    if stamps.duplicated().any():
        raise DataError(f"{path}: duplicate timestamps, e.g. {stamps[stamps.duplicated()].iloc[0]}")
    steps = np.diff(stamps.to_numpy()).astype("timedelta64[ns]").astype(np.int64)
    if (steps <= 0).any():
        raise DataError(f"{path}: timestamps are not monotonically increasing")

    if len(stamps) >= 2:
        base = int(steps.min())
        if (steps % base).any():
            raise DataError(f"{path}: timestamp spacing is not a multiple of {pd.Timedelta(base)}")
        cad = pd.Timedelta(base).to_pytimedelta()
    elif cadence is not None:
        cad = cadence
    else:
        cad = TEN_MINUTES

    grid = pd.date_range(stamps.iloc[0], stamps.iloc[-1], freq=cad) if len(stamps) else stamps
    channels = []
    for name in names:
        role, unit = _schema_entry(schema[name])
        col = pd.to_numeric(raw[name].str.strip(), errors="coerce").to_numpy(dtype=float)
        series = pd.Series(col, index=pd.DatetimeIndex(stamps)).reindex(grid)
        channels.append(Channel(name, role, series.to_numpy(dtype=float), unit))
    start = grid[0].to_pydatetime() if len(grid) else datetime(1970, 1, 1)
    return TimeSeriesFrame(start, cad, tuple(channels))


def resample_linear(frame: TimeSeriesFrame, target_cadence: timedelta = TEN_MINUTES) -> TimeSeriesFrame:
    """Refine the time grid; NWP channels are linearly interpolated.

    Observed channels keep their values at the original stamps and are NaN at
    the inserted stamps. Interpolated points inside a segment with a missing
    endpoint are NaN.
    """
    ratio = frame.cadence / target_cadence
    k = round(ratio)
    if target_cadence <= timedelta(0) or k < 1 or not math.isclose(ratio, k, rel_tol=0, abs_tol=1e-9):
        raise DataError(f"target cadence {target_cadence} does not divide {frame.cadence}")
    n = len(frame)
    if k == 1 or n == 0:
        return replace(frame, cadence=target_cadence)
    n_out = (n - 1) * k + 1
    frac = np.arange(k) / k
    channels = []
    for c in frame.channels:
        out = np.full(n_out, np.nan)
        out[::k] = c.values
        if c.role is Role.NWP and n > 1:
            left, right = c.values[:-1, None], c.values[1:, None]
            seg = left * (1.0 - frac[1:]) + right * frac[1:]
            inner = np.arange(n - 1)[:, None] * k + np.arange(1, k)
            out[inner] = seg
        channels.append(replace(c, values=out))
    return TimeSeriesFrame(frame.start_time, target_cadence, tuple(channels))


def encode_direction(frame: TimeSeriesFrame, channel: str) -> TimeSeriesFrame:
    """Replace a direction channel in degrees by ``<name>_sin`` and ``<name>_cos``."""
    src = frame.channel(channel)
    theta = np.deg2rad(src.values)
    channels = []
    for c in frame.channels:
        if c.name == channel:
            channels.append(Channel(f"{channel}_sin", c.role, np.sin(theta), ""))
            channels.append(Channel(f"{channel}_cos", c.role, np.cos(theta), ""))
        else:
            channels.append(c)
    return frame.with_channels(channels)


def average_turbines(frames: Sequence[TimeSeriesFrame]) -> TimeSeriesFrame:
    """Element-wise mean over turbines; any missing turbine makes the average missing."""
    if not frames:
        raise DataError("no frames to average")
    first = frames[0]
    for f in frames[1:]:
        if f.names != first.names:
            raise DataError(f"channel mismatch: {f.names} vs {first.names}")
        if f.start_time != first.start_time or f.cadence != first.cadence or len(f) != len(first):
            raise DataError("turbine frames do not share timestamps")
    channels = []
    for i, c in enumerate(first.channels):
        stack = np.stack([f.channels[i].values for f in frames])
        channels.append(replace(c, values=stack.mean(axis=0)))
    return first.with_channels(channels)


def join_frames(frames: Sequence[TimeSeriesFrame]) -> TimeSeriesFrame:
    """Concatenate channels of frames sharing a cadence, over their common time span."""
    if not frames:
        raise DataError("no frames to join")
    cad = frames[0].cadence
    if any(f.cadence != cad for f in frames):
        raise DataError("frames must share a cadence before joining")
    start = max(f.start_time for f in frames)
    end = min(f.start_time + (len(f) - 1) * cad for f in frames)
    if end < start:
        raise DataError("frames do not overlap in time")
    channels = []
    for f in frames:
        offset = (start - f.start_time) / cad
        if offset != int(offset):
            raise DataError("frame grids are not aligned")
        lo = int(offset)
        hi = lo + int((end - start) / cad) + 1
        channels.extend(replace(c, values=c.values[lo:hi]) for c in f.channels)
    return TimeSeriesFrame(start, cad, tuple(channels))


def mask_time_ranges(frame: TimeSeriesFrame, ranges: Iterable[tuple[object, object]]) -> TimeSeriesFrame:
    """Set every channel to missing on each half-open ``[start, end)`` timestamp range."""
    stamps = frame.timestamps()
    mask = np.zeros(len(frame), dtype=bool)
    for lo, hi in ranges:
        mask |= (stamps >= pd.Timestamp(lo)) & (stamps < pd.Timestamp(hi))
    if not mask.any():
        return frame
    channels = []
    for c in frame.channels:
        v = c.values.copy()
        v[mask] = np.nan
        channels.append(replace(c, values=v))
    return frame.with_channels(channels)


# --------------------------------------------------------------------------- #
# Supervised windows
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class WindowSpec:
    past_len: int = 18
    nwp_before: int = 9
    nwp_after: int = 9
    horizon_count: int = 24

    def __post_init__(self):
        if self.past_len < 1 or self.horizon_count < 1:
            raise DataError("past_len and horizon_count must be >= 1")
        if self.nwp_before < 0 or self.nwp_after < 0:
            raise DataError("nwp_before and nwp_after must be >= 0")


@dataclass(frozen=True)
class FeatureLabel:
    """One feature column: a channel sampled at ``offset`` steps from ``reference``.

    ``reference`` is ``"anchor"`` (time t) or ``"horizon"`` (time t+h).
    """

    channel: str
    offset: int
    reference: str = "anchor"

    def index(self, anchor: int, horizon: int | None) -> int:
        if self.reference == "horizon":
            return anchor + int(horizon) + self.offset
        return anchor + self.offset

    def __str__(self) -> str:
        ref = "t" if self.reference == "anchor" else "t+h"
        sign = "+" if self.offset >= 0 else "-"
        return f"{self.channel}[{ref}{sign}{abs(self.offset)}]"


@dataclass(frozen=True)
class SupervisedDataset:
    X: np.ndarray
    Y: np.ndarray
    feature_labels: tuple[FeatureLabel, ...]
    sample_anchors: np.ndarray
    horizon: int | None  # None for the joint all-horizon dataset
    horizon_count: int

    def __post_init__(self):
        if self.X.shape[1] != len(self.feature_labels):
            raise DataError("X column count does not match feature labels")

    def __len__(self) -> int:
        return len(self.sample_anchors)

    @property
    def y(self) -> np.ndarray:
        """The single target column of a one-horizon dataset."""
        if self.Y.shape[1] != 1:
            raise DataError("dataset has several target columns")
        return self.Y[:, 0]

    @property
    def last_target_index(self) -> np.ndarray:
        """Frame index of the latest target observation of every sample."""
        lead = self.horizon if self.horizon is not None else self.horizon_count
        return self.sample_anchors + lead

    def rows_within(self, lo: int, hi: int) -> np.ndarray:
        """Boolean mask of samples whose anchor and targets all lie in ``[lo, hi)``."""
        return (self.sample_anchors >= lo) & (self.last_target_index < hi)

    def subset(self, rows) -> "SupervisedDataset":
        return replace(self, X=self.X[rows], Y=self.Y[rows], sample_anchors=self.sample_anchors[rows])

    def columns_of(self, channels: Iterable[str]) -> np.ndarray:
        wanted = set(channels)
        return np.array([i for i, lab in enumerate(self.feature_labels) if lab.channel in wanted], dtype=int)

    def select_channels(self, channels: Iterable[str]) -> "SupervisedDataset":
        cols = self.columns_of(channels)
        return replace(self, X=self.X[:, cols], feature_labels=tuple(self.feature_labels[i] for i in cols))

    def variables(self) -> list[str]:
        """Channel names in column order, without repetition."""
        return list(dict.fromkeys(lab.channel for lab in self.feature_labels))


def build_supervised(
    frame: TimeSeriesFrame,
    spec: WindowSpec,
    target: str,
    horizon: int | str,
    channels: Sequence[str] | None = None,
) -> SupervisedDataset:
    """Assemble the windowed regression dataset for one horizon or for all of them.

    Observed (in-situ and target-role) channels contribute ``past_len`` lags
    ending at the anchor. NWP channels contribute the window around the target
    time; for ``horizon="all"`` that window spans every horizon. Anchors whose
    windows leave the series or touch a missing value are dropped.
    """
    if frame.cadence != TEN_MINUTES:
        raise DataError(f"frame cadence must be 10 minutes, got {frame.cadence}")
    y_src = frame[target]
    m = spec.horizon_count
    if horizon == "all":
        h = None
    else:
        h = int(horizon)
        if not 1 <= h <= m:
            raise DataError(f"horizon {horizon} outside [1, {m}]")

    use = frame.channels if channels is None else [frame.channel(n) for n in channels]
    labels: list[FeatureLabel] = []
    for c in use:
        if c.role.observed:
            labels += [FeatureLabel(c.name, o, "anchor") for o in range(-spec.past_len + 1, 1)]
        elif h is None:
            labels += [FeatureLabel(c.name, o, "anchor") for o in range(1 - spec.nwp_before, m + spec.nwp_after + 1)]
        else:
            labels += [FeatureLabel(c.name, o, "horizon") for o in range(-spec.nwp_before, spec.nwp_after + 1)]

    n = len(frame)
    anchors = np.arange(n)
    lead = np.arange(1, m + 1) if h is None else np.array([h])
    # absolute index of every feature and target cell, per anchor
    feat_idx = np.array([[lab.index(0, h) for lab in labels]], dtype=int) + anchors[:, None]
    targ_idx = anchors[:, None] + lead[None, :]
    lo = np.minimum(feat_idx.min(axis=1, initial=n), targ_idx.min(axis=1))
    hi = np.maximum(feat_idx.max(axis=1, initial=-1), targ_idx.max(axis=1))
    inside = (lo >= 0) & (hi < n)
    anchors, feat_idx, targ_idx = anchors[inside], feat_idx[inside], targ_idx[inside]

    src = {c.name: c.values for c in use}
    X = np.empty(feat_idx.shape)
    for j, lab in enumerate(labels):
        X[:, j] = src[lab.channel][feat_idx[:, j]]
    Y = y_src[targ_idx]
    ok = np.isfinite(X).all(axis=1) & np.isfinite(Y).all(axis=1)
    if not ok.any():
        raise DataError("no complete samples after dropping windows with missing values")
    return SupervisedDataset(
        X=X[ok], Y=Y[ok], feature_labels=tuple(labels), sample_anchors=anchors[ok],
        horizon=h, horizon_count=m,
    )


# --------------------------------------------------------------------------- #
# Standardization
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    std: np.ndarray
    fitted_on: str = ""
    source_rows: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    def transform(self, M: np.ndarray) -> np.ndarray:
        return (np.asarray(M, dtype=float) - self.mean) / self.std

    def inverse_transform(self, M: np.ndarray) -> np.ndarray:
        return np.asarray(M, dtype=float) * self.std + self.mean


def fit_standardizer(M: np.ndarray, rows=None, fitted_on: str = "") -> Standardizer:
    """Per-column mean and population standard deviation over ``rows``.

    ``rows`` may be a range, slice, integer index array or boolean mask;
    ``None`` uses every row. Zero deviations are stored as 1.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    if rows is None:
        idx = np.arange(len(M))
    elif isinstance(rows, slice):
        idx = np.arange(len(M))[rows]
    else:
        idx = np.asarray(rows)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise DataError("cannot fit a standardizer on an empty row range")
    sub = M[idx]
    mean = sub.mean(axis=0)
    std = sub.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return Standardizer(mean=mean, std=std, fitted_on=fitted_on, source_rows=idx.astype(int))


# --------------------------------------------------------------------------- #
# Rolling splits
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class Split:
    train: range
    val: range
    test: range

    @property
    def train_val(self) -> range:
        return range(self.train.start, self.val.stop)


@dataclass(frozen=True)
class SplitPlan:
    splits: tuple[Split, ...]
    sizes: tuple[int, int, int]

    def __len__(self) -> int:
        return len(self.splits)

    def __iter__(self):
        return iter(self.splits)

    def __getitem__(self, i: int) -> Split:
        return self.splits[i]


def make_rolling_splits(n: int, sizes: tuple[int, int, int] = (10000, 10000, 10000)) -> SplitPlan:
    """Tile consecutive train/validation/test blocks over ``range(n)``.

    The last test block is truncated to the end of the data; a split is only
    emitted when its train and validation blocks fit and its test block is
    non-empty.
    """
    n_train, n_val, n_test = (int(s) for s in sizes)
    if min(n_train, n_val, n_test) < 1:
        raise DataError(f"split sizes must be positive, got {sizes}")
    if n < n_train + n_val + 1:
        raise DataError(f"n={n} too small for one split of sizes {sizes}")
    stride = n_train + n_val + n_test
    splits = []
    start = 0
    while start + n_train + n_val < n:
        a, b = start + n_train, start + n_train + n_val
        splits.append(Split(range(start, a), range(a, b), range(b, min(b + n_test, n))))
        start += stride
    return SplitPlan(tuple(splits), (n_train, n_val, n_test))
