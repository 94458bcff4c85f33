import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from windcast.data import (
    TEN_MINUTES,
    Channel,
    DataError,
    FeatureLabel,
    Role,
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

T0 = datetime(2017, 1, 1)


def frame_of(cadence=TEN_MINUTES, **channels):
    chans = []
    for name, spec in channels.items():
        role, values = spec
        chans.append(Channel(name, role, values))
    return TimeSeriesFrame(T0, cadence, tuple(chans))


@pytest.fixture
def csv_path(tmp_path):
    def write(text, name="data.csv"):
        p = tmp_path / name
        p.write_text(text)
        return p

    return write


class TestIngest:
    def test_three_rows_two_channels(self, csv_path):
        p = csv_path("timestamp,WS,PW\n2017-01-01T00:00,5.0,100\n2017-01-01T00:10,6,120\n2017-01-01T00:20,7,150\n")
        f = ingest_csv(p, {"WS": "insitu", "PW": {"role": "insitu", "unit": "kW"}})
        assert len(f) == 3
        assert f.names == ["WS", "PW"]
        assert f.cadence == TEN_MINUTES
        np.testing.assert_array_equal(f["WS"], [5, 6, 7])
        assert f.channel("PW").unit == "kW"

    def test_blank_cell_is_missing(self, csv_path):
        p = csv_path("timestamp,WS,PW\n2017-01-01T00:00,5.0,100\n2017-01-01T00:10,,120\n2017-01-01T00:20,7,abc\n")
        f = ingest_csv(p, {"WS": "insitu", "PW": "insitu"})
        assert np.isnan(f["WS"]).sum() == 1 and np.isnan(f["WS"][1])
        assert np.isnan(f["PW"][2])

    def test_out_of_order_rejected(self, csv_path):
        p = csv_path("timestamp,WS\n2017-01-01T00:10,5\n2017-01-01T00:00,6\n")
        with pytest.raises(DataError, match="monoton"):
            ingest_csv(p, {"WS": "insitu"})

    def test_duplicate_rejected(self, csv_path):
        p = csv_path("timestamp,WS\n2017-01-01T00:00,5\n2017-01-01T00:00,6\n")
        with pytest.raises(DataError, match="duplicate"):
            ingest_csv(p, {"WS": "insitu"})

    def test_undeclared_channel(self, csv_path):
        p = csv_path("timestamp,WS,XX\n2017-01-01T00:00,5,1\n")
        with pytest.raises(DataError, match="not declared"):
            ingest_csv(p, {"WS": "insitu"})

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="no such file"):
            ingest_csv(tmp_path / "nope.csv", {"WS": "insitu"})

    def test_gap_filled_with_missing(self, csv_path):
        p = csv_path("timestamp,WS\n2017-01-01T00:00,5\n2017-01-01T00:10,6\n2017-01-01T00:40,9\n")
        f = ingest_csv(p, {"WS": "insitu"})
        assert len(f) == 5
        assert np.isnan(f["WS"][2:4]).all()

    def test_roundtrip_through_csv(self, tmp_path):
        f = frame_of(WS=(Role.INSITU, [1.5, np.nan, 3.25]), F100=(Role.NWP, [1, 2, 3]))
        f.to_csv(tmp_path / "x.csv")
        g = ingest_csv(tmp_path / "x.csv", {"WS": "insitu", "F100": "nwp"})
        assert g.start_time == f.start_time and g.cadence == f.cadence
        np.testing.assert_array_equal(g["WS"], f["WS"])
        np.testing.assert_array_equal(g["F100"], f["F100"])


class TestFrame:
    def test_unequal_lengths(self):
        with pytest.raises(DataError):
            frame_of(A=(Role.INSITU, [1, 2]), B=(Role.INSITU, [1]))

    def test_duplicate_names(self):
        with pytest.raises(DataError):
            TimeSeriesFrame(T0, TEN_MINUTES, (Channel("A", "insitu", [1]), Channel("A", "nwp", [1])))

    def test_values_immutable(self):
        f = frame_of(A=(Role.INSITU, [1.0, 2.0]))
        with pytest.raises(ValueError):
            f["A"][0] = 5


class TestResample:
    def test_linear_points(self):
        f = frame_of(cadence=timedelta(hours=1), F=(Role.NWP, [0.0, 6.0]))
        g = resample_linear(f, TEN_MINUTES)
        assert len(g) == 7 and g.cadence == TEN_MINUTES
        assert g["F"][1] == pytest.approx(1.0)
        assert g["F"][3] == pytest.approx(3.0)
        np.testing.assert_allclose(g["F"], np.arange(7.0))

    def test_constant(self):
        g = resample_linear(frame_of(cadence=timedelta(hours=1), F=(Role.NWP, [5.0, 5.0])))
        np.testing.assert_array_equal(g["F"], np.full(7, 5.0))

    def test_missing_endpoint(self):
        g = resample_linear(frame_of(cadence=timedelta(hours=1), F=(Role.NWP, [0.0, np.nan])))
        assert g["F"][0] == 0.0
        assert np.isnan(g["F"][1:7]).all()

    def test_insitu_kept_at_original_stamps(self):
        f = frame_of(cadence=timedelta(hours=1), W=(Role.INSITU, [1.0, 2.0, 3.0]), F=(Role.NWP, [0.0, 6.0, 12.0]))
        g = resample_linear(f)
        np.testing.assert_array_equal(g["W"][::6], [1, 2, 3])
        assert np.isnan(g["W"][1:6]).all()

    def test_non_divisible(self):
        with pytest.raises(DataError):
            resample_linear(frame_of(cadence=timedelta(hours=1), F=(Role.NWP, [0.0, 6.0])), timedelta(minutes=7))


class TestDirection:
    def test_quadrants(self):
        g = encode_direction(frame_of(D=(Role.INSITU, [90.0, 0.0])), "D")
        assert g.names == ["D_sin", "D_cos"]
        np.testing.assert_allclose([g["D_sin"][0], g["D_cos"][0]], [1, 0], atol=1e-15)
        np.testing.assert_allclose([g["D_sin"][1], g["D_cos"][1]], [0, 1], atol=1e-15)

    def test_wraparound_is_close(self):
        g = encode_direction(frame_of(D=(Role.INSITU, [359.0, 1.0, 90.0])), "D")
        pts = np.c_[g["D_sin"], g["D_cos"]]
        near = np.linalg.norm(pts[0] - pts[1])
        # chord length for a 2 degree arc
        assert near == pytest.approx(2 * math.sin(math.radians(1.0)), rel=1e-12)
        assert near < np.linalg.norm(pts[1] - pts[2])

    def test_absent(self):
        with pytest.raises(DataError):
            encode_direction(frame_of(D=(Role.INSITU, [1.0])), "X")


class TestTurbineAverage:
    def test_mean_of_two(self):
        a = frame_of(WS=(Role.INSITU, [4.0, 1.0]))
        b = frame_of(WS=(Role.INSITU, [6.0, 3.0]))
        np.testing.assert_array_equal(average_turbines([a, b])["WS"], [5.0, 2.0])

    def test_singleton(self):
        a = frame_of(WS=(Role.INSITU, [4.0, 1.0]))
        np.testing.assert_array_equal(average_turbines([a])["WS"], a["WS"])

    def test_partial_missing_propagates(self):
        a = frame_of(WS=(Role.INSITU, [4.0]))
        b = frame_of(WS=(Role.INSITU, [np.nan]))
        assert np.isnan(average_turbines([a, b])["WS"][0])

    def test_mismatch(self):
        with pytest.raises(DataError):
            average_turbines([frame_of(WS=(Role.INSITU, [4.0])), frame_of(PW=(Role.INSITU, [4.0]))])
        with pytest.raises(DataError):
            average_turbines([frame_of(WS=(Role.INSITU, [4.0])), frame_of(WS=(Role.INSITU, [4.0, 5.0]))])


def test_join_and_mask():
    a = frame_of(W=(Role.INSITU, np.arange(6.0)))
    b = TimeSeriesFrame(T0 + TEN_MINUTES * 2, TEN_MINUTES, (Channel("F", "nwp", np.arange(10.0)),))
    j = join_frames([a, b])
    assert j.start_time == T0 + 2 * TEN_MINUTES and len(j) == 4
    np.testing.assert_array_equal(j["W"], [2, 3, 4, 5])
    np.testing.assert_array_equal(j["F"], [0, 1, 2, 3])
    m = mask_time_ranges(j, [(T0 + 3 * TEN_MINUTES, T0 + 5 * TEN_MINUTES)])
    assert np.isnan(m["W"][1:3]).all() and not np.isnan(m["W"][[0, 3]]).any()


# --------------------------------------------------------------------------- #
# Windowing
# --------------------------------------------------------------------------- #


def enumerate_offsets(n, l, r0, r1, h, insitu, nwp):
    """Hand oracle: loop over anchors, collect (label, value) pairs explicitly."""
    rows, anchors = [], []
    for t in range(n):
        feats = []
        ok = True
        for k in range(t - l + 1, t + 1):
            if k < 0:
                ok = False
            else:
                feats.append(insitu[k])
        for k in range(t + h - r0, t + h + r1 + 1):
            if k < 0 or k >= n:
                ok = False
            else:
                feats.append(nwp[k])
        if t + h >= n:
            ok = False
        if ok and np.isfinite(feats).all() and np.isfinite(insitu[t + h]):
            rows.append(feats + [insitu[t + h]])
            anchors.append(t)
    return np.array(rows), np.array(anchors)


class TestBuildSupervised:
    def test_offsets_against_enumeration(self):
        ws = np.arange(10.0) * 1.5
        f100 = 100 + np.arange(10.0)
        f = frame_of(WS=(Role.INSITU, ws), F100=(Role.NWP, f100))
        ds = build_supervised(f, WindowSpec(2, 1, 1, 3), "WS", 1)
        assert ds.X.shape[1] == 5
        assert ds.feature_labels == (
            FeatureLabel("WS", -1, "anchor"),
            FeatureLabel("WS", 0, "anchor"),
            FeatureLabel("F100", -1, "horizon"),
            FeatureLabel("F100", 0, "horizon"),
            FeatureLabel("F100", 1, "horizon"),
        )
        rows, anchors = enumerate_offsets(10, 2, 1, 1, 1, ws, f100)
        np.testing.assert_array_equal(ds.sample_anchors, anchors)
        np.testing.assert_array_equal(ds.X, rows[:, :5])
        np.testing.assert_array_equal(ds.y, rows[:, 5])

    def test_pure_lag(self):
        ws = np.random.default_rng(0).normal(size=12)
        f = frame_of(WS=(Role.INSITU, ws))
        for h in (1, 3):
            ds = build_supervised(f, WindowSpec(1, 0, 0, 3), "WS", h)
            assert ds.X.shape[1] == 1
            np.testing.assert_array_equal(ds.X[:, 0], ws[: 12 - h])
            np.testing.assert_array_equal(ds.y, ws[h:])

    def test_missing_drops_anchors(self):
        ws = np.arange(10.0)
        ws[5] = np.nan
        f = frame_of(WS=(Role.INSITU, ws))
        ds = build_supervised(f, WindowSpec(2, 0, 0, 1), "WS", 1)
        # windows of anchor t cover t-1, t and target t+1
        expected = [t for t in range(1, 9) if 5 not in (t - 1, t, t + 1)]
        np.testing.assert_array_equal(ds.sample_anchors, expected)
        assert np.isfinite(ds.X).all()

    def test_all_horizons(self):
        ws, f100 = np.arange(20.0), 50 + np.arange(20.0)
        f = frame_of(WS=(Role.INSITU, ws), F100=(Role.NWP, f100))
        ds = build_supervised(f, WindowSpec(2, 1, 1, 3), "WS", "all")
        assert ds.Y.shape[1] == 3
        nwp_offsets = [lab.offset for lab in ds.feature_labels if lab.channel == "F100"]
        assert nwp_offsets == [0, 1, 2, 3, 4]  # t+1-r0 ... t+m+r1
        t = ds.sample_anchors[0]
        np.testing.assert_array_equal(ds.Y[0], ws[t + 1 : t + 4])
        np.testing.assert_array_equal(ds.X[0, 2:], f100[t : t + 5])

    def test_horizon_out_of_range(self):
        f = frame_of(WS=(Role.INSITU, np.arange(10.0)))
        with pytest.raises(DataError):
            build_supervised(f, WindowSpec(1, 0, 0, 3), "WS", 4)
        with pytest.raises(DataError):
            build_supervised(f, WindowSpec(1, 0, 0, 3), "WS", 0)

    def test_empty_after_drop(self):
        f = frame_of(WS=(Role.INSITU, np.full(10, np.nan)))
        with pytest.raises(DataError, match="no complete"):
            build_supervised(f, WindowSpec(1, 0, 0, 3), "WS", 1)

    def test_wrong_cadence(self):
        f = frame_of(cadence=timedelta(hours=1), WS=(Role.INSITU, np.arange(10.0)))
        with pytest.raises(DataError):
            build_supervised(f, WindowSpec(1, 0, 0, 3), "WS", 1)

    def test_leakage_free_and_deterministic(self):
        rng = np.random.default_rng(1)
        f = frame_of(
            WS=(Role.INSITU, rng.normal(size=300)),
            PW=(Role.INSITU, rng.normal(size=300)),
            F=(Role.NWP, rng.normal(size=300)),
        )
        spec = WindowSpec(5, 3, 2, 6)
        for h in range(1, 7):
            ds = build_supervised(f, spec, "WS", h)
            for lab in ds.feature_labels:
                if f.channel(lab.channel).role.observed:
                    assert lab.reference == "anchor" and lab.offset <= 0
            again = build_supervised(f, spec, "WS", h)
            assert again.X.tobytes() == ds.X.tobytes() and again.Y.tobytes() == ds.Y.tobytes()

    def test_window_spec_validation(self):
        with pytest.raises(DataError):
            WindowSpec(past_len=0)
        with pytest.raises(DataError):
            WindowSpec(nwp_before=-1)


# --------------------------------------------------------------------------- #
# Standardizer
# --------------------------------------------------------------------------- #


class TestStandardizer:
    def test_population_std(self):
        s = fit_standardizer(np.array([[1.0], [3.0]]))
        assert s.mean[0] == 2.0 and s.std[0] == 1.0

    def test_constant_column(self):
        s = fit_standardizer(np.array([[7.0], [7.0], [7.0]]))
        assert s.mean[0] == 7.0 and s.std[0] == 1.0

    def test_rows_restrict_fit(self):
        M = np.array([[1.0], [3.0], [1000.0]])
        s = fit_standardizer(M, range(0, 2), fitted_on="train")
        assert s.mean[0] == 2.0 and s.fitted_on == "train"
        np.testing.assert_array_equal(s.source_rows, [0, 1])

    def test_empty_rows(self):
        with pytest.raises(DataError):
            fit_standardizer(np.ones((3, 2)), range(0))

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 12), st.integers(1, 4)), elements=st.floats(-1e6, 1e6)))
    def test_roundtrip(self, M):
        s = fit_standardizer(M)
        assert (s.std > 0).all()
        back = s.inverse_transform(s.transform(M))
        np.testing.assert_allclose(back, M, rtol=1e-12, atol=1e-12 * (1 + np.abs(M).max()))


# --------------------------------------------------------------------------- #
# Rolling splits
# --------------------------------------------------------------------------- #


def tile_oracle(n, sizes):
    out, start = [], 0
    a, b, c = sizes
    while start + a + b < n:
        out.append(((start, start + a), (start + a, start + a + b), (start + a + b, min(start + a + b + c, n))))
        start += a + b + c
    return out


def as_bounds(plan):
    return [((s.train.start, s.train.stop), (s.val.start, s.val.stop), (s.test.start, s.test.stop)) for s in plan]


class TestSplits:
    def test_exactly_one(self):
        plan = make_rolling_splits(30000)
        assert as_bounds(plan) == [((0, 10000), (10000, 20000), (20000, 30000))]

    def test_truncated_final_test(self):
        plan = make_rolling_splits(85000)
        assert len(plan) == 3
        assert len(plan[2].test) == 5000 and plan[2].test.stop == 85000

    def test_remainder_without_room_for_validation(self):
        # the 5000 steps after two full splits cannot hold train + validation
        assert len(make_rolling_splits(65000)) == 2

    def test_too_small(self):
        with pytest.raises(DataError):
            make_rolling_splits(15000)
        assert len(make_rolling_splits(20001)[0].test) == 1

    @given(st.integers(3, 5000), st.tuples(st.integers(1, 400), st.integers(1, 400), st.integers(1, 400)))
    def test_invariants(self, n, sizes):
        if n < sizes[0] + sizes[1] + 1:
            with pytest.raises(DataError):
                make_rolling_splits(n, sizes)
            return
        plan = make_rolling_splits(n, sizes)
        assert as_bounds(plan) == tile_oracle(n, sizes)
        for s in plan:
            assert max(s.train) < min(s.val) and max(s.val) < min(s.test)
            assert len(s.test) >= 1 and s.test.stop <= n
        for s, nxt in zip(plan.splits, plan.splits[1:]):
            assert min(nxt.train) == max(s.test) + 1
