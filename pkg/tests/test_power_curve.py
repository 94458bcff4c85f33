import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from windcast.power_curve import export_power_curve, fit_power_curve


def brute_force(ws, pw, k, q):
    """Sort every training pair by (distance, training index), take the median of the first k."""
    ws, pw = np.asarray(ws, float), np.asarray(pw, float)
    k = min(k, len(ws))
    out = []
    for x in np.atleast_1d(q):
        order = sorted(range(len(ws)), key=lambda i: (abs(ws[i] - x), i))[:k]
        out.append(np.median(pw[order]))
    return np.array(out)


class TestFit:
    def test_singleton(self):
        c = fit_power_curve([5.0], [100.0], k=250)
        np.testing.assert_array_equal(c([0.0, 5.0, 30.0]), 100.0)

    def test_cubic_grid(self):
        ws = np.linspace(0, 10, 1000)
        pw = ws**3
        c = fit_power_curve(ws, pw, k=50)
        nearest = np.argsort(np.abs(ws - 5.0), kind="stable")[:50]
        got = c([5.0])[0]
        assert pw[nearest].min() <= got <= pw[nearest].max()
        assert got == pytest.approx(brute_force(ws, pw, 50, 5.0)[0], rel=1e-15)

    def test_k_larger_than_data(self):
        c = fit_power_curve([1.0, 2.0, 3.0, 9.0], [10.0, 40.0, 20.0, 30.0], k=100)
        np.testing.assert_array_equal(c([0.0, 50.0]), 25.0)

    def test_errors(self):
        with pytest.raises(ValueError):
            fit_power_curve([], [])
        with pytest.raises(ValueError):
            fit_power_curve([1.0, 2.0], [1.0])
        with pytest.raises(ValueError):
            fit_power_curve([np.nan], [1.0])
        with pytest.raises(ValueError):
            fit_power_curve([1.0], [1.0], k=0)
        with pytest.raises(ValueError):
            fit_power_curve([1.0], [1.0])([np.inf])


class TestApply:
    def test_nearest_self(self):
        ws = np.array([3.0, 7.0, 5.0])
        pw = np.array([30.0, 70.0, 50.0])
        np.testing.assert_array_equal(fit_power_curve(ws, pw, k=1)(ws), pw)

    def test_even_count_median(self):
        assert fit_power_curve([4.0, 6.0, 20.0], [90.0, 110.0, 0.0], k=2)([5.0])[0] == 100.0

    def test_distance_tie_prefers_lower_index(self):
        # speeds 4 and 6 are equidistant from 5; with k=1 the earlier pair wins
        assert fit_power_curve([6.0, 4.0], [60.0, 40.0], k=1)([5.0])[0] == 60.0
        assert fit_power_curve([4.0, 6.0], [40.0, 60.0], k=1)([5.0])[0] == 40.0
        # repeated speeds: the tie on the boundary is resolved by training order
        c = fit_power_curve([5.0, 5.0, 5.0, 1.0], [1.0, 2.0, 3.0, 4.0], k=2)
        assert c([5.0])[0] == 1.5

    def test_shape_preserved(self):
        c = fit_power_curve(np.arange(10.0), np.arange(10.0), k=3)
        assert c(np.ones((2, 3))).shape == (2, 3)

    def test_clamp_robustness(self):
        rng = np.random.default_rng(0)
        ws = rng.uniform(0, 15, 20000)
        clean = 2000 * np.clip((ws - 3) / 9, 0, 1) ** 3
        dirty = clean.copy()
        dirty[rng.random(len(ws)) < 0.2] = 600.0
        mid = np.linspace(7, 11, 41)
        a = fit_power_curve(ws, clean, 250)(mid)
        b = fit_power_curve(ws, dirty, 250)(mid)
        assert np.max(np.abs(b - a) / a) < 0.05

    @settings(max_examples=80, deadline=None)
    @given(
        st.lists(st.integers(0, 30), min_size=1, max_size=60),
        st.integers(1, 20),
        st.lists(st.integers(-5, 35), min_size=1, max_size=10),
        st.integers(0, 10_000),
    )
    def test_matches_brute_force_with_ties(self, speeds, k, queries, seed):
        # integer-valued speeds and half-integer queries create many exact ties
        ws = np.array(speeds, dtype=float) / 2
        pw = np.random.default_rng(seed).normal(size=len(ws))
        q = np.array(queries, dtype=float) / 4
        got = fit_power_curve(ws, pw, k)(q)
        np.testing.assert_allclose(got, brute_force(ws, pw, k, q), rtol=0, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 40))
    def test_bounds_and_determinism(self, seed, k):
        rng = np.random.default_rng(seed)
        ws, pw = rng.uniform(0, 20, 300), rng.uniform(0, 2000, 300)
        q = rng.uniform(-1, 21, 50)
        c = fit_power_curve(ws, pw, k)
        got = c(q)
        assert np.array_equal(got, c(q))
        for x, g in zip(q, got):
            near = np.argsort(np.abs(ws - x), kind="stable")[:k]
            assert pw[near].min() - 1e-9 <= g <= pw[near].max() + 1e-9
        # continuous speeds have no distance ties, so training order is irrelevant
        perm = rng.permutation(300)
        np.testing.assert_array_equal(fit_power_curve(ws[perm], pw[perm], k)(q), got)


def test_export(tmp_path):
    c = fit_power_curve([0.0, 1.0, 2.0], [0.0, 10.0, 20.0], k=1)
    export_power_curve(c, tmp_path / "pc.csv")
    lines = (tmp_path / "pc.csv").read_text().splitlines()
    assert lines[0] == "speed,power"
    assert len(lines) == 1 + 21
    assert lines[1] == "0.0,0.0" and lines[-1] == "2.0,20.0"
