import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beliefcal.errors import InsufficientRows, NotBinary, RankDeficient
from beliefcal.regress import (
    RegressionSpec,
    binary_contrast,
    dummy_matrix,
    fwl_batch,
    wls_fit,
)

XY = RegressionSpec(response="y", regressor="x")


def test_hand_ols():
    r = wls_fit({"y": [1, 1, 3, 3], "x": [0, 0, 1, 1]}, XY)
    assert r.coef == pytest.approx(2.0, abs=1e-12)
    assert r.coefs["(intercept)"] == pytest.approx(1.0, abs=1e-12)
    assert r.n == 4


def test_exact_line():
    x = np.arange(6.0)
    assert wls_fit({"y": 5 * x, "x": x}, XY).coef == pytest.approx(5.0, abs=1e-12)


def test_constant_regressor():
    with pytest.raises(RankDeficient):
        wls_fit({"y": [1, 2, 3], "x": [2, 2, 2]}, XY)


def test_insufficient_rows():
    spec = RegressionSpec(response="y", regressor="x", weights="w")
    with pytest.raises(InsufficientRows):
        wls_fit({"y": [1, 2, 3], "x": [0, 1, 2], "w": [1, 0, 0]}, spec)


def test_regressor_among_controls_rejected():
    with pytest.raises(ValueError):
        RegressionSpec(response="y", regressor="x", linear_controls=("x",))


def test_collinear_control_is_dropped_not_fatal():
    x = np.array([0.0, 1, 2, 3, 4])
    c = np.array([1.0, 1, 2, 2, 5])
    y = 2 * x + c
    spec = RegressionSpec(response="y", regressor="x", linear_controls=("c", "c2"))
    r = wls_fit({"y": y, "x": x, "c": c, "c2": 2 * c}, spec)
    assert r.coef == pytest.approx(2.0, abs=1e-10)


def test_matches_lstsq_oracle(rng):
    n = 60
    x, c = rng.normal(size=n), rng.normal(size=n)
    w = rng.uniform(0.1, 2, size=n)
    y = 1.0 + 0.7 * x - 0.3 * c + rng.normal(size=n)
    spec = RegressionSpec(response="y", regressor="x", linear_controls=("c",), weights="w")
    r = wls_fit({"y": y, "x": x, "c": c, "w": w}, spec)
    A = np.column_stack([np.ones(n), c, x]) * np.sqrt(w)[:, None]
    beta = np.linalg.lstsq(A, y * np.sqrt(w), rcond=None)[0]
    assert r.coef == pytest.approx(beta[2], abs=1e-10)


def test_categorical_equals_within_demeaning(rng):
    n = 90
    g = rng.choice(["a", "b", "c"], size=n)
    x = rng.normal(size=n) + (g == "b")
    y = 2 * x + 3 * (g == "c") + rng.normal(size=n)
    spec = RegressionSpec(response="y", regressor="x", categorical_controls=("g",))
    r = wls_fit({"y": y, "x": x, "g": g}, spec)
    xd, yd = x.copy(), y.copy()
    for lev in "abc":
        m = g == lev
        xd[m] -= x[m].mean()
        yd[m] -= y[m].mean()
    assert r.coef == pytest.approx(xd @ yd / (xd @ xd), abs=1e-10)


def test_dummy_reference_level_is_first_sorted():
    D, names = dummy_matrix(["b", "a", "c", "a"])
    assert names == ["g[b]", "g[c]"]
    assert D.shape == (4, 2)
    assert D[1].sum() == 0 and D[3].sum() == 0


def test_binary_contrast_examples():
    assert binary_contrast([1, 1, 5, 5], [0, 0, 2, 2]) == 2.0
    assert binary_contrast([3, 3, 3, 3], [0, 1, 0, 1]) == 0.0
    with pytest.raises(NotBinary):
        binary_contrast([1, 2, 3], [0, 1, 2])


binary_rows = st.integers(4, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(-100, 100), min_size=n, max_size=n),
        st.lists(st.booleans(), min_size=n, max_size=n).filter(lambda b: 0 < sum(b) < len(b)),
        st.floats(-5, 5).filter(lambda v: abs(v) > 0.1),
        st.floats(-5, 5),
    )
)


@given(binary_rows)
def test_binary_identity(data):
    y, b, hi, lo = data
    x = np.where(b, lo + hi, lo)
    coef = wls_fit({"y": y, "x": x}, XY).coef
    assert abs(coef - binary_contrast(y, x)) < 1e-10


@given(st.floats(1e-3, 1e3), st.integers(0, 2**31))
def test_weight_scale_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    x, y, w = rng.normal(size=20), rng.normal(size=20), rng.uniform(0.1, 1, size=20)
    spec = RegressionSpec(response="y", regressor="x", weights="w")
    a = wls_fit({"y": y, "x": x, "w": w}, spec).coef
    b = wls_fit({"y": y, "x": x, "w": scale * w}, spec).coef
    assert b == pytest.approx(a, rel=1e-9, abs=1e-12)


@given(st.floats(-10, 10), st.floats(-10, 10), st.integers(0, 2**31))
def test_affine_equivariance(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=15), rng.normal(size=15)
    base = wls_fit({"y": y, "x": x}, XY).coef
    moved = wls_fit({"y": a + b * y, "x": x}, XY).coef
    assert moved == pytest.approx(b * base, rel=1e-8, abs=1e-9)


def test_fwl_batch_flags_collinear():
    c = np.ones((2, 5, 1))
    x = np.stack([np.arange(5.0), np.ones(5)])
    y = np.stack([2 * np.arange(5.0), np.arange(5.0)])
    coef, ok = fwl_batch(x, y, c)
    assert ok.tolist() == [True, False]
    assert coef[0] == pytest.approx(2.0)
