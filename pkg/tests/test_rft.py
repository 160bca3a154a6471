import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from starris_gl.rft import RFTSelector, rft_losses, rft_score


def brute_force_score(z, y, B):
    """Independent loop-based reference."""
    lo, hi = min(z), max(z)
    n = len(z)
    best = None
    for b in range(1, B + 1):
        t = lo + (hi - lo) * b / (B + 1)
        L = [yy for zz, yy in zip(z, y) if (zz - lo) / (hi - lo) < b / (B + 1)]
        R = [yy for zz, yy in zip(z, y) if not (zz - lo) / (hi - lo) < b / (B + 1)]
        if not L or not R:
            continue
        mse = lambda s: sum((v - sum(s) / len(s)) ** 2 for v in s) / len(s)  # noqa: E731
        w = len(L) / n * mse(L) + len(R) / n * mse(R)
        if best is None or w < best[0]:
            best = (w, t)
    return best


def test_examples():
    assert rft_score([0, 1, 2, 3], [5, 5, 5, 5], 4).loss == 0.0
    assert rft_score([0, 0, 1, 1], [0, 0, 1, 1], 1).loss == 0.0
    s = rft_score([1, 2, 3, 4], [1, 2, 3, 4], 3)
    assert s.loss == 0.25
    assert s.threshold == pytest.approx(2.5)


def test_constant_feature_unsplittable():
    s = rft_score([2, 2, 2], [1, 2, 3], 16)
    assert s.unsplittable
    assert s.loss == pytest.approx(np.var([1, 2, 3]))


def test_errors():
    with pytest.raises(ValueError):
        rft_score([1], [1], 3)
    with pytest.raises(ValueError):
        rft_score([1, 2], [1, 2], 0)


@given(st.integers(0, 10_000), st.integers(2, 40), st.integers(1, 20))
def test_matches_brute_force_and_bounded(seed, n, B):
    rng = np.random.default_rng(seed)
    z, y = rng.standard_normal(n), rng.standard_normal(n)
    s = rft_score(z, y, B)
    ref = brute_force_score(list(z), list(y), B)
    var = np.var(y)
    assert s.loss <= var + 1e-12
    if ref is not None:
        assert s.loss == pytest.approx(min(ref[0], var), rel=1e-9, abs=1e-12)


@given(st.integers(0, 10_000), st.floats(0.01, 100), st.floats(-100, 100))
def test_affine_invariance(seed, a, b):
    rng = np.random.default_rng(seed)
    z, y = rng.standard_normal(50), rng.standard_normal(50)
    assert abs(rft_score(a * z + b, y, 16).loss - rft_score(z, y, 16).loss) <= 1e-12


@given(st.integers(0, 10_000))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((40, 5)), rng.standard_normal((40, 2))
    p = rng.permutation(40)
    assert np.allclose(rft_losses(X, Y), rft_losses(X[p], Y[p]), rtol=1e-12, atol=1e-14)


def test_selector_finds_relevant_feature(rng):
    hits = 0
    for _ in range(20):
        Z = rng.standard_normal((500, 20))
        y = Z[:, 3] + rng.normal(0, 0.01, 500)
        sel = RFTSelector(n_select=5).fit(Z, y)
        hits += sel.selected_[0, 0] == 3
    assert hits >= 19


def test_selector_duplicated_targets_and_full_selection(rng):
    Z = rng.standard_normal((100, 8))
    y = Z[:, 2] + 0.1 * rng.standard_normal(100)
    sel = RFTSelector(n_select=3).fit(Z, np.column_stack([y, y]))
    assert np.array_equal(sel.selected_[0], sel.selected_[1])
    full = RFTSelector(n_select=8).fit(Z, y)
    order = full.selected_[0]
    assert sorted(order) == list(range(8))
    assert np.all(np.diff(full.losses_[order, 0]) >= 0)
    assert full.transform(Z).shape == (100, 1, 8)


def test_selector_tie_break_and_shared(rng):
    Z = np.tile(rng.standard_normal((30, 1)), (1, 4))  # identical features tie
    sel = RFTSelector(n_select=4).fit(Z, Z[:, 0])
    assert list(sel.selected_[0]) == [0, 1, 2, 3]
    Y = rng.standard_normal((30, 3))
    shared = RFTSelector(n_select=2, shared=True).fit(rng.standard_normal((30, 6)), Y)
    assert np.all(shared.selected_ == shared.selected_[0])
    assert len(set(shared.selected_[0])) == 2
