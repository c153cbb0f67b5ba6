from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from distwave.errors import LevelTooDeepError
from distwave.wavelets import (
    CoeffField,
    besov_holder_norm,
    besov_sobolev_norm,
    daubechies_filter,
    eval_psi,
    heap_index,
    level_shift,
    make_basis,
    synthesize,
)

HAAR = make_basis("haar")
DB4 = make_basis("db4")


def haar_psi(j, k, t):
    # independent formula: 2^{j/2} psi(2^j t - k), periodized
    x = (2.0 ** j * t - k) % (2.0 ** j)
    return 2.0 ** (j / 2) * np.where((x >= 0) & (x < 0.5), 1.0, np.where((x >= 0.5) & (x < 1), -1.0, 0.0))


def test_haar_mother_values():
    assert eval_psi(HAAR, 0, 0, 0.25) == 1.0
    assert eval_psi(HAAR, 1, 1, 0.9) == pytest.approx(-math.sqrt(2), abs=1e-15)


@given(st.integers(0, 10), st.data())
def test_haar_matches_formula(j, data):
    k = data.draw(st.integers(0, 2 ** j - 1))
    t = np.array(data.draw(st.lists(st.floats(0, 1, exclude_max=True), min_size=1, max_size=20)))
    np.testing.assert_allclose(eval_psi(HAAR, j, k, t), haar_psi(j, k, t), atol=1e-12)


def test_daubechies_filters_match_published_taps():
    db2 = [0.48296291314469025, 0.836516303737469, 0.22414386804185735, -0.12940952255092145]
    np.testing.assert_allclose(daubechies_filter(2), db2, atol=1e-12)
    db4 = [0.23037781330885523, 0.7148465705525415, 0.6308807679295904, -0.02798376941698385,
           -0.18703481171888114, 0.030841381835986965, 0.032883011666982945, -0.010597401784997278]
    np.testing.assert_allclose(daubechies_filter(4), db4, atol=1e-12)


@pytest.mark.parametrize("j,k", [(0, 0), (2, 1), (3, 7), (5, 20)])
def test_db4_zero_mean(j, k):
    R = DB4.refinement_depth
    t = (np.arange(2 ** R) + 0.5) / 2 ** R
    integral = float(np.mean(eval_psi(DB4, j, k, t)))
    assert abs(integral) <= 10 * 2.0 ** -R


def _gram(basis, J, R):
    t = (np.arange(2 ** R) + 0.5) / 2 ** R
    rows = []
    for j in range(J + 1):
        for k in range(2 ** j):
            rows.append(eval_psi(basis, j, k, t))
    A = np.array(rows)
    return A @ A.T / 2 ** R


@pytest.mark.parametrize("basis", [HAAR, DB4], ids=["haar", "db4"])
def test_discrete_orthonormality(basis):
    R = 12
    J = min(5, R - 4)
    G = _gram(basis, J, R)
    assert np.max(np.abs(G - np.eye(G.shape[0]))) <= 10 * 2.0 ** (-R / 2)


def test_db4_support_length():
    assert DB4.support_length == 7
    t = (np.arange(4096) + 0.5) / 4096
    for j, k in [(3, 0), (3, 5)]:
        live = np.abs(eval_psi(DB4, j, k, t)) > 0
        # offset from the left end of the support, modulo the period
        x = (t * 2 ** j - k) % 2 ** j
        assert live.any()
        assert np.all(x[live] <= 7)


def test_level_too_deep():
    with pytest.raises(LevelTooDeepError):
        eval_psi(DB4, DB4.max_level + 1, 0, 0.5)


def test_synthesize_examples():
    assert np.all(synthesize(HAAR, CoeffField.zeros(3), 16) == 0)
    f = CoeffField.from_dict({(0, 0): 1.0})
    np.testing.assert_array_equal(synthesize(HAAR, f, 8), [1, 1, 1, 1, -1, -1, -1, -1])
    g = CoeffField.from_dict({(0, 0): 1.0, (1, 1): 0.5})
    r2 = 0.5 * math.sqrt(2)
    np.testing.assert_allclose(synthesize(HAAR, g, 4), [1, 1, -1 + r2, -1 - r2], atol=1e-15)


@given(st.integers(0, 7), st.integers(0, 2 ** 31 - 1))
def test_parseval_haar(J, seed):
    vals = np.random.default_rng(seed).standard_normal(2 ** (J + 1) - 1)
    f = CoeffField(J, vals)
    grid = synthesize(HAAR, f, 2 ** (J + 1))
    assert np.mean(grid ** 2) == pytest.approx(f.squared_norm(), rel=1e-6)


def test_parseval_db4():
    rng = np.random.default_rng(3)
    f = CoeffField(5, rng.standard_normal(63))
    grid = synthesize(DB4, f, 2 ** 12)
    assert np.mean(grid ** 2) == pytest.approx(f.squared_norm(), rel=1e-3)


def test_eval_psi_deterministic():
    t = np.random.default_rng(0).random(100)
    a = eval_psi(DB4, 4, 3, t)
    b = eval_psi(DB4, 4, 3, t)
    assert a.tobytes() == b.tobytes()


def test_coeff_field_indexing():
    f = CoeffField.zeros(4)
    assert f.size == 2 ** 5 - 1
    for j in range(5):
        for k in range(2 ** j):
            assert level_shift(heap_index(j, k)) == (j, k)
    assert f[(9, 3)] == 0.0


def test_besov_examples():
    s = 1.0
    f = CoeffField.from_levels([np.full(2 ** j, 2.0 ** (-j * (s + 0.5))) for j in range(9)])
    assert besov_sobolev_norm(f, s) == pytest.approx(1.0)
    assert besov_holder_norm(f, s) == pytest.approx(1.0)
    assert besov_sobolev_norm(CoeffField.zeros(3), 1) == 0
    assert besov_holder_norm(CoeffField.zeros(3), 1) == 0
    c = 0.3
    assert besov_sobolev_norm(CoeffField.from_dict({(2, 0): c}), 0.7) == pytest.approx(2 ** (2 * 0.7) * c)
    assert besov_holder_norm(CoeffField.from_dict({(3, 1): 0.25}), 0.5) == pytest.approx(2.0)
