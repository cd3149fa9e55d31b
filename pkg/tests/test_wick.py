import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holofield import wick
from holofield.fields import example_h_hat
from holofield.lattice import Grid
from holofield.wick import FieldLabel, Monomial, WickWord


def matrix_cov(M):
    # labels carry their row index in ``point``
    return lambda a, b: M[a.point[0], b.point[0]]


def labels(n):
    return [FieldLabel(point=(i,)) for i in range(n)]


@pytest.mark.parametrize("n", [2, 4, 6, 8])
def test_matching_count(n):
    assert sum(1 for _ in wick.perfect_matchings(n)) == math.prod(range(1, n, 2))


def test_four_point_isserlis_frozen():
    M = np.array([[1.0, 2.0, 3.0, 4.0], [2.0, 5.0, 6.0, 7.0], [3.0, 6.0, 8.0, 9.0], [4.0, 7.0, 9.0, 10.0]])
    res = wick.mean_of_word(WickWord.product(labels(4)), matrix_cov(M))
    # M01 M23 + M02 M13 + M03 M12 = 18 + 21 + 24
    assert res.total == pytest.approx(63.0)
    assert len(res.diagrams) == 3


def test_odd_word_vanishes():
    M = np.eye(3)
    assert wick.mean_of_word(WickWord.product(labels(3)), matrix_cov(M)).total == 0
    assert wick.brute_force_mean(labels(3), matrix_cov(M)) == 0


@given(st.integers(2, 8).filter(lambda n: n % 2 == 0), st.integers(0, 2**31 - 1))
def test_symbolic_equals_permutation_oracle(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    M = A + A.T
    sym = wick.mean_of_word(WickWord.product(labels(n)), matrix_cov(M)).total
    assert abs(sym - wick.brute_force_mean(labels(n), matrix_cov(M))) < 1e-12 * max(1.0, abs(sym))


def test_contracted_equals_explicit():
    rng = np.random.default_rng(4)
    M = rng.normal(size=(6, 6))
    M = M + M.T
    L = labels(6)
    word = WickWord([[Monomial(1.0, (L[0], L[1])), Monomial(-2.0, (L[2], L[3]))], [L[4]], [L[5]]], bracket=0)
    a = wick.mean_of_word(word, matrix_cov(M), method="explicit").total
    b = wick.mean_of_word(word, matrix_cov(M), method="contract").total
    assert a == pytest.approx(b, abs=1e-12)


def test_channels_split_total():
    rng = np.random.default_rng(1)
    M = rng.normal(size=(4, 4))
    M = M + M.T
    L = labels(4)
    word = WickWord([[L[0], L[1]], [L[2]], [L[3]]], bracket=0)
    res = wick.mean_of_word(word, matrix_cov(M))
    assert res.channel_sum("inner") == pytest.approx(M[0, 1] * M[2, 3])
    assert res.channel_sum("inner") + res.channel_sum("outer") == pytest.approx(res.total)
    assert res.to_csv().startswith("diagram_id,pair_list,channel,value_re,value_im\n")


def test_label_limit_and_flavor_mixing():
    with pytest.raises(ValueError):
        wick.mean_of_word(WickWord.product(labels(14)), lambda a, b: 1.0)
    with pytest.raises(ValueError):
        WickWord.product([FieldLabel(point=(0,)), FieldLabel(point=(1,), flavor="vector_A")])


def test_spec_covariance_momentum_delta():
    g = Grid((8, 8))
    spec = example_h_hat(g)
    cov = wick.spec_covariance(spec)
    assert cov(FieldLabel(point=(1, 2)), FieldLabel(point=(1, 2))) == 0
    assert cov(FieldLabel(point=(1, 2)), FieldLabel(point=(-1, -2))) == pytest.approx(g.volume * spec.covariance[1, 2, 0, 0])
    with pytest.raises(ValueError):
        cov(FieldLabel(point=(1,)), FieldLabel(point=(1, 2)))


def test_outer_channel_closed_form_smooth_h():
    def hd(n, xi):
        t, x = xi
        g = np.exp(-0.5 * t * t - 0.2 * x * x)
        return [g, -t * g, (t * t - 1) * g][n]

    x, y, x1, x2 = (0.1, 0.2), (0.7, -0.3), (1.1, 0.4), (-0.5, 0.9)
    res = wick.mean_of_word(wick.commutator_word(x, y, x1, x2, 2.0), wick.position_covariance(hd))
    assert res.channel_sum("outer") == pytest.approx(wick.outer_closed_form(hd, x, y, x1, x2, 2.0), rel=1e-12)
    assert res.channel_sum("inner") == pytest.approx(wick.inner_closed_form(hd, x, y, x1, x2, 2.0), rel=1e-12)
    assert abs(res.channel_sum("outer")) > 1e-3


def test_triple_channels_agree_with_enumeration():
    rng = np.random.default_rng(2)
    S = rng.normal(size=(4, 4))

    def K(j, l, q, pL, pR):
        return S[j, l] * np.exp(-np.sum(q**2)) * (1 + 0.3 * pL[0] - 0.2 * pR[1])

    q, r = np.array([0.4, -0.2]), np.array([0.1, 0.3])
    p, k, kp = rng.normal(size=(3, 2))
    direct = wick.mean_momentum_triple(q, -q, r, -r, K, p, k, kp, idx=(1, 2, 0, 3))
    enum = wick.triple_channels_by_enumeration(q, -q, r, -r, K, p, k, kp, idx=(1, 2, 0, 3))
    for ch in ("p1", "p2", "p3"):
        assert direct[ch] == pytest.approx(enum[ch], abs=1e-12)


def test_monte_carlo_agrees():
    g = Grid((8, 8))
    spec = example_h_hat(g)
    w = WickWord.product([FieldLabel(point=(1, 2)), FieldLabel(point=(-1, -2))])
    rep = wick.mc_check(w, spec, 20000, seed=0)
    assert rep.z_re < 5 and rep.z_im < 5
    with pytest.raises(ValueError):
        wick.mc_check(w, spec, 10, seed=0)
