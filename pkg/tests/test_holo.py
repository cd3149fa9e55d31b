import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holofield import holo
from holofield.fields import ScalarKernel
from holofield.lattice import Grid
from holofield.opalg import identity


def kernel(g, f):
    return ScalarKernel(g, f(np.array(g.momenta())), func=f)


@given(st.floats(-3, 3), st.floats(0.1, 10))
def test_fit_slope_recovers_power_law(power, scale):
    x = np.array([1.0, 2.0, 4.0, 8.0])
    assert holo.fit_slope(x, scale * x**power) == pytest.approx(power, abs=1e-9)


def test_phase_family_statistics():
    g = Grid((32, 32))
    ph = holo.make_phase_family(3, 8.0, 0.7, seed=1, grid=g)
    assert ph.N == 3 and ph.l_lambda == pytest.approx(8.0)
    assert np.sqrt(np.mean(ph.lambdas**2)) == pytest.approx(0.7)
    assert np.abs(ph.phase(0) * ph.phase(0, -1) - 1).max() < 1e-14
    with pytest.raises(ValueError):
        holo.make_phase_family(1, 2.0, 0.7, seed=1, grid=g)


def test_single_zero_phase_U_is_convolution():
    g = Grid((8, 8))
    ph = holo.PhaseFamily(g, np.zeros((1,) + g.shape), 0.1, 0.0, 0)
    U = holo.dephasing_U(ph, [kernel(g, lambda p: np.ones_like(p[0]))])
    assert np.allclose(U.matrix, identity(g).matrix)


@given(st.integers(0, 2**31 - 1))
def test_polar_V_is_unitary(seed):
    g = Grid((2, 16))
    ph = holo.make_phase_family(2, 4.0, 1.0, seed=seed, grid=g)
    L1 = kernel(g, lambda p: np.ones_like(p[1]))
    L2 = kernel(g, lambda p: 0.5 * np.exp(-0.5 * p[1] ** 2))
    V = holo.polar_V(holo.dephasing_U(ph, [L1, L2]))
    M = V.as_matrix()
    assert np.linalg.norm(M.conj().T @ M - np.eye(g.size), 2) < 1e-10


def test_polar_V_rejects_singular():
    g = Grid((2, 8))
    ph = holo.PhaseFamily(g, np.zeros((1,) + g.shape), 0.1, 0.0, 0)
    with pytest.raises(np.linalg.LinAlgError):
        holo.polar_V(holo.dephasing_U(ph, [kernel(g, lambda p: np.zeros_like(p[0]))]))


def test_phase_matching_rule_cases():
    assert holo.phase_matching_survivors((0, 1, 2, 1), (0, 1, 2, 1), 3)[0]
    assert holo.phase_matching_survivors((0, 1, 2, 1), (0, 2, 1, 1), 3) == (True, {3: 2})
    assert not holo.phase_matching_survivors((0, 1, 2, 1), (0, 1, 0, 1), 3)[0]
    with pytest.raises(ValueError):
        holo.phase_matching_survivors((0, 1), (0, 1), 2)


def test_commutator_family_structure():
    fam = holo.build_M_family(8, 2, [(1, 0)], lambda q: [[2.0]], seed=0, layout="disjoint")
    key = next(iter(fam.keys())) + (1,)
    M = fam.dense(key)
    comm = M @ M.conj().T - M.conj().T @ M
    assert np.linalg.matrix_rank(comm) == 4
    assert np.allclose(np.sort(np.linalg.eigvalsh(comm))[[0, -1]], [-2.0, 2.0])
    assert fam.cross_ratio()["ratio"] == pytest.approx(0.0, abs=1e-14)
    sites = fam.target_subspace(0, 0)
    D = fam.diagonal_sum(0, 0, 0)
    assert np.allclose(D[np.ix_(sites, sites)], 2.0 * np.eye(sites.size))


def test_low_rank_norm_matches_dense():
    fam = holo.build_M_family(4, 2, [(1, 0), (-1, 1)], lambda q: [[1.0 if q[0] > 0 else -1.0]], seed=2)
    keys = [k + (s,) for k in fam.keys() for s in (1, -1)]
    for a, b in zip(keys[::3], keys[1::3]):
        assert fam.commutator_norm(a, b) == pytest.approx(fam.commutator_norm(a, b, dense=True), abs=1e-12)


def test_counting_small():
    res = holo.counting_slopes((100, 1000, 10000), seed=3, trials=64)
    assert res["b_eq_d"]["slope"] == pytest.approx(1.0, abs=0.1)
    assert res["b_neq_d"]["slope"] == pytest.approx(0.5, abs=0.1)


def test_suppression_ratio_falls_with_scale():
    big = holo.suppression_ratio(0.5, 1)
    small = holo.suppression_ratio(0.125, 1)
    assert 0 < small < big
