import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holofield import fock
from holofield.fields import ScalarKernel
from holofield.lattice import Grid


def cvec(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@given(st.integers(0, 2**31 - 1))
def test_slater_overlap_is_determinant(seed):
    # <psi_1^..^psi_L, chi_1^..^chi_L> = det <psi_i, chi_j>
    rng = np.random.default_rng(seed)
    a, b = cvec(rng, 1, 3, 5), cvec(rng, 1, 3, 5)
    sa, sb = fock.ToyFockState.from_orbitals(a), fock.ToyFockState.from_orbitals(b)
    gram = np.conj(a[0]) @ b[0].T
    assert sa.inner(sb) == pytest.approx(np.linalg.det(gram), rel=1e-10)


@given(st.integers(0, 2**31 - 1))
def test_car_and_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    s = fock.ToyFockState.from_orbitals(cvec(rng, 3, 2, 6))
    assert fock.antisymmetry_defect(s) < 1e-14
    d = fock.anticommutator_defect(s, cvec(rng, 3, 6), cvec(rng, 6))
    assert d["mixed"] < 1e-12 and d["create"] < 1e-12


def test_car_on_vacuum_and_pauli():
    rng = np.random.default_rng(0)
    vac = fock.ToyFockState.vacuum([1.0, 2.0])
    d = fock.anticommutator_defect(vac, cvec(rng, 4), cvec(rng, 4))
    assert d["mixed"] < 1e-14
    psi = cvec(rng, 4)
    twice = fock.apply_fermion_create(fock.apply_fermion_create(vac, psi), psi)
    assert twice.norm() < 1e-14


def test_creation_annihilation_adjoint():
    rng = np.random.default_rng(1)
    s1 = fock.ToyFockState.from_orbitals(cvec(rng, 2, 1, 5))
    s2 = fock.ToyFockState.from_orbitals(cvec(rng, 2, 2, 5))
    psi = cvec(rng, 5)
    lhs = s2.inner(fock.apply_fermion_create(s1, psi))
    rhs = fock.apply_fermion_annihilate(s2, psi).inner(s1)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_boson_routing_composes():
    rng = np.random.default_rng(2)
    s = fock.ToyFockState.from_orbitals(cvec(rng, 3, 2, 4))
    M1, M2 = cvec(rng, 3, 3), cvec(rng, 3, 3)
    a = fock.apply_boson(fock.apply_boson(s, M1), M2)
    b = fock.apply_boson(s, M2 @ M1)
    assert np.allclose(a.tensors, b.tensors)
    with pytest.raises(ValueError):
        fock.apply_boson(s, np.eye(2))


def test_serialization_roundtrip():
    rng = np.random.default_rng(3)
    s = fock.ToyFockState.from_orbitals(cvec(rng, 2, 3, 4))
    data = s.to_bytes()
    assert data[:4] == b"HFK1"
    assert np.array_equal(fock.ToyFockState.from_bytes(data).tensors, s.tensors)
    with pytest.raises(ValueError):
        fock.ToyFockState.from_bytes(b"XXXX" + data[4:])


def test_size_limits():
    with pytest.raises(ValueError):
        fock.ToyFockState.from_orbitals(np.ones((2, 1, 9)))
    with pytest.raises(ValueError):
        fock.ToyFockState.from_orbitals(np.ones((2, 4, 5)))


def test_entropy_product_vs_entangled():
    rng = np.random.default_rng(4)
    orb = np.broadcast_to(cvec(rng, 1, 2, 5), (2, 2, 5))
    product = fock.ToyFockState.from_orbitals(orb, weights=[0.6, 0.8])
    assert fock.bosonic_entropy(product) == pytest.approx(0.0, abs=1e-12)
    # two orthogonal Slater states with equal weights: entropy log 2
    e = np.eye(4)
    ent = fock.ToyFockState.from_orbitals(np.array([[e[0]], [e[1]]]))
    assert fock.bosonic_entropy(ent) == pytest.approx(np.log(2), rel=1e-12)


def test_dyson_step_orders():
    spec = fock.toy_qed_spec(N=2, seed=0)
    rng = np.random.default_rng(5)
    s = fock.ToyFockState.from_orbitals(np.broadcast_to(cvec(rng, 1, 2, 8), (2, 2, 8)), weights=[0.6, 0.8])
    s = s * (1 / s.norm())
    errs = [(fock.dyson_step(s, spec, dt, t0=0.3) - fock.exact_step(s, spec, dt, t0=0.3)).norm() for dt in (0.04, 0.02)]
    assert np.log2(errs[0] / errs[1]) == pytest.approx(3.0, abs=0.3)
    assert abs(fock.exact_step(s, spec, 0.1).norm() - 1) < 1e-9
    assert fock.bosonic_entropy(fock.dyson_step(s, spec, 0.2)) > 1e-3


def test_factorization_against_chain():
    g = Grid((8, 8))

    def f(p):
        return np.exp(-0.3 * (p[0] ** 2 + p[1] ** 2))

    ks = [ScalarKernel(g, f(np.array(g.momenta())), func=f)]
    rng = np.random.default_rng(6)
    res = fock.factorization_check([(1, 2), (-2, 1)], (0, 1), ks, cvec(rng, 2, 1, 2), spinor=rng.normal(size=4))
    assert res.deviation < 1e-10
