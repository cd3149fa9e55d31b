import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holofield.fields import ScalarKernel, example_L_hat
from holofield.lattice import Grid
from holofield.opalg import (
    GAMMA,
    BandOperator,
    NonlocalOperator,
    band_commutator,
    commutator,
    compose,
    dirac_slash,
    from_position_kernel,
    from_separable,
    identity,
    krein_adjoint,
    mean_commutator_scalar,
    multiplication,
    plane_wave,
    slice_transfer,
    to_position_kernel,
    triangle,
)

ETA = np.diag([1.0, -1.0, -1.0, -1.0])


def random_op(g, seed, spin=1):
    rng = np.random.default_rng(seed)
    n = g.size * spin
    return NonlocalOperator.from_action(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)), g, spin)


def test_clifford_relations():
    for mu in range(4):
        for nu in range(4):
            anti = GAMMA[mu] @ GAMMA[nu] + GAMMA[nu] @ GAMMA[mu]
            assert np.allclose(anti, 2 * ETA[mu, nu] * np.eye(4), atol=1e-15)


def test_dirac_slash_squares_to_k2():
    g = Grid((4, 4, 4))
    D = dirac_slash(g)
    k = g.momenta_flat()
    k2 = k[:, 0] ** 2 - np.sum(k[:, 1:] ** 2, axis=1)
    assert np.allclose((D @ D).as_matrix(), np.kron(np.diag(k2), np.eye(4)), atol=1e-12)


def test_identity_is_neutral():
    g = Grid((4, 6))
    A = random_op(g, 0)
    assert np.allclose((identity(g) @ A).matrix, A.matrix)
    assert np.allclose(A.apply(np.ones(g.size)), A.as_matrix() @ np.ones(g.size))


@given(st.integers(0, 2**31 - 1))
def test_krein_adjoint_involution_and_product(seed):
    g = Grid((2, 2))
    A = random_op(g, seed, 4)
    B = random_op(g, seed + 1, 4)
    assert np.allclose(krein_adjoint(krein_adjoint(A)).matrix, A.matrix)
    assert np.allclose(krein_adjoint(A @ B).matrix, (krein_adjoint(B) @ krein_adjoint(A)).matrix)


def test_commutator_matches_compose():
    g = Grid((4, 4))
    A, B = random_op(g, 1), random_op(g, 2)
    assert np.allclose(commutator(A, B).matrix, (A @ B - B @ A).matrix)


def test_plane_wave_shifts_momentum():
    g = Grid((8, 8))
    P = plane_wave((1, 2), g)
    v = np.zeros(g.size)
    v[g.flat_index((0, 0))] = 1.0
    out = P.apply(v * g.volume)
    assert abs(out[g.flat_index((1, 2))] - g.volume) < 1e-12


def test_position_kernel_roundtrip_and_multiplication():
    g = Grid((4, 6))
    A = random_op(g, 5)
    assert np.allclose(from_position_kernel(to_position_kernel(A), g).matrix, A.matrix)
    x = g.positions(centered=False)
    f = np.cos(x[0]) + 0.3 * np.sin(2 * x[1])
    K = to_position_kernel(multiplication(f, g))
    # f(x) delta(x - y) with the lattice delta 1 / cell volume
    assert np.allclose(K, np.diag(f.ravel()) / g.cell_volume, atol=1e-12)


def test_triangle_position_kernel():
    # (A > L)(x, y) = A((x + y)/2) L(y - x) for a constant envelope and Gaussian L
    # width 2.5 on a 40^2 lattice: aliasing in both spaces below 1e-13
    g = Grid((40, 40))
    w = 2.5

    def f(p):
        return 2 * np.pi * w**2 * np.exp(-0.5 * w**2 * (p[0] ** 2 + p[1] ** 2))

    L = ScalarKernel(g, f(np.array(g.momenta())), func=f)
    K = to_position_kernel(triangle(2.0 * np.ones(g.shape), L))
    x = np.array([c.ravel() for c in g.positions(centered=False)])
    ext = np.asarray(g.extent)[:, None, None]
    xi = np.mod(x[:, None, :] - x[:, :, None] + ext / 2, ext) - ext / 2
    exact = 2.0 * np.exp(-0.5 * (xi[0] ** 2 + xi[1] ** 2) / w**2)
    assert np.max(np.abs(K - exact)) < 1e-10


def test_band_operator_matches_dense_slice():
    g = Grid((8, 8))
    L = example_L_hat(3.0, g)
    what = np.zeros(g.shape, dtype=complex)
    what[1, 2] = 0.7
    dense = from_separable(what, L)
    band = BandOperator.from_field(0.7, (1, 2), L)
    assert np.allclose(band.to_dense().matrix, slice_transfer(dense, (1, 2)).base.matrix)


def test_band_commutator_matches_dense():
    g = Grid((8, 8))
    L = example_L_hat(3.0, g)
    A = BandOperator.from_field(1.0, (1, 1), L)
    B = BandOperator.from_field(1.0, (-1, 2), L)
    dense = commutator(A.to_dense(), B.to_dense())
    comm = band_commutator(A, B)
    ok = ~comm.wrapped
    cols = np.arange(g.size)[ok]
    assert np.allclose(dense.matrix[comm._target[ok], cols], comm.values[ok])


def test_mean_commutator_closed_form():
    # hhat (L(k + q/2)^2 - L(k - q/2)^2) = hhat (2 q0 + 2 k0 q0 / C^2)
    g = Grid((32, 32))
    C, q, h = 5.0, (3, 2), 0.25
    band = mean_commutator_scalar(h, q, example_L_hat(C, g))
    k = g.momenta_flat()
    q0 = q[0] * g.momentum_spacing[0]
    exact = h * (2 * q0 + 2 * k[:, 0] * q0 / C**2)
    ok = ~band.wrapped
    assert np.allclose(band.values[ok], exact[ok], atol=1e-12)


def test_shape_errors():
    g = Grid((4, 4))
    with pytest.raises(ValueError):
        NonlocalOperator(np.eye(3), g)
    with pytest.raises(ValueError):
        compose(random_op(g, 0), random_op(Grid((4, 6)), 0))
    with pytest.raises(ValueError):
        slice_transfer(random_op(g, 0), (0.5, 1))
