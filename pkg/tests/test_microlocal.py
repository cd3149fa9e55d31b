import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holofield import microlocal as ml
from holofield.fields import ScalarKernel
from holofield.holo import PhaseFamily, dephasing_U, fit_slope, polar_V
from holofield.lattice import Grid
from holofield.opalg import GAMMA, multiplication


def kernel(g, f):
    return ScalarKernel(g, f(np.array(g.momenta())), func=f)


def odd_kernel(g):
    return kernel(g, lambda p: 1 + 0.6 * np.sin(p[1]) * np.exp(-0.25 * p[1] ** 2))


@pytest.fixture(scope="module")
def line():
    return Grid((2, 128))


@given(st.floats(0.5, 3.0))
def test_constant_envelope_inverse_is_exact(c):
    g = Grid((2, 64))
    A = ml.MidpointSymbolOperator(c * np.ones(g.shape), odd_kernel(g))
    assert ml.inverse_defect(A) < 1e-12


def test_constant_envelope_product_law_exact(line):
    A = ml.MidpointSymbolOperator(1.3 * np.ones(line.shape), odd_kernel(line))
    assert ml.product_law_defect(A, np.exp, np.sqrt) < 1e-12


def test_inverse_rejects_zero_symbol(line):
    A = ml.MidpointSymbolOperator(np.zeros(line.shape), odd_kernel(line))
    with pytest.raises(np.linalg.LinAlgError):
        ml.ml_inverse(A)
    with pytest.raises(ValueError, match="singular"):
        ml.g_ml(ml.MidpointSymbolOperator(np.ones(line.shape), kernel(line, lambda p: 0 * p[1])), lambda z: 1 / z)


def test_inverse_defect_shrinks_like_square(line):
    x = np.array(line.positions(centered=False))[1]
    K = odd_kernel(line)
    d = []
    ls = [128 / (2 * np.pi * m) for m in (4, 2, 1)]
    for le in ls:
        d.append(ml.inverse_defect(ml.MidpointSymbolOperator(1.5 + 0.5 * np.cos(x / le), K)))
    assert fit_slope(ls, d) == pytest.approx(-2.0, abs=0.4)


def test_spectral_derivative_of_sine():
    g = Grid((2, 64), spacing=(1.0, 0.5))
    x = np.array(g.positions(centered=False))[1]
    k = 2 * np.pi * 3 / g.extent[1]
    d = ml.spectral_derivative(np.sin(k * x), g, 1)
    assert np.allclose(d, k * np.cos(k * x), atol=1e-12)
    d2 = ml.spectral_derivative(np.sin(k * x), g, 1, order=2)
    assert np.allclose(d2, -k * k * np.sin(k * x), atol=1e-11)


def test_symbol_operator_reduces_to_multiplication():
    g = Grid((4, 8))
    x = np.array(g.positions(centered=False))
    f = 1 + 0.3 * np.cos(2 * np.pi * x[1] / g.extent[1])
    op = ml.symbol_operator(lambda k: f, g)
    assert np.allclose(op.matrix, multiplication(f, g).matrix, atol=1e-12)


def test_symbol_operator_reduces_to_triangle():
    g = Grid((2, 32))
    x = np.array(g.positions(centered=False))
    f = 1 + 0.3 * np.cos(2 * np.pi * x[1] / g.extent[1])
    K = odd_kernel(g)
    op = ml.symbol_operator(lambda k: f * K.at(k.reshape(-1, 1))[0], g)
    assert np.allclose(op.matrix, ml.MidpointSymbolOperator(f, K).operator().matrix, atol=1e-10)


def phases(g, le):
    x = np.array(g.positions(centered=False))[1]
    return PhaseFamily(g, np.array([np.cos(x / le), np.sin(x / le + 0.3)]), 1 / le, 1.0, 0)


def test_U_expansion_zeroth_order_is_midpoint_form():
    g = Grid((2, 64))
    ph = phases(g, 64 / (2 * np.pi))
    Ls = [kernel(g, lambda p: np.ones_like(p[1])), kernel(g, lambda p: 0.5 * np.exp(-2 * p[1] ** 2))]
    U = ml.U_exact(ph, Ls)
    acc = ml.U_expansion_term(ph, Ls, 0)
    e0 = (U - acc).norm()
    acc = acc + ml.U_expansion_term(ph, Ls, 1)
    e1 = (U - acc).norm()
    assert e1 < 0.3 * e0
    with pytest.raises(ValueError):
        ml.U_expansion_term(ph, Ls, -1)


def test_leading_V_close_to_polar_factor():
    g = Grid((2, 128))
    ph = phases(g, 128 / (2 * np.pi))
    Ls = [kernel(g, lambda p: np.ones_like(p[1])), kernel(g, lambda p: 0.5 * np.exp(-0.5 * p[1] ** 2))]
    V = polar_V(dephasing_U(ph, Ls))
    Vm = ml.microlocal_V_leading(ph, Ls)
    assert (V - Vm).norm() < 0.05
    M = Vm.as_matrix()
    assert np.linalg.norm(M.conj().T @ M - np.eye(g.size), 2) < 0.05


def test_B_simple_single_family_is_gradient_times_kernel():
    g = Grid((2, 32))
    x = np.array(g.positions(centered=False))[1]
    le = 32 / (2 * np.pi)
    ph = PhaseFamily(g, np.cos(x / le)[None], 1 / le, 1.0, 0)
    one = kernel(g, lambda p: np.ones_like(p[1]))
    B = ml.B_simple(ph, [one])
    expected = multiplication(-np.sin(x / le) / le, g).matrix
    # spatial component carries gamma^1
    assert np.allclose(B.matrix, np.kron(expected, GAMMA[1]), atol=1e-12)
    Bd = ml.microlocal_B_dyn_leading(ph, [one])
    assert np.allclose(Bd.matrix, B.matrix, atol=1e-10)
