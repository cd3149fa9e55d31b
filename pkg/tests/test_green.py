import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holofield import green
from holofield.fields import ScalarKernel
from holofield.holo import make_phase_family
from holofield.lattice import Grid
from holofield.opalg import dirac_slash, krein_adjoint


def off_shell(grid, mass, gap):
    k2 = grid.momenta_flat()[:, 0] ** 2 - np.sum(grid.momenta_flat()[:, 1:] ** 2, axis=1)
    return np.abs(k2 - mass**2) > gap


@pytest.mark.parametrize("builder", [green.retarded_green, green.advanced_green, green.symmetric_green])
def test_green_inverts_dirac_off_shell(builder):
    g = Grid((8, 8))
    m = 0.4
    S = builder(m, g, 1e-9).as_matrix()
    D = dirac_slash(g).as_matrix() - m * np.eye(4 * g.size)
    prod = (D @ S).reshape(g.size, 4, g.size, 4)
    ok = off_shell(g, m, 0.05)
    diag = prod[ok, :, ok, :]
    assert np.allclose(diag, np.eye(4), atol=1e-6)


def test_symmetric_is_mean_of_causal_and_krein_symmetric():
    g = Grid((8, 8))
    s = green.symmetric_green(0.5, g, 1e-8)
    avg = (green.retarded_green(0.5, g, 1e-8) + green.advanced_green(0.5, g, 1e-8)) * 0.5
    ok = np.repeat(off_shell(g, 0.5, 0.05), 4)
    assert np.allclose(s.matrix[np.ix_(ok, ok)], avg.matrix[np.ix_(ok, ok)], rtol=1e-6, atol=1e-8)
    assert np.allclose(krein_adjoint(s).matrix, s.matrix, atol=1e-12)


def test_green_operator_validation():
    with pytest.raises(ValueError):
        green.GreenOperator("feynman", 1.0, 0.1)
    with pytest.raises(ValueError):
        green.GreenOperator("retarded", 1.0 + 1j, 0.1)
    with pytest.raises(ValueError):
        green.retarded_green(1.0, Grid((4, 4)), 0.0)


def test_projector_completeness():
    assert green.completeness_defect(Grid((8, 8))) < 1e-12


@given(st.floats(0.5, 50.0), st.sampled_from([-1.0, 1.0]))
def test_regularized_pp_tends_to_inverse(x, sign):
    eps = 1e-3
    assert abs(green.regularized_pp(sign * x, eps) - 1 / (sign * x)) < 1e-9
    assert green.regularized_pp(sign * x, eps) == pytest.approx(-green.regularized_pp(-sign * x, eps))


def test_product_identity_converges():
    res = green.product_identity_residuals(0.3, [0.1, 0.05, 0.025], chi_center=0.3)
    r = res["residual"]
    assert r[0] > r[1] > r[2]
    assert abs(res["coefficient"][-1]) / np.pi**2 == pytest.approx(1.0, abs=0.1)
    assert green.ps_identity_residual(0.3, 1e-4) < green.ps_identity_residual(0.3, 1e-2)


def small_gamma(seed=0):
    g = Grid((4, 4))

    def f(p):
        return np.exp(-0.5 * (p[0] ** 2 + p[1] ** 2))

    L = ScalarKernel(g, f(np.array(g.momenta())), func=f)
    ph = make_phase_family(1, 4.0, 0.3, seed=seed, grid=g)
    return green.make_gamma(ph, [L])


def test_gamma_is_krein_symmetric():
    assert small_gamma().krein_defect() < 1e-12


def test_commutator_exponential_identity():
    assert green.commexp_residual(small_gamma(), quadrature_points=16) < 1e-10


def test_green_defect_identity():
    _, E, res = green.check_green_defect(small_gamma(1), 0.7, quadrature_points=16)
    assert res < 1e-10
    assert E.norm() > 0


def test_mixing_defect_grows_with_amplitude():
    d = [green.mixing_unitarity_defect(green.SpectralMixingModel(n=60, amplitude=a), 1)[0] for a in (0.05, 0.2)]
    assert d[0] < d[1] < 1e-1
