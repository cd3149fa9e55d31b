import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from holofield.fields import (
    FieldRealization,
    GaussianFieldSpec,
    ScalarKernel,
    example_h_hat,
    example_L_hat,
    h_closed_form,
    kernel_from_position,
    psd_repair,
    sample,
    sample_modes,
)
from holofield.lattice import Grid, RegularizedDelta


def gaussian_kernels(g, width=1.5):
    x = g.positions()
    pos = np.exp(-0.5 * sum(xi**2 for xi in x) / width**2)

    def f(p):
        return 2 * np.pi * width**2 * np.exp(-0.5 * width**2 * (p[0] ** 2 + p[1] ** 2))

    analytic = ScalarKernel(g, f(np.array(g.momenta())), func=f)
    return analytic, kernel_from_position(pos, g)


def test_example_L_hat_values():
    g = Grid((8, 8))
    L = example_L_hat(4.0, g)
    assert float(L.at(np.array([2.0, 7.0]))) == pytest.approx(4.5)


def test_h_closed_form_frozen():
    assert float(h_closed_form(0.0, 2.0)) == pytest.approx(1 / (32 * np.pi**2), rel=1e-14)
    assert float(h_closed_form(3.0, 2.0)) == 0.0
    assert float(h_closed_form(-1.0, 2.0)) == pytest.approx(0.0031662869888230555, rel=1e-12)


def test_example_h_hat_zero_plane_and_symmetry():
    g = Grid((16, 16))
    spec = example_h_hat(g)
    assert np.all(spec.covariance[0] == 0)
    spec.validate()


@pytest.mark.parametrize("transfer", [(0, 0), (1, 0), (0, 1), (1, 1), (3, -5), (-2, 3)])
def test_sampled_midpoint_matches_analytic(transfer):
    # resolved Gaussian: table interpolation agrees with the analytic midpoint
    g = Grid((32, 32))
    analytic, sampled = gaussian_kernels(g)
    idx = g.momentum_indices()
    kr = idx[np.all(np.abs(idx) < 6, axis=1)]
    kl = kr + np.asarray(transfer)
    a = analytic.midpoint(kl, kr)
    s = sampled.midpoint(kl, kr)
    assert np.max(np.abs(a - s)) < 1e-10 * np.max(np.abs(a))


def test_kernel_must_be_real():
    g = Grid((4, 4))
    with pytest.raises(ValueError):
        ScalarKernel(g, 1j * np.ones(g.shape))


def test_sample_is_real_and_deterministic():
    g = Grid((8, 8))
    spec = example_h_hat(g)
    a = sample(spec, seed=3)
    b = sample(spec, seed=3)
    assert a.reality_defect() < 1e-14
    assert np.array_equal(a.hat_values, b.hat_values)
    assert np.max(np.abs(np.imag(np.fft.ifftn(a.hat_values[..., 0])))) < 1e-12


@given(st.integers(0, 2**31 - 1))
def test_realization_bytes_roundtrip(seed):
    g = Grid((4, 6), spacing=(0.5, 1.0))
    spec = GaussianFieldSpec(g, np.ones(g.shape))
    r = sample(spec, seed=seed)
    back = FieldRealization.from_bytes(r.to_bytes())
    assert back.grid == g and back.seed == seed
    assert np.array_equal(back.hat_values, r.hat_values)


def test_sample_modes_second_moment():
    # E[W(q) W(-q)] = V hhat(q)
    g = Grid((8, 8))
    spec = GaussianFieldSpec(g, np.ones(g.shape))
    d = sample_modes(spec, [(1, 2), (-1, -2)], 20000, seed=1)
    m = np.mean(d[:, 0, 0] * d[:, 1, 0])
    se = np.std(d[:, 0, 0] * d[:, 1, 0]) / np.sqrt(20000)
    assert abs(m - g.volume) < 5 * se


def test_psd_repair_and_validation():
    g = Grid((4, 4))
    bad = GaussianFieldSpec(g, -0.1 * np.ones(g.shape))
    with pytest.raises(ValueError, match="positive semi-definite"):
        bad.validate()
    psd_repair(bad, 0.2).validate()
    with pytest.raises(ValueError):
        psd_repair(bad, -1.0)


def test_regularized_delta_spec_width():
    g = Grid((16, 16))
    wide = example_h_hat(g, RegularizedDelta(2.0)).covariance
    narrow = example_h_hat(g, RegularizedDelta(0.1)).covariance
    assert np.count_nonzero(np.abs(wide) > 1e-6) > np.count_nonzero(np.abs(narrow) > 1e-6)
