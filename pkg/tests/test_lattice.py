import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from holofield.lattice import (
    Grid,
    RegularizedDelta,
    Scales,
    forward_ft,
    inverse_ft,
    minkowski_square,
    nascent_delta,
    sign_epsilon,
)


def test_grid_rejects_odd_and_bad_dims():
    with pytest.raises(ValueError):
        Grid((3, 4))
    with pytest.raises(ValueError):
        Grid((4,))
    with pytest.raises(ValueError):
        Grid((4, 4), spacing=0.0)


def test_grid_geometry():
    g = Grid((8, 4), spacing=(0.5, 2.0))
    assert g.extent == (4.0, 8.0)
    assert g.volume == pytest.approx(32.0)
    assert g.momentum_spacing == pytest.approx((2 * np.pi / 4, 2 * np.pi / 8))
    assert g.momentum_indices().shape == (32, 2)
    assert g.flat_index((-1, 0)) == 7 * 4


def test_gaussian_transform_matches_closed_form():
    # int exp(-|x|^2/2) e^{i p.x} d^2x = 2 pi exp(-|p|^2/2)
    g = Grid((64, 64), spacing=0.25)
    x = g.positions()
    f = np.exp(-0.5 * (x[0] ** 2 + x[1] ** 2))
    p = g.momenta()
    exact = 2 * np.pi * np.exp(-0.5 * (p[0] ** 2 + p[1] ** 2))
    assert np.max(np.abs(forward_ft(f, g) - exact)) < 1e-12


def test_transform_sign_conventions():
    # e^{-i p0 t + i p1 x} concentrates at +p on both axes
    g = Grid((8, 8))
    x = g.positions()
    p0, p1 = g.momentum_spacing
    f = np.exp(-1j * 2 * p0 * x[0] + 1j * 3 * p1 * x[1])
    F = np.abs(forward_ft(f, g))
    assert np.unravel_index(np.argmax(F), g.shape) == (2, 3)


@given(st.integers(0, 2**31 - 1))
def test_inverse_roundtrip(seed):
    g = Grid((6, 4, 4), spacing=(0.7, 1.0, 1.3))
    rng = np.random.default_rng(seed)
    f = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    assert np.allclose(inverse_ft(forward_ft(f, g), g), f, atol=1e-12)


@pytest.mark.parametrize("shape", ["gaussian", "triangular"])
def test_nascent_delta_normalized(shape):
    val, _ = integrate.quad(lambda v: nascent_delta(v, 0.3, shape), -5, 5, points=[0.0])
    assert val == pytest.approx(1.0, abs=1e-10)
    assert RegularizedDelta(0.3, shape).peak == pytest.approx(nascent_delta(0.0, 0.3, shape))


def test_minkowski_and_sign():
    assert minkowski_square(np.array([2.0, 1.0, 0.5])) == pytest.approx(2.75)
    assert sign_epsilon(0.0) == 0.0
    assert list(sign_epsilon([-2.0, 3.0])) == [-1.0, 1.0]


def test_scales_ordering():
    s = Scales(eps=0.01, l_min=1.0, l_lambda=5.0, l_macro=100.0, omega_min=2.0)
    assert s.theta == pytest.approx(1 / np.sqrt(2.0))
    with pytest.raises(ValueError):
        Scales(eps=0.01, l_min=1.0, l_lambda=500.0, l_macro=100.0, omega_min=2.0)
    with pytest.raises(ValueError):
        Scales(eps=0.01, l_min=1.0, l_lambda=5.0, l_macro=100.0, omega_min=1000.0)
