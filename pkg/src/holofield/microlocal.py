"""Midpoint-symbol operators and their approximate calculus.

An operator with kernel A(x, y) = f(zeta) K(xi), zeta = (x + y)/2, xi = y - x,
is stored by its envelope f (position samples) and kernel K (a ScalarKernel).
Functions act on the two factors separately; products and inverses built this
way are exact for constant envelopes and pick up errors in powers of
l_min / l_Lambda otherwise.  General joint symbols sigma(zeta, k) are turned
into dense operators by ``symbol_operator``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import factorial
from typing import Callable, Sequence

import numpy as np

from .fields import ScalarKernel, kernel_from_position
from .holo import PhaseFamily
from .lattice import Grid, forward_ft
from .opalg import GAMMA, NonlocalOperator, compose, identity, triangle

__all__ = [
    "MidpointSymbolOperator",
    "g_ml",
    "ml_inverse",
    "product_law_defect",
    "inverse_defect",
    "spectral_derivative",
    "symbol_operator",
    "U_expansion_term",
    "U_exact",
    "microlocal_V_leading",
    "microlocal_B_dyn_leading",
    "B_simple",
]


@dataclass
class MidpointSymbolOperator:
    """A(x, y) = f(zeta) K(xi) with f sampled on the lattice."""

    envelope: np.ndarray
    kernel: ScalarKernel

    def __post_init__(self):
        self.envelope = np.asarray(self.envelope, dtype=complex)
        self.kernel.grid.check_field(self.envelope)

    @property
    def grid(self) -> Grid:
        return self.kernel.grid

    def operator(self) -> NonlocalOperator:
        return triangle(self.envelope, self.kernel)


def _apply_checked(g: Callable, values: np.ndarray, what: str, grid_values=None) -> np.ndarray:
    with np.errstate(all="ignore"):
        out = np.asarray(g(values))
    bad = ~np.isfinite(out)
    if bad.any():
        i = np.flatnonzero(bad.ravel())[0]
        raise ValueError(f"function is singular on the {what} at value {values.ravel()[i]!r}")
    return out


def g_ml(A: MidpointSymbolOperator, g: Callable) -> MidpointSymbolOperator:
    """Envelope g(f) and kernel g(K hat)."""
    env = _apply_checked(g, A.envelope, "envelope")
    K = A.kernel
    hat = _apply_checked(g, K.hat_values, "kernel")
    if np.max(np.abs(np.imag(hat))) > 1e-12 * max(1.0, np.max(np.abs(hat))):
        raise ValueError("g must map the (real) kernel values to real values")
    if K.func is not None:
        base = K.func

        def func(p):
            return np.real(g(base(p)))

        kern = ScalarKernel(K.grid, np.real(hat), label=K.label, func=func)
    else:
        kern = _kernel_from_hat(np.real(hat), K.grid, K.label)
    return MidpointSymbolOperator(env, kern)


def _kernel_from_hat(hat: np.ndarray, grid: Grid, label: int) -> ScalarKernel:
    from .fields import reflect
    from .lattice import inverse_ft

    return kernel_from_position(reflect(inverse_ft(hat, grid), grid), grid, label)


def ml_inverse(A: MidpointSymbolOperator, tol: float = 1e-8) -> MidpointSymbolOperator:
    """Envelope 1/f and kernel 1/K hat."""
    fmin = float(np.min(np.abs(A.envelope)))
    kmin = float(np.min(np.abs(A.kernel.hat_values)))
    fscale = float(np.max(np.abs(A.envelope)))
    kscale = float(np.max(np.abs(A.kernel.hat_values)))
    if fmin <= tol * fscale or kmin <= tol * kscale:
        raise np.linalg.LinAlgError(f"symbol too close to zero: min |f| = {fmin:.3e}, min |K hat| = {kmin:.3e}")
    return g_ml(A, lambda z: 1.0 / z)


def product_law_defect(A: MidpointSymbolOperator, g: Callable, g2: Callable) -> float:
    """||g_ml(A) g2_ml(A) - (g g2)_ml(A)|| / ||(g g2)_ml(A)||."""
    lhs = compose(g_ml(A, g).operator(), g_ml(A, g2).operator())
    rhs = g_ml(A, lambda z: g(z) * g2(z)).operator()
    return float((lhs - rhs).norm() / rhs.norm())


def inverse_defect(A: MidpointSymbolOperator) -> float:
    """||A_ml^{-1} A - 1|| in operator norm."""
    prod = compose(ml_inverse(A).operator(), A.operator())
    return float((prod - identity(A.grid)).norm())


# --- symbols depending jointly on zeta and k --------------------------------


def spectral_derivative(f: np.ndarray, grid: Grid, axis: int, order: int = 1) -> np.ndarray:
    """d^order f / dx_axis^order by FFT (Nyquist mode dropped for odd orders)."""
    n = grid.points[axis]
    k = 2 * np.pi * np.fft.fftfreq(n, grid.spacing[axis])
    if order % 2:
        k[n // 2] = 0.0
    shape = [1] * grid.dim
    shape[axis] = n
    F = np.fft.fft(np.asarray(f, dtype=complex), axis=axis)
    return np.fft.ifft(F * (1j * k.reshape(shape)) ** order, axis=axis)


def symbol_operator(sigma: Callable, grid: Grid) -> NonlocalOperator:
    """Operator with kernel int dk sigma(zeta, k) e^{-ik(x - y)}.

    ``sigma(k)`` receives one midpoint momentum vector and returns the symbol
    on the position lattice.  Entry (k_L, k_R) is the Fourier transform in
    zeta of sigma(., k_R + q/2) at q = k_L - k_R (both folded into the zone),
    the same midpoint rule the separable kernels use.
    """
    idx = grid.momentum_indices()
    pts = np.asarray(grid.points)
    dk = np.asarray(grid.momentum_spacing)
    q = grid.wrap_index(idx[:, None, :] - idx[None, :, :])
    # doubled midpoint 2 k_R + q folded into the zone
    sums = np.mod(2 * idx[None, :, :] + q + pts, 2 * pts) - pts
    lo = -pts
    span = 2 * pts
    sum_flat = np.ravel_multi_index(tuple(np.moveaxis(sums - lo, -1, 0)), tuple(span))
    q_flat = np.ravel_multi_index(tuple(np.moveaxis(np.mod(q, pts), -1, 0)), grid.shape)
    used = np.unique(sum_flat)
    table = np.zeros((used.size, grid.size), dtype=complex)
    for row, s in enumerate(used):
        s_vec = np.array(np.unravel_index(s, tuple(span))) + lo
        table[row] = forward_ft(np.asarray(sigma(0.5 * s_vec * dk), dtype=complex), grid).ravel()
    rows = np.searchsorted(used, sum_flat)
    return NonlocalOperator(table[rows, q_flat], grid, 1)


def _kernel_values(L: ScalarKernel, k: np.ndarray) -> float:
    if L.func is None:
        raise ValueError("joint symbols need analytic kernels")
    return float(L.func(np.asarray(k, dtype=float).reshape(-1, 1))[0])


def U_exact(phases: PhaseFamily, kernels: Sequence[ScalarKernel]) -> NonlocalOperator:
    """U(x, y) = sum_a e^{i Lambda_a(x)} L_a(y - x) (phase at the left point)."""
    from .holo import dephasing_U

    return dephasing_U(phases, kernels)


def U_expansion_term(phases: PhaseFamily, kernels: Sequence[ScalarKernel], p: int) -> NonlocalOperator:
    """Order-p Taylor term of U about the midpoint.

    sum over ordered index tuples (mu_1..mu_p) and families of
    (1/p!) d_{mu_1..mu_p} e^{i Lambda_a}(zeta) prod_j (-xi^{mu_j}/2) L_a(xi).
    """
    if p < 0:
        raise ValueError("p must be non-negative")
    grid = phases.grid
    xs = grid.positions(centered=True)
    out = None
    for a, L in enumerate(kernels):
        if L.position is not None:
            Lpos = np.asarray(L.position, dtype=complex)
        else:
            Lpos = _position_of(L)
        e = phases.phase(a)
        for combo in itertools.product(range(grid.dim), repeat=p):
            d = e
            for mu in combo:
                d = spectral_derivative(d, grid, mu)
            if np.max(np.abs(d)) < 1e-13:
                continue
            weight = np.ones(grid.shape)
            for mu in combo:
                # the unpaired point -extent/2 would break xi -> -xi symmetry
                edge = np.isclose(xs[mu], -0.5 * grid.extent[mu])
                weight = weight * np.where(edge, 0.0, -0.5 * xs[mu])
            # i^p xi^kappa L has a real transform for even L; undo i^p on the envelope
            K = kernel_from_position((1j**p) * weight * Lpos, grid) if p else L
            term = triangle(d * (-1j) ** p / factorial(p), K)
            out = term if out is None else out + term
    if out is None:
        return NonlocalOperator(np.zeros((grid.size, grid.size)), grid, 1)
    return out


def _position_of(L: ScalarKernel) -> np.ndarray:
    from .fields import reflect
    from .lattice import inverse_ft

    return reflect(inverse_ft(L.hat_values, L.grid), L.grid)


def _sum_symbol(phases: PhaseFamily, kernels, k, weights=None):
    """S(zeta, k) = sum_a w_a(zeta) e^{i Lambda_a(zeta)} L_a(k)."""
    out = 0.0
    for a, L in enumerate(kernels):
        w = 1.0 if weights is None else weights[a]
        out = out + w * phases.phase(a) * _kernel_values(L, k)
    return out


def microlocal_V_leading(phases: PhaseFamily, kernels: Sequence[ScalarKernel], floor: float = 1e-12) -> NonlocalOperator:
    """Zeroth-order mixing operator with symbol S / |S|, S = sum_a e^{i Lambda_a(zeta)} L_a hat(k).

    The sum over a, b of e^{-i Lambda_a + i Lambda_b} L_a L_b is |S|^2, so the
    leading symbol is a pure phase.
    """

    def sigma(k):
        S = _sum_symbol(phases, kernels, k)
        mag = np.abs(S)
        if np.min(mag) <= floor:
            raise np.linalg.LinAlgError("holographic sum symbol vanishes; leading mixing operator undefined")
        return S / mag

    return symbol_operator(sigma, phases.grid)


def _gradients(phases: PhaseFamily) -> np.ndarray:
    """d_mu Lambda_a, shape (N, dim) + grid.shape."""
    grid = phases.grid
    return np.array([[np.real(spectral_derivative(lam, grid, mu)) for mu in range(grid.dim)] for lam in phases.lambdas])


def _spin_sum(ops_by_mu, grid: Grid) -> NonlocalOperator:
    out = None
    for mu, op in enumerate(ops_by_mu):
        term = NonlocalOperator(np.kron(op.matrix, GAMMA[mu]), grid, 4)
        out = term if out is None else out + term
    return out


def microlocal_B_dyn_leading(phases: PhaseFamily, kernels: Sequence[ScalarKernel]) -> NonlocalOperator:
    """Leading potential with symbol gamma^mu Re(T_mu conj S) / |S|^2.

    T_mu = sum_a d_mu Lambda_a e^{i Lambda_a} L_a hat, which is the ratio of
    sums with weights (d-slash Lambda_a + d-slash Lambda_b)/2 written compactly.
    """
    grid = phases.grid
    grads = _gradients(phases)
    ops = []
    for mu in range(grid.dim):

        def sigma(k, mu=mu):
            S = _sum_symbol(phases, kernels, k)
            T = _sum_symbol(phases, kernels, k, weights=grads[:, mu])
            return np.real(T * np.conj(S)) / np.abs(S) ** 2

        ops.append(symbol_operator(sigma, grid))
    return _spin_sum(ops, grid)


def B_simple(phases: PhaseFamily, kernels: Sequence[ScalarKernel]) -> NonlocalOperator:
    """sum_a (d-slash Lambda_a)(zeta) L_a(xi)."""
    grid = phases.grid
    grads = _gradients(phases)
    ops = []
    for mu in range(grid.dim):
        op = None
        for a, L in enumerate(kernels):
            term = triangle(grads[a, mu], L)
            op = term if op is None else op + term
        ops.append(op)
    return _spin_sum(ops, grid)
