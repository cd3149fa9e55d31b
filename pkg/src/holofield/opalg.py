"""Dense nonlocal-operator algebra over the momentum lattice.

An operator is stored through its momentum kernel ``B(k_L, k_R)``.  It acts as
``(B psi)(k_L) = (1/V) sum_{k_R} B(k_L, k_R) psi(k_R)``, so the identity has
kernel ``V * 1`` and composition carries one factor ``1/V`` per internal sum.
Row and column index is ``flat_momentum * spin_dim + spin``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FieldRealization, ScalarKernel
from .lattice import Grid, forward_ft

__all__ = [
    "NonlocalOperator",
    "FieldOperator",
    "BandOperator",
    "GAMMA",
    "identity",
    "diagonal",
    "multiplication",
    "from_separable",
    "triangle",
    "slice_transfer",
    "compose",
    "commutator",
    "krein_adjoint",
    "plane_wave",
    "dfrak",
    "dirac_slash",
    "time_frequency",
    "field_op_scalar_position",
    "to_position_kernel",
    "from_position_kernel",
    "transfer_labels",
]


def _gamma_matrices() -> np.ndarray:
    s = [
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    ]
    z = np.zeros((2, 2), dtype=complex)
    e = np.eye(2, dtype=complex)
    g0 = np.block([[e, z], [z, -e]])
    gs = [np.block([[z, si], [-si, z]]) for si in s]
    return np.array([g0] + gs)


#: Dirac matrices in the Dirac representation, gamma^0 .. gamma^3
GAMMA = _gamma_matrices()


class NonlocalOperator:
    """Momentum-space kernel of an integral operator on a periodic lattice."""

    def __init__(self, matrix: np.ndarray, grid: Grid, spin_dim: int = 1):
        matrix = np.asarray(matrix, dtype=complex)
        n = grid.size * spin_dim
        if matrix.shape != (n, n):
            raise ValueError(f"matrix shape {matrix.shape} does not match {n}x{n}")
        if spin_dim not in (1, 4):
            raise ValueError("spin_dim must be 1 or 4")
        self.matrix = matrix
        self.grid = grid
        self.spin_dim = spin_dim

    def _check(self, other: "NonlocalOperator"):
        if not isinstance(other, NonlocalOperator):
            raise TypeError("expected a NonlocalOperator")
        if other.grid != self.grid or other.spin_dim != self.spin_dim:
            raise ValueError("grid or spin dimension mismatch")

    def __matmul__(self, other):
        return compose(self, other)

    def __add__(self, other):
        self._check(other)
        return NonlocalOperator(self.matrix + other.matrix, self.grid, self.spin_dim)

    def __sub__(self, other):
        self._check(other)
        return NonlocalOperator(self.matrix - other.matrix, self.grid, self.spin_dim)

    def __neg__(self):
        return NonlocalOperator(-self.matrix, self.grid, self.spin_dim)

    def __mul__(self, scalar):
        return NonlocalOperator(self.matrix * scalar, self.grid, self.spin_dim)

    __rmul__ = __mul__

    def adjoint(self) -> "NonlocalOperator":
        return krein_adjoint(self)

    def apply(self, psi_hat: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(psi_hat) / self.grid.volume

    def as_matrix(self) -> np.ndarray:
        """Matrix of the action on momentum components (identity -> 1)."""
        return self.matrix / self.grid.volume

    def norm(self) -> float:
        """Operator norm of the action."""
        return float(np.linalg.norm(self.as_matrix(), 2))

    @classmethod
    def from_action(cls, action: np.ndarray, grid: Grid, spin_dim: int = 1):
        return cls(np.asarray(action) * grid.volume, grid, spin_dim)


def transfer_labels(grid: Grid):
    """Integer labels of rows, columns and the wrapped transfer k_L - k_R."""
    idx = grid.momentum_indices()
    kl = idx[:, None, :]
    kr = idx[None, :, :]
    return kl, kr, grid.wrap_index(kl - kr)


def identity(grid: Grid, spin_dim: int = 1) -> NonlocalOperator:
    return NonlocalOperator(grid.volume * np.eye(grid.size * spin_dim), grid, spin_dim)


def diagonal(values: np.ndarray, grid: Grid) -> NonlocalOperator:
    """Multiplication in momentum space by a scalar or 4x4 function of k."""
    v = np.asarray(values, dtype=complex)
    if v.shape[: grid.dim] == grid.shape:
        v = v.reshape((grid.size,) + v.shape[grid.dim:])
    if v.ndim == 1:
        return NonlocalOperator(grid.volume * np.diag(v), grid, 1)
    s = v.shape[-1]
    mat = np.zeros((grid.size * s, grid.size * s), dtype=complex)
    for i in range(s):
        for j in range(s):
            mat[i::s, j::s] = np.diag(v[:, i, j])
    return NonlocalOperator(grid.volume * mat, grid, s)


def _from_transfer_and_mid(what: np.ndarray, mid: np.ndarray, grid: Grid) -> NonlocalOperator:
    kl, kr, q = transfer_labels(grid)
    flat_q = np.ravel_multi_index(tuple(np.moveaxis(np.mod(q, grid.points), -1, 0)), grid.shape)
    return NonlocalOperator(what.ravel()[flat_q] * mid, grid, 1)


def from_separable(W, L: ScalarKernel, component: int = 0) -> NonlocalOperator:
    """Kernel What(k_L - k_R) * Lhat(midpoint)."""
    if isinstance(W, FieldRealization):
        grid, what = W.grid, W.hat_values[..., component]
    else:
        what = np.asarray(W)
        grid = L.grid
    if grid != L.grid or what.shape != grid.shape:
        raise ValueError("grid mismatch between field and kernel")
    kl, kr, _ = transfer_labels(grid)
    kl, kr = np.broadcast_arrays(kl, kr)
    mid = L.midpoint(kl, kr)
    return _from_transfer_and_mid(what, mid, grid)


def triangle(A: np.ndarray, L: ScalarKernel) -> NonlocalOperator:
    """Kernel of (A > L)(x, y) = A((x + y)/2) L(y - x) from position samples of A."""
    return from_separable(forward_ft(np.asarray(A, dtype=complex), L.grid), L)


def multiplication(f: np.ndarray, grid: Grid) -> NonlocalOperator:
    """Multiplication by a position-space function."""
    fhat = forward_ft(np.asarray(f, dtype=complex), grid)
    ones = np.ones((grid.size, grid.size))
    return _from_transfer_and_mid(fhat, ones, grid)


@dataclass
class FieldOperator:
    base: NonlocalOperator
    transfer: tuple


def slice_transfer(op: NonlocalOperator, q) -> FieldOperator:
    """Keep only entries with k_L - k_R = q on the lattice."""
    grid = op.grid
    q = np.asarray(q)
    if q.shape != (grid.dim,) or not np.issubdtype(q.dtype, np.integer):
        raise ValueError("q must be an integer momentum label")
    _, _, tr = transfer_labels(grid)
    mask = np.all(tr == grid.wrap_index(q), axis=-1)
    s = op.spin_dim
    if s > 1:
        mask = np.kron(mask, np.ones((s, s), dtype=bool))
    return FieldOperator(
        NonlocalOperator(np.where(mask, op.matrix, 0.0), grid, s),
        tuple(int(v) for v in grid.wrap_index(q)),
    )


def compose(A: NonlocalOperator, B: NonlocalOperator) -> NonlocalOperator:
    A._check(B)
    return NonlocalOperator(A.matrix @ B.matrix / A.grid.volume, A.grid, A.spin_dim)


def commutator(A: NonlocalOperator, B: NonlocalOperator) -> NonlocalOperator:
    A._check(B)
    ab = A.matrix @ B.matrix
    ba = B.matrix @ A.matrix
    return NonlocalOperator((ab - ba) / A.grid.volume, A.grid, A.spin_dim)


def krein_adjoint(A: NonlocalOperator) -> NonlocalOperator:
    """Adjoint for the indefinite inner product; gamma^0 twisted for spinors."""
    m = np.conj(A.matrix.T)
    if A.spin_dim == 4:
        g0 = np.kron(np.eye(A.grid.size), GAMMA[0])
        m = g0 @ m @ g0
    return NonlocalOperator(m, A.grid, A.spin_dim)


def plane_wave(q, grid: Grid, spin_dim: int = 1) -> NonlocalOperator:
    """Multiplication by exp(-i q.x): shifts momenta k -> k + q."""
    idx = grid.momentum_indices()
    rows = np.array([grid.flat_index(k + np.asarray(q)) for k in idx])
    mat = np.zeros((grid.size, grid.size), dtype=complex)
    mat[rows, np.arange(grid.size)] = grid.volume
    if spin_dim > 1:
        mat = np.kron(mat, np.eye(spin_dim))
    return NonlocalOperator(mat, grid, spin_dim)


def time_frequency(grid: Grid) -> np.ndarray:
    """k^0 in the symmetric window, flattened."""
    return grid.momenta_flat()[:, 0]


def dirac_slash(grid: Grid) -> NonlocalOperator:
    """i times the Dirac operator, i.e. multiplication by k-slash in momentum space."""
    k = grid.momenta_flat()
    metric = np.array([1.0, -1.0, -1.0, -1.0])[: grid.dim]
    kslash = np.einsum("m,nm,mab->nab", metric, k, GAMMA[: grid.dim])
    return diagonal(kslash, grid)


def _kernel_transform(mat: np.ndarray, grid: Grid, inverse: bool) -> np.ndarray:
    """Two-sided lattice transform between momentum and position kernels."""
    d = grid.dim
    arr = mat.reshape(grid.shape + grid.shape)
    left_t, left_s = (0,), tuple(range(1, d))
    right_t, right_s = (d,), tuple(range(d + 1, 2 * d))
    if not inverse:
        # left index: exp(+i k x); right index: exp(-i k y)
        arr = np.fft.ifftn(arr, axes=left_t, norm="forward")
        arr = np.fft.fftn(arr, axes=left_s) if left_s else arr
        arr = np.fft.fftn(arr, axes=right_t)
        arr = np.fft.ifftn(arr, axes=right_s, norm="forward") if right_s else arr
        arr = arr * grid.cell_volume**2
    else:
        arr = np.fft.fftn(arr, axes=left_t)
        arr = np.fft.ifftn(arr, axes=left_s, norm="forward") if left_s else arr
        arr = np.fft.ifftn(arr, axes=right_t, norm="forward")
        arr = np.fft.fftn(arr, axes=right_s) if right_s else arr
        arr = arr / grid.volume**2
    return arr.reshape(grid.size, grid.size)


def to_position_kernel(A: NonlocalOperator) -> np.ndarray:
    """Position kernel B(x, y), rows and columns in uncentered lattice order."""
    if A.spin_dim != 1:
        raise ValueError("position kernels are provided for scalar operators")
    return _kernel_transform(A.matrix, A.grid, inverse=True)


def from_position_kernel(K: np.ndarray, grid: Grid) -> NonlocalOperator:
    return NonlocalOperator(_kernel_transform(np.asarray(K, dtype=complex), grid, inverse=False), grid, 1)


def _separation(grid: Grid, j: int) -> np.ndarray:
    """Wrapped (y - x)^j for all position pairs."""
    x = grid.positions(centered=False)[j].ravel()
    ext = grid.extent[j]
    d = x[None, :] - x[:, None]
    return np.mod(d + 0.5 * ext, ext) - 0.5 * ext


def dfrak(A: NonlocalOperator, j: int) -> NonlocalOperator:
    """Multiply the position kernel by the wrapped separation (y - x)^j."""
    K = to_position_kernel(A)
    return from_position_kernel(K * _separation(A.grid, j), A.grid)


def field_op_scalar_position(x, W: FieldRealization, C: float) -> NonlocalOperator:
    """C W(x + .) + (1/2C) {i D_t, W(x + .)} as an operator on the lattice.

    ``x`` is a spacetime point (components in position units).
    """
    grid = W.grid
    what = W.hat_values[..., 0]
    kl, kr, q = transfer_labels(grid)
    dp = np.asarray(grid.momentum_spacing)
    phase = np.exp(-1j * (q[..., 0] * dp[0] * x[0] - np.sum(q[..., 1:] * dp[1:] * np.asarray(x[1:]), axis=-1)))
    k0 = time_frequency(grid)
    mid = phase * (C + (k0[:, None] + k0[None, :]) / (2.0 * C))
    return _from_transfer_and_mid(what, mid, grid)


class BandOperator:
    """Operator with a single momentum transfer, stored as its band.

    ``values[kR]`` is the kernel entry at (k_R + q, k_R); ``wrapped[kR]`` marks
    entries where k_R + q leaves the symmetric momentum window.
    """

    def __init__(self, grid: Grid, transfer, values: np.ndarray):
        self.grid = grid
        self.transfer = np.asarray(grid.wrap_index(transfer), dtype=int)
        self.values = np.asarray(values, dtype=complex).reshape(grid.size)
        idx = grid.momentum_indices()
        self._target = np.ravel_multi_index(tuple(np.mod(idx + self.transfer, grid.points).T), grid.points)
        raw = idx + self.transfer
        half = np.asarray(grid.points) // 2
        self.wrapped = np.any((raw < -half) | (raw >= half), axis=1)

    @classmethod
    def from_field(cls, what_q: complex, q, L: ScalarKernel) -> "BandOperator":
        grid = L.grid
        idx = grid.momentum_indices()
        qv = grid.wrap_index(q)
        vals = what_q * L.midpoint(idx + qv, idx)
        return cls(grid, qv, vals)

    def compose(self, other: "BandOperator") -> "BandOperator":
        # (A B)(k + qa + qb, k) = (1/V) A(k + qa + qb, k + qb) B(k + qb, k)
        vals = self.values[other._target] * other.values / self.grid.volume
        out = BandOperator(self.grid, self.transfer + other.transfer, vals)
        out.wrapped = out.wrapped | other.wrapped | self.wrapped[other._target]
        return out

    def __sub__(self, other: "BandOperator") -> "BandOperator":
        if np.any(self.transfer != other.transfer):
            raise ValueError("band transfer mismatch")
        out = BandOperator(self.grid, self.transfer, self.values - other.values)
        out.wrapped = self.wrapped | other.wrapped
        return out

    def to_dense(self) -> NonlocalOperator:
        mat = np.zeros((self.grid.size, self.grid.size), dtype=complex)
        mat[self._target, np.arange(self.grid.size)] = self.values
        return NonlocalOperator(mat, self.grid, 1)


def band_commutator(A: BandOperator, B: BandOperator) -> BandOperator:
    return A.compose(B) - B.compose(A)


__all__.append("band_commutator")


def mean_commutator_scalar(hhat_q: complex, q, L: ScalarKernel) -> BandOperator:
    """Exact statistical mean of [phi_{-q}, phi_q] for phi_q = What(q) T_q.

    With E[What(q) What(-q)] = V hhat(q) the mean is V hhat(q) [T_{-q}, T_q],
    a diagonal band whose entries are hhat(q) (L(k + q/2)^2 - L(k - q/2)^2).
    """
    grid = L.grid
    Tq = BandOperator.from_field(1.0, q, L)
    Tm = BandOperator.from_field(1.0, -np.asarray(q), L)
    comm = band_commutator(Tm, Tq)
    comm.values = comm.values * grid.volume * hhat_q
    return comm


__all__.append("mean_commutator_scalar")
