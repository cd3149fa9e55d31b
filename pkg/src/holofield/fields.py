"""Kernels, covariances and Gaussian field sampling on a periodic lattice.

Covariance convention: for a realization ``What`` with components ``i, j``
(component index ``j * n_families + a``)::

    E[What_i(q) What_j(q')] = V * delta_{q + q', 0} * hhat_ij(q)

where ``V`` is the lattice volume.  Reality of the position-space field is
enforced exactly through ``What(-q) = conj(What(q))``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .lattice import Grid, RegularizedDelta, forward_ft, inverse_ft, minkowski_square, sign_epsilon

__all__ = [
    "ScalarKernel",
    "GaussianFieldSpec",
    "FieldRealization",
    "example_L_hat",
    "example_h_hat",
    "kernel_from_position",
    "position_covariance_h",
    "h_closed_form",
    "causal_fundamental_solution_hat",
    "cone_kernel_L_hat",
    "sample",
    "sample_modes",
    "psd_repair",
    "negate_index",
]


def negate_index(grid: Grid) -> np.ndarray:
    """Flat index of -q for every flat index q."""
    idx = grid.momentum_indices()
    neg = np.mod(-idx, grid.points)
    return np.ravel_multi_index(tuple(neg.T), grid.points)


def reflect(array: np.ndarray, grid: Grid) -> np.ndarray:
    """Return ``array(-q)`` for an array whose leading axes are the grid."""
    out = array
    for ax in range(grid.dim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return out


@dataclass
class ScalarKernel:
    """Real kernel hat L(p) = int L(xi) exp(-i p.xi) dxi on a lattice.

    Either ``func`` (analytic in the momentum components) or ``position``
    (samples of L(xi) on the centered lattice) is used for evaluation off the
    lattice, e.g. at half-integer midpoints.
    """

    grid: Grid
    hat_values: np.ndarray
    label: int = 1
    func: Optional[Callable] = None
    position: Optional[np.ndarray] = None
    _half_table: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        self.grid.check_field(self.hat_values)
        if np.max(np.abs(np.imag(self.hat_values))) > 1e-9 * max(1.0, np.max(np.abs(self.hat_values))):
            raise ValueError("kernel must be real-valued in momentum space")
        self.hat_values = np.real(self.hat_values).astype(float)

    def at(self, p: np.ndarray) -> np.ndarray:
        """Evaluate at momenta ``p`` of shape (dim, ...)."""
        if self.func is not None:
            return np.asarray(self.func(np.asarray(p, dtype=float)), dtype=float)
        raise ValueError("off-lattice evaluation needs an analytic kernel; use midpoint()")

    def half_lattice_table(self) -> np.ndarray:
        """Band-limited values on the doubled lattice (index 2k + s, s in {0, 1})."""
        if self._half_table is not None:
            return self._half_table
        if self.position is None:
            raise ValueError("sampled kernel without position data")
        g = self.grid
        L = np.asarray(self.position, dtype=complex)
        table = np.zeros(tuple(2 * n for n in g.points), dtype=complex)
        xs = [g.axis_positions(ax) for ax in range(g.dim)]
        for shift in np.ndindex(*(2,) * g.dim):
            mod = np.ones(g.shape, dtype=complex)
            for ax, s in enumerate(shift):
                if not s:
                    continue
                dp = 0.5 * g.momentum_spacing[ax]
                x = xs[ax]
                # boundary point carries half weight at -L/2 and at +L/2;
                # spatial axes pair with the opposite sign
                sign = -1.0 if ax == 0 else 1.0
                w = np.exp(sign * 1j * dp * x)
                w[g.points[ax] // 2] = np.cos(dp * x[g.points[ax] // 2])
                shape = [1] * g.dim
                shape[ax] = -1
                mod = mod * w.reshape(shape)
            vals = forward_ft(reflect(L * mod, g), g)
            sl = tuple(slice(s, None, 2) for s in shift)
            table[sl] = vals
        self._half_table = np.real(table)
        return self._half_table

    def midpoint(self, kl_idx: np.ndarray, kr_idx: np.ndarray) -> np.ndarray:
        """Kernel at the midpoint of integer momentum labels (rows are points)."""
        g = self.grid
        kl = np.asarray(kl_idx)
        kr = np.asarray(kr_idx)
        q = g.wrap_index(kl - kr)
        n2 = 2 * np.asarray(g.points)
        if self.func is not None:
            # midpoint k_R + q/2 folded into the Brillouin zone
            doubled = np.mod(2 * kr + q + n2 // 2, n2) - n2 // 2
            mid = 0.5 * doubled * np.asarray(g.momentum_spacing)
            return self.at(np.moveaxis(mid, -1, 0))
        table = self.half_lattice_table()
        doubled = np.mod(2 * kr + q, n2)
        return table[tuple(np.moveaxis(doubled, -1, 0))]


def example_L_hat(C: float, grid: Grid) -> ScalarKernel:
    """The kernel hat L(p) = C + p0 / C."""
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    C = float(C)

    def func(p):
        return C + p[0] / C

    return ScalarKernel(grid, func(np.array(grid.momenta())), func=func)


def kernel_from_position(values: np.ndarray, grid: Grid, label: int = 1) -> ScalarKernel:
    """Kernel from position samples L(xi) given on the centered lattice ordering.

    ``values`` is indexed like ``grid.positions(centered=True)``; it must satisfy
    L(-xi) = conj L(xi) so that the momentum kernel is real.
    """
    values = np.asarray(values, dtype=complex)
    grid.check_field(values)
    hat = forward_ft(reflect(values, grid), grid)
    return ScalarKernel(grid, hat, label=label, position=values)


@dataclass
class GaussianFieldSpec:
    """Momentum-space covariance of a real Gaussian field with several components."""

    grid: Grid
    covariance: np.ndarray
    tensor_dim: int = 1
    n_families: int = 1
    diagonal_in_ab: bool = False

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=complex)
        d = self.tensor_dim * self.n_families
        if cov.shape == self.grid.shape:
            cov = cov[..., None, None]
        if cov.shape != self.grid.shape + (d, d):
            raise ValueError(f"covariance shape {cov.shape} incompatible with grid and dims")
        self.covariance = cov

    @property
    def components(self) -> int:
        return self.tensor_dim * self.n_families

    def component(self, j: int, a: int) -> int:
        return j * self.n_families + a

    def symmetry_defect(self) -> float:
        cov = self.covariance
        herm = np.max(np.abs(cov - np.conj(np.swapaxes(cov, -1, -2))), initial=0.0)
        refl = np.max(np.abs(reflect(cov, self.grid) - np.conj(cov)), initial=0.0)
        return float(max(herm, refl))

    def min_eigenvalue(self) -> tuple:
        """Smallest eigenvalue over all momenta and the integer label where it occurs."""
        herm = 0.5 * (self.covariance + np.conj(np.swapaxes(self.covariance, -1, -2)))
        ev = np.linalg.eigvalsh(herm)[..., 0]
        pos = np.unravel_index(int(np.argmin(ev)), self.grid.shape)
        label = self.grid.momentum_indices()[np.ravel_multi_index(pos, self.grid.shape)]
        return float(ev[pos]), tuple(int(v) for v in label)

    def validate(self, tol: float = 1e-10) -> None:
        scale = max(1.0, float(np.max(np.abs(self.covariance))))
        if self.symmetry_defect() > tol * scale:
            raise ValueError("covariance violates hhat(-q) = conj(hhat(q)) = hhat(q)^T")
        lam, label = self.min_eigenvalue()
        if lam < -tol * scale:
            raise ValueError(f"covariance not positive semi-definite at q index {label}: eigenvalue {lam:.3e}")


def example_h_hat(grid: Grid, delta: RegularizedDelta | None = None) -> GaussianFieldSpec:
    """hhat(q) = delta_sigma(q^2) / (2 |q0|), set to 0 on the q0 = 0 plane."""
    delta = delta or RegularizedDelta.default_for(grid)
    p = np.array(grid.momenta())
    q0 = np.abs(p[0])
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(q0 > 0, delta(minkowski_square(p)) / (2 * q0), 0.0)
    return GaussianFieldSpec(grid, h)


def causal_fundamental_solution_hat(q, delta: RegularizedDelta) -> np.ndarray:
    """delta_sigma(q^2) * sign(q0) for momenta stacked along the first axis."""
    q = np.asarray(q, dtype=float)
    return delta(minkowski_square(q)) * sign_epsilon(q[0])


def position_covariance_h(grid: Grid, spec: GaussianFieldSpec) -> np.ndarray:
    """Inverse transform of a scalar covariance: h(x) on the centered-free lattice order."""
    if grid.dim != 4:
        raise ValueError("position covariance check needs a 3+1 dimensional grid")
    if spec.components != 1:
        raise ValueError("scalar covariance expected")
    return np.real(inverse_ft(spec.covariance[..., 0, 0], grid))


def h_closed_form(x0, r) -> np.ndarray:
    """Theta(|xvec| - |x0|) / (16 pi^2 |xvec|)."""
    x0 = np.asarray(x0, dtype=float)
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(r > np.abs(x0), 1.0 / (16 * np.pi**2 * np.where(r > 0, r, 1.0)), 0.0)


def _raised_cosine(t):
    """1 for t <= 0, 0 for t >= 1, smooth in between."""
    t = np.clip(t, 0.0, 1.0)
    return 0.5 * (1.0 + np.cos(np.pi * t))


def cone_kernel_L_hat(direction, scales, grid: Grid) -> ScalarKernel:
    """Smooth kernel supported in a cone around a negative-frequency null ray.

    The profile is a raised cosine in the Euclidean angle to the ray, reaching
    zero at the half-angle theta, times a raised-cosine frequency cut that
    switches on between -omega_min and -1.5 omega_min.
    """
    if grid.dim < 3:
        raise ValueError("a nontrivial cone needs at least two spatial dimensions")
    e = np.asarray(direction, dtype=float)
    if e.shape != (grid.dim - 1,):
        raise ValueError("direction must be a spatial vector")
    e = e / np.linalg.norm(e)
    theta = scales.theta
    wmin = scales.omega_min
    # angular resolution at the cone's lowest frequency
    dp = max(grid.momentum_spacing)
    if theta * wmin < dp:
        raise ValueError(f"cone half-angle {theta:.3g} unresolvable on this grid")
    if 1.5 * wmin >= np.pi / max(grid.spacing):
        raise ValueError("omega_min outside the grid's momentum range")
    axis = np.concatenate([[-1.0], e]) / np.sqrt(2.0)

    def func(p):
        p = np.asarray(p, dtype=float)
        norm = np.sqrt(np.sum(p**2, axis=0))
        cosang = np.tensordot(axis, p, axes=(0, 0)) / np.where(norm > 0, norm, 1.0)
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        ang_w = _raised_cosine(ang / theta)
        freq_w = _raised_cosine((p[0] + 1.5 * wmin) / (0.5 * wmin))
        return np.where(norm > 0, ang_w * freq_w, 0.0)

    return ScalarKernel(grid, func(np.array(grid.momenta())), func=func)


@dataclass
class FieldRealization:
    """One draw of the momentum-space field; ``hat_values`` has shape grid + (D,)."""

    grid: Grid
    hat_values: np.ndarray
    seed: int
    tensor_dim: int = 1
    n_families: int = 1

    def component(self, j: int = 0, a: int = 0) -> np.ndarray:
        return self.hat_values[..., j * self.n_families + a]

    def position(self, j: int = 0, a: int = 0) -> np.ndarray:
        return np.real(inverse_ft(self.component(j, a), self.grid))

    def reality_defect(self) -> float:
        h = self.hat_values
        return float(np.max(np.abs(reflect(h, self.grid) - np.conj(h)), initial=0.0))

    _MAGIC = b"HFR1"

    def to_bytes(self) -> bytes:
        dims = self.grid.points
        head = self._MAGIC + struct.pack("<I", len(dims)) + struct.pack(f"<{len(dims)}I", *dims)
        head += struct.pack("<IIq", self.tensor_dim, self.n_families, int(self.seed))
        head += struct.pack(f"<{len(dims)}d", *self.grid.spacing)
        payload = np.ascontiguousarray(self.hat_values, dtype="<c16").tobytes()
        return head + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "FieldRealization":
        if data[:4] != cls._MAGIC:
            raise ValueError("not a field realization record")
        off = 4
        (nd,) = struct.unpack_from("<I", data, off)
        off += 4
        dims = struct.unpack_from(f"<{nd}I", data, off)
        off += 4 * nd
        tdim, nfam, seed = struct.unpack_from("<IIq", data, off)
        off += 16
        spacing = struct.unpack_from(f"<{nd}d", data, off)
        off += 8 * nd
        grid = Grid(dims, spacing)
        vals = np.frombuffer(data, dtype="<c16", offset=off).reshape(tuple(dims) + (tdim * nfam,))
        return cls(grid, vals.astype(complex), int(seed), tdim, nfam)


def _factors(cov: np.ndarray, volume: float, tol: float, grid: Grid) -> np.ndarray:
    """Square-root factors F with F F^H = V * cov, batched over momenta."""
    herm = 0.5 * (cov + np.conj(np.swapaxes(cov, -1, -2)))
    lam, vec = np.linalg.eigh(herm)
    scale = max(1.0, float(np.max(np.abs(lam), initial=0.0)))
    bad = lam[..., 0] < -tol * scale
    if np.any(bad):
        flat = int(np.flatnonzero(bad.ravel())[0])
        label = tuple(int(v) for v in grid.momentum_indices()[flat]) if flat < grid.size else flat
        raise ValueError(
            f"covariance not positive semi-definite at q index {label}: "
            f"eigenvalue {lam.reshape(-1, lam.shape[-1])[flat, 0]:.3e}"
        )
    return vec * np.sqrt(np.clip(lam, 0.0, None) * volume)[..., None, :]


def _draw(spec: GaussianFieldSpec, flat_ids: np.ndarray, rng: np.random.Generator, count: int, tol: float):
    grid = spec.grid
    d = spec.components
    cov = spec.covariance.reshape(grid.size, d, d)
    neg = negate_index(grid)
    reps = flat_ids[flat_ids <= neg[flat_ids]]
    fac = _factors(cov[reps], grid.volume, tol, grid)
    z = rng.standard_normal((count, len(reps), d, 2))
    selfc = reps == neg[reps]
    zc = (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2.0)
    zc[:, selfc, :] = z[..., 0][:, selfc, :]
    vals = np.einsum("rij,srj->sri", fac, zc)
    if np.any(selfc):
        vals[:, selfc, :] = np.real(vals[:, selfc, :])
    return reps, neg[reps], vals


def sample(spec: GaussianFieldSpec, grid: Grid | None = None, seed: int = 0, tol: float = 1e-10) -> FieldRealization:
    """Draw one real Gaussian realization; deterministic for a fixed seed."""
    grid = grid or spec.grid
    if grid != spec.grid:
        raise ValueError("grid mismatch between spec and request")
    rng = np.random.Generator(np.random.Philox(seed))
    reps, negs, vals = _draw(spec, np.arange(grid.size), rng, 1, tol)
    out = np.zeros((grid.size, spec.components), dtype=complex)
    out[reps] = vals[0]
    out[negs] = np.conj(vals[0])
    return FieldRealization(grid, out.reshape(grid.shape + (spec.components,)), seed, spec.tensor_dim, spec.n_families)


def sample_modes(spec: GaussianFieldSpec, q_labels, count: int, seed: int = 0, tol: float = 1e-10) -> np.ndarray:
    """Many draws of selected modes only, with the joint law of a full sample.

    ``q_labels`` is a list of integer momentum labels.  Returns an array of
    shape (count, len(q_labels), components).  Both q and -q may be requested.
    """
    grid = spec.grid
    flat = np.array([grid.flat_index(q) for q in q_labels], dtype=int)
    neg = negate_index(grid)
    wanted = np.unique(np.minimum(flat, neg[flat]))
    rng = np.random.Generator(np.random.Philox(seed))
    reps, _, vals = _draw(spec, wanted, rng, count, tol)
    pos = {int(r): i for i, r in enumerate(reps)}
    out = np.empty((count, len(flat), spec.components), dtype=complex)
    for i, f in enumerate(flat):
        if int(f) in pos:
            out[:, i] = vals[:, pos[int(f)]]
        else:
            out[:, i] = np.conj(vals[:, pos[int(neg[f])]])
    return out


def psd_repair(spec: GaussianFieldSpec, shift: float) -> GaussianFieldSpec:
    """Add ``shift`` times the identity at every momentum."""
    if shift < 0:
        raise ValueError("shift must be non-negative")
    eye = np.eye(spec.components)
    return GaussianFieldSpec(spec.grid, spec.covariance + shift * eye, spec.tensor_dim, spec.n_families, spec.diagonal_in_ab)
