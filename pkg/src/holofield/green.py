"""Dirac Green's operators, spectral projectors and the mixing-operator calculus.

Momentum-diagonal operators are built per lattice momentum as 4x4 blocks.
The symmetric Green's operator is the principal-value spectral integral
over masses on the real and imaginary axes; on the lattice the integral is
done in closed form over the two shell points mu = +-sqrt(k^2), with the odd
regularization pp_eps(x) = x^3 / (x^4 + 4 eps^4).  That regularization is the
symmetric part of the (1 - i) eps prescription and keeps s_m^* = s_{conj m}
exact at finite eps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import factorial

import numpy as np
from scipy import integrate, linalg, special

from .holo import PhaseFamily, lift_spin
from .lattice import Grid, RegularizedDelta, forward_ft, inverse_ft, minkowski_square
from .opalg import (
    GAMMA,
    NonlocalOperator,
    diagonal,
    dirac_slash,
    krein_adjoint,
    multiplication,
    triangle,
)

__all__ = [
    "GreenOperator",
    "MassProjector",
    "GammaOperator",
    "kslash",
    "regularized_pp",
    "retarded_green",
    "advanced_green",
    "retarded_support_ratio",
    "spectral_projector",
    "mass_quadrature",
    "completeness_defect",
    "symmetric_green",
    "product_identity_residuals",
    "ps_identity_residual",
    "make_gamma",
    "C_operator",
    "E_operator",
    "commexp_residual",
    "check_green_defect",
    "SpectralMixingModel",
    "V_m_series",
    "mixing_unitarity_defect",
    "holographic_green",
    "holographic_cross_ratio",
    "holographic_dirac",
    "holographic_perturbation_series",
    "retarded_series",
]


@dataclass(frozen=True)
class GreenOperator:
    kind: str
    mass: complex
    epsilon_reg: float

    def __post_init__(self):
        if self.kind not in ("retarded", "advanced", "symmetric"):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.epsilon_reg <= 0:
            raise ValueError("epsilon_reg must be positive")
        if self.kind != "symmetric" and np.imag(self.mass) != 0:
            raise ValueError("causal Green's operators exist only for real mass")

    def build(self, grid: Grid) -> NonlocalOperator:
        if self.kind == "symmetric":
            return symmetric_green(self.mass, grid, self.epsilon_reg)
        sign = 1.0 if self.kind == "retarded" else -1.0
        return _causal(self.mass, grid, self.epsilon_reg, sign)


@dataclass(frozen=True)
class MassProjector:
    mass: complex
    mass_delta_width: float

    def build(self, grid: Grid, shape: str = "triangular") -> NonlocalOperator:
        return spectral_projector(self.mass, self.mass_delta_width, grid, shape)


def kslash(grid: Grid) -> np.ndarray:
    """k-slash at every lattice momentum, shape (size, 4, 4)."""
    k = grid.momenta_flat()
    metric = np.array([1.0, -1.0, -1.0, -1.0])[: grid.dim]
    return np.einsum("m,nm,mab->nab", metric, k, GAMMA[: grid.dim])


def _k2(grid: Grid) -> np.ndarray:
    return minkowski_square(grid.momenta_flat().T)


def _real_mass(mass) -> float:
    if np.imag(mass) != 0:
        raise ValueError("causal Green's operators exist only for real mass")
    return float(np.real(mass))


def _causal(mass, grid: Grid, eps: float, sign: float) -> NonlocalOperator:
    m = _real_mass(mass)
    ks = kslash(grid)
    k0 = grid.momenta_flat()[:, 0]
    denom = _k2(grid) - m * m + sign * 1j * eps * k0
    return diagonal((ks + m * np.eye(4)) / denom[:, None, None], grid)


def retarded_green(mass, grid: Grid, eps_reg: float) -> NonlocalOperator:
    """(k-slash + m) / (k^2 - m^2 + i eps k^0)."""
    if eps_reg <= 0:
        raise ValueError("eps_reg must be positive")
    return _causal(mass, grid, eps_reg, 1.0)


def advanced_green(mass, grid: Grid, eps_reg: float) -> NonlocalOperator:
    if eps_reg <= 0:
        raise ValueError("eps_reg must be positive")
    return _causal(mass, grid, eps_reg, -1.0)


def retarded_support_ratio(mass: float, grid: Grid, eps_reg: float, smoothing: float | None = None, margin: float | None = None) -> float:
    """max |kernel| outside the forward cone over max |kernel| inside.

    The kernel is smeared with a Gaussian of width ``smoothing`` (default two
    spacings) so that the light-cone singularity is resolvable, and points
    within ``margin`` (default six widths) of the cone are left out.  Only the
    central quarter of the periodic box is inspected, away from wrapped images.
    """
    sig = 2.0 * max(grid.spacing) if smoothing is None else smoothing
    margin = 6.0 * sig if margin is None else margin
    k = grid.momenta_flat()
    denom = _k2(grid) - mass * mass + 1j * eps_reg * k[:, 0]
    damp = np.exp(-0.5 * sig**2 * np.sum(k**2, axis=1))
    vals = ((kslash(grid) + mass * np.eye(4)) * (damp / denom)[:, None, None]).reshape(grid.shape + (4, 4))
    pos = np.stack([inverse_ft(vals[..., i, j], grid) for i in range(4) for j in range(4)], axis=-1)
    mag = np.max(np.abs(pos), axis=-1)
    x = grid.positions(centered=True)
    r = np.sqrt(sum(xi**2 for xi in x[1:]))
    central = np.ones(grid.shape, dtype=bool)
    for xi, ext in zip(x, grid.extent):
        central &= np.abs(xi) < ext / 4
    inside = (x[0] - r > margin) & central
    outside = ((x[0] + r < -margin) | (np.abs(x[0]) + margin < r)) & central
    if not inside.any() or not outside.any():
        raise ValueError("grid too small for the requested smoothing and margin")
    return float(mag[outside].max() / mag[inside].max())


def _projector_blocks(mass, width: float, grid: Grid, shape: str) -> np.ndarray:
    m = complex(mass)
    if m == 0:
        raise ValueError("use the massless projector k-slash delta(k^2) separately")
    if abs((m * m).imag) > 1e-12 * max(1.0, abs(m * m)):
        raise ValueError("spectral projectors are defined for real or imaginary mass")
    d = RegularizedDelta(width, shape)(np.real(_k2(grid) - m * m))
    return (abs(m) / m) * (kslash(grid) + m * np.eye(4)) * np.asarray(d)[:, None, None]


def spectral_projector(mass, width: float, grid: Grid, shape: str = "triangular") -> NonlocalOperator:
    """(|m|/m) (k-slash + m) delta_w(k^2 - m^2); the width is in units of m^2."""
    return diagonal(_projector_blocks(mass, width, grid, shape), grid)


def mass_quadrature(grid: Grid, width: float, pad: float = 2.0):
    """Nodes a_j = m_j^2 spaced by ``width`` covering every lattice shell.

    Returns the masses sqrt(a_j) (imaginary for a_j < 0) and the da weights.
    Each node stands for the pair of projectors at +m and -m.
    """
    k2 = _k2(grid)
    lo = width * np.floor(k2.min() / width - pad)
    hi = width * np.ceil(k2.max() / width + pad)
    a = np.arange(lo, hi + 0.5 * width, width)
    a = a[np.abs(a) > 1e-9 * width]
    masses = np.where(a > 0, np.sqrt(np.abs(a)) + 0j, 1j * np.sqrt(np.abs(a)))
    return masses, np.full(a.shape, width)


def completeness_defect(grid: Grid, width: float | None = None, shape: str = "triangular") -> float:
    """max |sum_j (p_{m_j} + p_{-m_j}) da / (2 |m_j|) - 1| over momenta and spin entries.

    Hat functions on the node grid form a partition of unity.  The node
    a = 0 carries no mass, so shells with |k^2| below one width are excluded.
    """
    k2 = _k2(grid)
    if width is None:
        width = 2.0 * min(grid.momentum_spacing) ** 2
    masses, weights = mass_quadrature(grid, width)
    total = np.zeros((grid.size, 4, 4), dtype=complex)
    for m, w in zip(masses, weights):
        for mm in (m, -m):
            total += (w / (2 * abs(m))) * _projector_blocks(mm, width, grid, shape)
    near_zero = np.abs(k2) < width
    return float(np.max(np.abs(total[~near_zero] - np.eye(4))))


def regularized_pp(x, eps: float):
    """Odd regularization of 1/x: x^3 / (x^4 + 4 eps^4)."""
    x = np.asarray(x, dtype=complex)
    return x**3 / (x**4 + 4 * eps**4)


def _sym_blocks(mass, grid: Grid, eps: float) -> np.ndarray:
    m = complex(mass)
    k2 = _k2(grid).astype(complex)
    r = np.sqrt(k2)  # principal root: real for k^2 > 0, i|.| for k^2 < 0
    ks = kslash(grid)
    eye = np.eye(4)
    out = np.zeros((grid.size, 4, 4), dtype=complex)
    small = np.abs(r) < 1e-12
    rr = np.where(small, 1.0, r)
    for sgn in (1.0, -1.0):
        mu = sgn * rr
        w = regularized_pp(mu - m, eps) / (2 * mu)
        out += w[:, None, None] * (ks + mu[:, None, None] * eye)
    if np.any(small):
        x = -m
        pp0 = regularized_pp(x, eps)
        d = (3 * x**2 * (x**4 + 4 * eps**4) - x**3 * 4 * x**3) / (x**4 + 4 * eps**4) ** 2
        out[small] = d * ks[small] + pp0 * eye
    return out


def symmetric_green(mass, grid: Grid, eps_reg: float) -> NonlocalOperator:
    """Principal-value spectral integral of p_mu / (mu - m) over the real and imaginary axes."""
    if eps_reg <= 0:
        raise ValueError("eps_reg must be positive")
    return diagonal(_sym_blocks(mass, grid, eps_reg), grid)


# --- scalar spectral identities --------------------------------------------


def _gauss_pp(z):
    """int exp(-t^2) / (z - t) dt for complex z off the real axis."""
    z = np.asarray(z, dtype=complex)
    return np.where(np.imag(z) > 0, -1j * np.pi * special.wofz(z), 1j * np.pi * special.wofz(-z))


def _hilbert_gauss(x):
    """PP int exp(-t^2) / (t - x) dt = -2 sqrt(pi) Dawson(x)."""
    return -2 * np.sqrt(np.pi) * special.dawsn(x)


def _f_eps(x, eps):
    """(1/2) sum_s 1 / (x + s (1 - i) eps)."""
    return x / (x * x + 2j * eps * eps)


def product_identity_residuals(m: float, eps_list, phi_scale: float = 1.0, chi_scale: float = 1.0, chi_center: float = 0.0) -> dict:
    """Regularized s_m s_m' against test functions, compared with the PP and pi^2 terms.

    With phi(mu) = exp(-(mu/phi_scale)^2) weighting the spectral variable and
    chi(m') = exp(-((m' - chi_center)/chi_scale)^2) integrated over m',

        I(eps) = int int phi(mu) chi(m') f_eps(mu - m) f_eps(mu - m') dmu dm'

    should tend to T1 + T2 with T1 the principal-value part and
    T2 = pi^2 phi(m) chi(m) for real m.  Returns residuals |I - T1 - T2| and
    the diagonal coefficient (I - T1) / (phi(m) chi(m)) per eps.
    """
    a, b, c = phi_scale, chi_scale, chi_center

    def phi(mu):
        return np.exp(-((mu / a) ** 2))

    def chi(t):
        return np.exp(-(((t - c) / b) ** 2))

    def H(x):
        # PP int phi(mu) / (mu - x) dmu
        return _hilbert_gauss(x / a)

    def G_eps(mu, eps):
        # int chi(m') f_eps(mu - m') dm' with f = (1/2) sum_s 1 / (mu - m' + s cc)
        cc = (1 - 1j) * eps
        out = 0.0
        for s in (1.0, -1.0):
            z = (mu + s * cc - c) / b
            out = out + 0.5 * _gauss_pp(z)
        return out

    def T1_integrand(t):
        if abs(t - m) < 1e-9:
            # limit (H(m) - H(t)) / (m - t) -> H'(m)
            h = 1e-5
            return chi(t) * (H(m + h) - H(m - h)) / (2 * h)
        return chi(t) * (H(m) - H(t)) / (m - t)

    lim = 12 * max(b, 1.0) + abs(c)
    T1 = integrate.quad(T1_integrand, c - lim, c + lim, points=[m], limit=400)[0]
    T2 = np.pi**2 * phi(m) * chi(m)

    residuals, coeffs = [], []
    for eps in eps_list:
        span = 12 * a + abs(m)
        pts = [m - 10 * eps, m, m + 10 * eps]

        def integrand(mu, part):
            v = phi(mu) * _f_eps(mu - m, eps) * G_eps(mu, eps)
            return v.real if part == 0 else v.imag

        re = integrate.quad(integrand, -span, span, args=(0,), points=pts, limit=800, epsabs=1e-13, epsrel=1e-11)[0]
        im = integrate.quad(integrand, -span, span, args=(1,), points=pts, limit=800, epsabs=1e-13, epsrel=1e-11)[0]
        I = re + 1j * im
        residuals.append(float(abs(I - T1 - T2)))
        coeffs.append(complex((I - T1) / (phi(m) * chi(m))))
    return {"eps": list(eps_list), "residual": residuals, "coefficient": coeffs, "T1": T1, "T2": T2}


def ps_identity_residual(m: float, eps: float, chi_scale: float = 1.0, chi_center: float = 0.0) -> float:
    """|int chi(m') f_eps(m - m') dm' - PP int chi(m') / (m - m') dm'|."""
    b, c = chi_scale, chi_center
    cc = (1 - 1j) * eps
    reg = sum(0.5 * _gauss_pp((m + s * cc - c) / b) for s in (1.0, -1.0))
    pp = -_hilbert_gauss((m - c) / b)
    return float(abs(reg - pp))


# --- the phase operator and its double commutator --------------------------


@dataclass
class GammaOperator:
    """Gamma = sum_a Lambda_a > L_a as a scalar operator."""

    base: NonlocalOperator

    @property
    def grid(self) -> Grid:
        return self.base.grid

    def krein_defect(self) -> float:
        return float(np.max(np.abs(krein_adjoint(self.base).matrix - self.base.matrix)) / self.base.grid.volume)

    def scaled(self, factor: float) -> "GammaOperator":
        return GammaOperator(self.base * factor)


def make_gamma(lambdas, kernels) -> GammaOperator:
    """Build Gamma from position samples of Lambda_a (a PhaseFamily or arrays)."""
    if isinstance(lambdas, PhaseFamily):
        lambdas = lambdas.lambdas
    out = None
    for lam, L in zip(lambdas, kernels):
        term = triangle(np.asarray(lam, dtype=complex), L)
        out = term if out is None else out + term
    return GammaOperator(out)


def _spin_matrix(A: NonlocalOperator) -> np.ndarray:
    return lift_spin(A).as_matrix()


def _slash_matrix(grid: Grid) -> np.ndarray:
    """Matrix of the derivative operator d-slash = -i (i d-slash)."""
    return -1j * dirac_slash(grid).as_matrix()


def _double_commutator(G: np.ndarray, D: np.ndarray) -> np.ndarray:
    B = D @ G - G @ D
    return B @ G - G @ B


def _expm_family(G: np.ndarray, svals, sign: float):
    return [linalg.expm(sign * 1j * s * G) for s in svals]


def C_operator(gamma: GammaOperator, quadrature_points: int = 8) -> NonlocalOperator:
    """i int_0^1 s exp(-i s Gamma) [[d-slash, Gamma], Gamma] exp(i s Gamma) ds (Gauss-Legendre)."""
    return _s_integral(gamma, quadrature_points, kind="C")


def E_operator(gamma: GammaOperator, quadrature_points: int = 8) -> NonlocalOperator:
    """i int_0^1 (1 - s) exp(i s Gamma) [[d-slash, Gamma], Gamma] exp(-i s Gamma) ds."""
    return _s_integral(gamma, quadrature_points, kind="E")


def _s_integral(gamma: GammaOperator, npts: int, kind: str) -> NonlocalOperator:
    if npts < 4:
        raise ValueError("at least 4 quadrature points are required")
    grid = gamma.grid
    Gs = gamma.base.as_matrix()
    G = np.kron(Gs, np.eye(4))
    DC = _double_commutator(G, _slash_matrix(grid))
    x, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    out = np.zeros_like(DC)
    for si, wi in zip(s, w):
        if kind == "C":
            left = np.kron(linalg.expm(-1j * si * Gs), np.eye(4))
            out += wi * si * (left @ DC @ left.conj().T if _hermitian(Gs) else left @ DC @ np.kron(linalg.expm(1j * si * Gs), np.eye(4)))
        else:
            left = np.kron(linalg.expm(1j * si * Gs), np.eye(4))
            right = np.kron(linalg.expm(-1j * si * Gs), np.eye(4))
            out += wi * (1 - si) * (left @ DC @ right)
    return NonlocalOperator.from_action(1j * out, grid, 4)


def _hermitian(M: np.ndarray) -> bool:
    return bool(np.allclose(M, M.conj().T, atol=1e-13 * max(1.0, np.abs(M).max())))


def commexp_residual(gamma: GammaOperator, quadrature_points: int = 12) -> float:
    """Relative residual of [d, e^{iG}] = int_0^1 e^{i t G} [d, iG] e^{i(1-t)G} dt."""
    grid = gamma.grid
    Gs = gamma.base.as_matrix()
    G = np.kron(Gs, np.eye(4))
    D = _slash_matrix(grid)
    eG = np.kron(linalg.expm(1j * Gs), np.eye(4))
    lhs = D @ eG - eG @ D
    x, w = np.polynomial.legendre.leggauss(quadrature_points)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    comm = D @ (1j * G) - (1j * G) @ D
    rhs = np.zeros_like(lhs)
    for ti, wi in zip(t, w):
        rhs += wi * np.kron(linalg.expm(1j * ti * Gs), np.eye(4)) @ comm @ np.kron(linalg.expm(1j * (1 - ti) * Gs), np.eye(4))
    return float(np.linalg.norm(lhs - rhs) / max(np.linalg.norm(lhs), 1e-300))


def check_green_defect(gamma: GammaOperator, mass, eps_reg: float = 1e-9, quadrature_points: int = 12):
    """Conjugated Green's operator and its defect operator.

    Returns (s_check, E, residual) where s_check = e^{iG} s_m e^{-iG} and the
    residual is the relative norm of
    (i d-slash + B - m) s_check - e^{iG} (i d-slash - m) s_m e^{-iG} - E s_check
    with B = [d-slash, Gamma].  The middle term equals 1 up to the regulator.
    """
    grid = gamma.grid
    Gs = gamma.base.as_matrix()
    G = np.kron(Gs, np.eye(4))
    D = _slash_matrix(grid)
    iD = 1j * D
    B = D @ G - G @ D
    s = symmetric_green(mass, grid, eps_reg).as_matrix()
    eG = np.kron(linalg.expm(1j * Gs), np.eye(4))
    emG = np.kron(linalg.expm(-1j * Gs), np.eye(4))
    s_check = eG @ s @ emG
    E = E_operator(gamma, quadrature_points).as_matrix()
    n = s.shape[0]
    lhs = (iD + B - complex(mass) * np.eye(n)) @ s_check
    # e^{iG} (i d-slash - m) s_m e^{-iG} is 1 up to the regulator; keeping it
    # explicit makes the check independent of eps_reg and of on-shell momenta
    free = eG @ ((iD - complex(mass) * np.eye(n)) @ s) @ emG
    rhs = free + E @ s_check
    res = float(np.linalg.norm(lhs - rhs) / np.linalg.norm(lhs))
    return (
        NonlocalOperator.from_action(s_check, grid, 4),
        NonlocalOperator.from_action(E, grid, 4),
        res,
    )


# --- mixing series on a discretized continuous spectrum ---------------------


class SpectralMixingModel:
    """A self-adjoint operator with continuous spectrum, discretized.

    H0 = diag(mu_j) on a uniform grid of spacing h stands for i d-slash;
    the spectral projectors are p_j = e_j e_j^T / h (delta normalized, so
    sum_j h p_j = 1), d-slash is -i H0 and Gamma is a smooth Hermitian kernel
    of amplitude ``amplitude``.  The principal value uses pp_eps with
    eps = ``eps_factor`` * h.
    """

    def __init__(self, n: int = 160, span: float = 8.0, amplitude: float = 0.1, width: float = 1.5, eps_factor: float = 2.0, quadrature_points: int = 10):
        self.n = n
        self.h = 2 * span / n
        self.mu = -span + (np.arange(n) + 0.5) * self.h
        self.eps = eps_factor * self.h
        env = np.exp(-0.5 * (self.mu / (0.5 * span)) ** 2)
        kern = np.exp(-0.5 * ((self.mu[:, None] - self.mu[None, :]) / width) ** 2)
        self.gamma_shape = env[:, None] * env[None, :] * kern * self.h
        self.amplitude = amplitude
        self.quadrature_points = quadrature_points
        self._cache = {}

    @property
    def Gamma(self) -> np.ndarray:
        return self.amplitude * self.gamma_shape

    def D(self) -> np.ndarray:
        return -1j * np.diag(self.mu)

    def C(self) -> np.ndarray:
        G = self.Gamma
        DC = _double_commutator(G, self.D())
        x, w = np.polynomial.legendre.leggauss(self.quadrature_points)
        s = 0.5 * (x + 1)
        w = 0.5 * w
        lam, Q = np.linalg.eigh(G)
        out = np.zeros_like(DC)
        for si, wi in zip(s, w):
            left = (Q * np.exp(-1j * si * lam)) @ Q.conj().T
            out += wi * si * left @ DC @ left.conj().T
        return 1j * out

    def s(self, j: int) -> np.ndarray:
        return np.diag(regularized_pp(self.mu - self.mu[j], self.eps))

    def p(self, j: int) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        out[j, j] = 1.0 / self.h
        return out

    def expi(self) -> np.ndarray:
        lam, Q = np.linalg.eigh(self.Gamma)
        return (Q * np.exp(1j * lam)) @ Q.conj().T


def _taylor_inv_sqrt(order: int) -> np.ndarray:
    """Coefficients c_0..c_order of (1 + x)^{-1/2}."""
    return np.array([1.0] + [(-1) ** k * _double_factorial(2 * k - 1) / (factorial(k) * 2**k) for k in range(1, order + 1)])


def _double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def _mixing_column(model: "SpectralMixingModel", j: int, order: int, C: np.ndarray):
    """Column vector w and scalar beta with V_{mu_j} = e^{iG} w e_j^T / h.

    Every term of the series ends in p_j, which has rank one, so B_j is
    beta e_j e_j^T / h-like and the Taylor series collapses to a scalar.
    """
    s = regularized_pp(model.mu - model.mu[j], model.eps)
    term = np.zeros(model.n, dtype=complex)
    term[j] = 1.0
    u = term.copy()
    proj = [(C @ term)[j]]
    for _ in range(order):
        term = -s * (C @ term)
        u += term
        proj.append((C @ term)[j])
    # e_j^T (-C s)^{n'} C e_j equals e_j^T C (-s C)^{n'} e_j
    a = np.sum(proj)
    beta = np.pi**2 * a * a / model.h
    f = np.polyval(_taylor_inv_sqrt(order + 1)[::-1], beta)
    return u * f, beta


def V_m_series(model: SpectralMixingModel, j: int, order: int, C: np.ndarray | None = None, eG: np.ndarray | None = None) -> np.ndarray:
    """Truncated mixing-operator component V_m at m = mu_j.

    e^{iG} sum_{n <= order} (-s C)^n p (1 + sum_{1 <= k <= order + 1} c_k B^k), with
    B = pi^2 sum_{n, n' <= order} (-C s)^{n'} C p C (-s C)^n p and c_k the
    Taylor coefficients of (1 + x)^{-1/2}.  The sign factor is +1 because the
    model spectrum is real.
    """
    C = model.C() if C is None else C
    eG = model.expi() if eG is None else eG
    w, beta = _mixing_column(model, j, order, C)
    if abs(beta) > 1.0:
        warnings.warn(f"normalization series argument {abs(beta):.3g} exceeds 1; the series may diverge", RuntimeWarning, stacklevel=2)
    out = np.zeros((model.n, model.n), dtype=complex)
    out[:, j] = eG @ w / model.h
    return out


def mixing_unitarity_defect(model: SpectralMixingModel, order: int, window: float = 0.5):
    """(||V^* V - 1||, ||C||) with V = sum_j h V_{mu_j}, restricted to |mu| < window * span.

    The restriction keeps away from the edges of the truncated spectrum.
    """
    C = model.C()
    W = np.empty((model.n, model.n), dtype=complex)
    worst = 0.0
    for j in range(model.n):
        W[:, j], beta = _mixing_column(model, j, order, C)
        worst = max(worst, abs(beta))
    if worst > 1.0:
        warnings.warn(f"normalization series argument {worst:.3g} exceeds 1; the series may diverge", RuntimeWarning, stacklevel=2)
    # e^{iG} is unitary, so V^* V = W^* W
    keep = np.abs(model.mu) < window * np.max(np.abs(model.mu))
    M = (W.conj().T @ W - np.eye(model.n))[np.ix_(keep, keep)]
    return float(np.linalg.norm(M, 2)), float(np.linalg.norm(C, 2))


__all__ += ["mixing_unitarity_defect"]


# --- holographic Green's and Dirac operators --------------------------------


def _phase_spin(phases: PhaseFamily, a: int, sign: int) -> NonlocalOperator:
    return lift_spin(multiplication(phases.phase(a, sign), phases.grid))


def holographic_green(phases: PhaseFamily, mass, kind: str = "symmetric", eps_reg: float = 0.1) -> NonlocalOperator:
    """sum_a e^{i Lambda_a} s_m e^{-i Lambda_a}."""
    s = GreenOperator(kind, mass, eps_reg).build(phases.grid)
    out = None
    for a in range(phases.N):
        term = _phase_spin(phases, a, 1) @ s @ _phase_spin(phases, a, -1)
        out = term if out is None else out + term
    return out


def holographic_cross_ratio(phases: PhaseFamily, mass, a: int, psi_a_hat: np.ndarray, kind: str = "retarded", eps_reg: float = 0.3) -> float:
    """||s_hol psi - e^{i Lambda_a} s_m psi_a|| / ||e^{i Lambda_a} s_m psi_a|| for psi = e^{i Lambda_a} psi_a.

    ``psi_a_hat`` is a spinor wave function in momentum space, flattened as
    (size * 4,).  The numerator is the sum of the cross terms b != a.
    """
    grid = phases.grid
    s = GreenOperator(kind, mass, eps_reg).build(grid)
    Ea = _phase_spin(phases, a, 1)
    psi = Ea.apply(psi_a_hat)
    direct = Ea.apply(s.apply(psi_a_hat))
    total = holographic_green(phases, mass, kind, eps_reg).apply(psi)
    return float(np.linalg.norm(total - direct) / np.linalg.norm(direct))


def holographic_dirac(phases: PhaseFamily, mass, eps_reg: float = 0.1, kind: str = "symmetric"):
    """(s_hol)^{-1} + m, with the condition number of s_hol."""
    S = holographic_green(phases, mass, kind, eps_reg)
    M = S.as_matrix()
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > 1e14:
        raise np.linalg.LinAlgError(f"holographic Green's operator is singular (condition number {cond:.3e})")
    D = np.linalg.inv(M) + complex(mass) * np.eye(M.shape[0])
    return NonlocalOperator.from_action(D, phases.grid, 4), cond


def retarded_series(B: NonlocalOperator, psi: np.ndarray, order: int, mass: float, eps_reg: float = 0.3) -> dict:
    """Partial sums of sum_n (-s B)^n psi with the retarded Green's operator.

    Returns the truncated sum and the norm ratios of consecutive terms; a
    ratio above 1 is flagged as a divergence diagnostic.
    """
    s = retarded_green(mass, B.grid, eps_reg)
    term = np.asarray(psi, dtype=complex)
    total = term.copy()
    ratios = []
    for _ in range(order):
        nxt = -s.apply(B.apply(term))
        ratios.append(float(np.linalg.norm(nxt) / max(np.linalg.norm(term), 1e-300)))
        term = nxt
        total = total + term
    return {"psi": total, "ratios": ratios, "diverging": any(r > 1 for r in ratios)}


def _phase_apply(phases: PhaseFamily, a: int, sign: int, v: np.ndarray) -> np.ndarray:
    """e^{sign i Lambda_a} on spinors stored as (size, 4) momentum components."""
    grid = phases.grid
    f = phases.phase(a, sign)
    out = np.empty_like(v)
    for c in range(v.shape[1]):
        out[:, c] = forward_ft(f * inverse_ft(v[:, c].reshape(grid.shape), grid), grid).ravel()
    return out


def holographic_perturbation_series(
    phases: PhaseFamily,
    A_pos: np.ndarray,
    L_ab,
    psi_components: np.ndarray,
    order: int,
    mass,
    eps_reg: float = 0.3,
    kind: str = "retarded",
    include_trace: bool = False,
) -> dict:
    """Direct series with s_hol against the componentwise matrix form.

    B_dyn = sum_{a,b} e^{i Lambda_a} gamma^0 (A > L_ab) e^{-i Lambda_b} with a
    single potential A; psi = sum_a e^{i Lambda_a} psi_a, where
    ``psi_components`` has shape (N, size, 4) in momentum space.  The matrix
    form iterates psi_a <- -s_m sum_b gamma^0 (A > L_ab) psi_b and reassembles
    at the end; ``include_trace`` adds the exchange term gamma^0 (A > tr L) psi_a.
    Returns both partial sums and the relative deviation of their corrections.
    """
    grid = phases.grid
    N = phases.N
    blocks = _green_blocks(kind, mass, grid, eps_reg)

    def s_apply(v):
        return np.einsum("kij,kj->ki", blocks, v)

    T = [[triangle(A_pos, L_ab[a][b]).as_matrix() for b in range(N)] for a in range(N)]
    if include_trace:
        tr = sum(T[a][a] for a in range(N))
        T = [[T[a][b] + (tr if a == b else 0) for b in range(N)] for a in range(N)]

    def t_apply(a, b, v):
        return (T[a][b] @ v) @ GAMMA[0].T

    def step_direct(v):
        unph = [_phase_apply(phases, b, -1, v) for b in range(N)]
        Bv = sum(_phase_apply(phases, a, 1, sum(t_apply(a, b, unph[b]) for b in range(N))) for a in range(N))
        return -sum(_phase_apply(phases, c, 1, s_apply(_phase_apply(phases, c, -1, Bv))) for c in range(N))

    comp = [np.asarray(c, dtype=complex).reshape(grid.size, 4) for c in psi_components]
    psi = sum(_phase_apply(phases, a, 1, comp[a]) for a in range(N))
    term, direct = psi, psi.copy()
    acc = [c.copy() for c in comp]
    for _ in range(order):
        term = step_direct(term)
        direct = direct + term
        comp = [-s_apply(sum(t_apply(a, b, comp[b]) for b in range(N))) for a in range(N)]
        acc = [x + y for x, y in zip(acc, comp)]
    approx = sum(_phase_apply(phases, a, 1, acc[a]) for a in range(N))
    corr = np.linalg.norm(direct - psi)
    dev = float(np.linalg.norm(direct - approx) / corr) if order and corr > 0 else 0.0
    return {"direct": direct.ravel(), "approx": approx.ravel(), "deviation": dev}


def _green_blocks(kind: str, mass, grid: Grid, eps_reg: float) -> np.ndarray:
    if kind == "symmetric":
        return _sym_blocks(mass, grid, eps_reg)
    m = _real_mass(mass)
    sign = {"retarded": 1.0, "advanced": -1.0}[kind]
    k0 = grid.momenta_flat()[:, 0]
    denom = _k2(grid) - m * m + sign * 1j * eps_reg * k0
    return (kslash(grid) + m * np.eye(4)) / denom[:, None, None]


def verify_product_identities(m: float, m_prime: float, eps_list, chi_scale: float = 1.0) -> list:
    """Residual rows for the p s and s s product identities over an eps sweep.

    The s s identity is tested against the test function centered at ``m``
    (diagonal channel, which carries the pi^2 term); the p s identity is
    tested at the separated mass ``m_prime``.  Rows are
    (identity_name, regulator, residual_norm).
    """
    rows = []
    diag = product_identity_residuals(m, eps_list, chi_scale=chi_scale, chi_center=m)
    for eps, r in zip(eps_list, diag["residual"]):
        rows.append(("ss_sp", float(eps), float(r)))
    for eps in eps_list:
        rows.append(("ps_p", float(eps), ps_identity_residual(m_prime, eps, chi_scale, chi_center=m)))
    return rows


def residual_report(rows, path=None) -> str:
    """CSV text with columns identity_name, regulator, residual_norm."""
    lines = ["identity_name,regulator,residual_norm"]
    lines += [f"{name},{reg:.6e},{res:.12e}" for name, reg, res in rows]
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


__all__ += ["verify_product_identities", "residual_report"]
