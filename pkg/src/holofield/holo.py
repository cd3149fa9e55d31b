"""Holographic phases and the dephasing experiments built on them.

A phase family is a set of slowly varying real fields Lambda_a.  Combined
with kernels L_a they define U = sum_a exp(i Lambda_a) L_a, its polar unitary
V and the commutator-form potential derived from V.  The module also holds
the synthetic experiments: stationary-phase suppression, coherent versus
dephased counting, low-rank commutator families and the index-matching rules
for long operator products.
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fields import ScalarKernel
from .lattice import Grid, Scales, minkowski_dot
from .opalg import (
    GAMMA,
    NonlocalOperator,
    compose,
    diagonal,
    dirac_slash,
    multiplication,
    triangle,
)

__all__ = [
    "PhaseFamily",
    "DephasingStatistics",
    "MOperatorFamily",
    "SaddleResult",
    "make_phase_family",
    "dephasing_U",
    "polar_V",
    "B_Lambda_from_V",
    "lift_spin",
    "holographic_field_op",
    "plane_wave_values",
    "saddle_integral",
    "suppression_ratio",
    "suppression_exponent",
    "counting_experiment",
    "counting_slopes",
    "build_M_family",
    "phase_matching_survivors",
    "phase_matching_integral",
    "phase_matching_experiment",
    "middle_phase_ratio",
    "fit_slope",
]


def fit_slope(x, y) -> float:
    """Least-squares slope of log|y| against log x."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y))), 1)[0])


# --- phase families -------------------------------------------------------


@dataclass
class PhaseFamily:
    grid: Grid
    lambdas: np.ndarray  # shape (N,) + grid.shape, natural lattice order
    bandwidth: float
    amplitude: float
    seed: int

    @property
    def N(self) -> int:
        return self.lambdas.shape[0]

    @property
    def l_lambda(self) -> float:
        return 1.0 / self.bandwidth

    def phase(self, a: int, sign: int = 1) -> np.ndarray:
        return np.exp(sign * 1j * self.lambdas[a])

    def gradient_rms(self) -> float:
        """RMS of the spectral first derivative, averaged over axes and families."""
        p = self.grid.momenta()
        vals = []
        for lam in self.lambdas:
            lh = np.fft.fftn(lam)
            for mu in range(self.grid.dim):
                vals.append(np.mean(np.abs(np.fft.ifftn(1j * p[mu] * lh)) ** 2))
        return float(np.sqrt(np.mean(vals)))

    def derivative_ratios(self) -> tuple:
        """max |D^k Lambda| / (amplitude / l_lambda^k) for k = 1, 2 (finite differences)."""
        if self.amplitude == 0:
            return 0.0, 0.0
        out = []
        for order in (1, 2):
            worst = 0.0
            for lam in self.lambdas:
                for mu in range(self.grid.dim):
                    h = self.grid.spacing[mu]
                    if order == 1:
                        d = (np.roll(lam, -1, mu) - np.roll(lam, 1, mu)) / (2 * h)
                    else:
                        d = (np.roll(lam, -1, mu) - 2 * lam + np.roll(lam, 1, mu)) / h**2
                    worst = max(worst, float(np.max(np.abs(d))))
            out.append(worst / (self.amplitude / self.l_lambda**order))
        return tuple(out)


def make_phase_family(N: int, scales, amplitude: float, seed: int, grid: Grid) -> PhaseFamily:
    """Random band-limited real phases with RMS ``amplitude``.

    The spectrum is Gaussian with correlation length l_lambda and is cut at
    |p| = 2 pi / l_lambda, so each axis derivative has RMS close to
    amplitude / l_lambda.  ``scales`` is a ``Scales`` or the length l_lambda.
    """
    l_lambda = scales.l_lambda if isinstance(scales, Scales) else float(scales)
    if l_lambda < 4 * max(grid.spacing):
        raise ValueError(f"l_lambda = {l_lambda} is below four lattice spacings")
    if N < 1:
        raise ValueError("N must be positive")
    rng = np.random.Generator(np.random.Philox(seed))
    p = np.array(grid.momenta())
    p2 = np.sum(p**2, axis=0)
    envelope = np.exp(-0.25 * l_lambda**2 * p2) * (p2 <= (2 * np.pi / l_lambda) ** 2)
    lambdas = np.zeros((N,) + grid.shape)
    if amplitude != 0:
        for a in range(N):
            noise = rng.standard_normal(grid.shape)
            lam = np.real(np.fft.ifftn(np.fft.fftn(noise) * envelope))
            lam -= lam.mean()
            lambdas[a] = amplitude * lam / np.sqrt(np.mean(lam**2))
    return PhaseFamily(grid, lambdas, 1.0 / l_lambda, float(amplitude), seed)


# --- U, V and the commutator-form potential --------------------------------


def dephasing_U(phases: PhaseFamily, kernels: Sequence[ScalarKernel]) -> NonlocalOperator:
    """U = sum_a exp(i Lambda_a) L_a with L_a acting by convolution."""
    if len(kernels) != phases.N:
        raise ValueError("one kernel per phase is required")
    grid = phases.grid
    out = None
    for a, L in enumerate(kernels):
        if L.grid != grid:
            raise ValueError("kernel grid differs from phase grid")
        term = compose(multiplication(phases.phase(a), grid), diagonal(L.hat_values, grid))
        out = term if out is None else out + term
    return out


def polar_V(U: NonlocalOperator, rcond: float = 1e-12, return_condition: bool = False):
    """Unitary polar factor U (U*U)^(-1/2), computed from the SVD of the action."""
    W, s, Vh = np.linalg.svd(U.as_matrix())
    if s[-1] <= rcond * s[0]:
        raise np.linalg.LinAlgError(
            f"U is numerically singular: smallest singular value {s[-1]:.3e}, largest {s[0]:.3e}"
        )
    V = NonlocalOperator.from_action(W @ Vh, U.grid, U.spin_dim)
    return (V, float(s[0] / s[-1])) if return_condition else V


def hilbert_adjoint(A: NonlocalOperator) -> NonlocalOperator:
    return NonlocalOperator(np.conj(A.matrix.T), A.grid, A.spin_dim)


def lift_spin(A: NonlocalOperator) -> NonlocalOperator:
    """Scalar operator tensored with the 4x4 identity."""
    if A.spin_dim == 4:
        return A
    return NonlocalOperator(np.kron(A.matrix, np.eye(4)), A.grid, 4)


def B_Lambda_from_V(V: NonlocalOperator, slash: NonlocalOperator | None = None) -> NonlocalOperator:
    """-1/2 [i dslash, V] V* + 1/2 V [i dslash, V*] for a scalar unitary V."""
    Vs = lift_spin(V)
    Vd = lift_spin(hilbert_adjoint(V))
    D = slash if slash is not None else dirac_slash(V.grid)
    c1 = compose(D, Vs) - compose(Vs, D)
    c2 = compose(D, Vd) - compose(Vd, D)
    return compose(c1, Vd) * (-0.5) + compose(Vs, c2) * 0.5


def slash_field(vector_field: np.ndarray, grid: Grid) -> NonlocalOperator:
    """Multiplication by gamma^mu v_mu(x) for a covariant vector field (dim, *grid)."""
    out = None
    for mu in range(grid.dim):
        m = lift_spin(multiplication(vector_field[mu], grid))
        g = NonlocalOperator(np.kron(np.eye(grid.size), GAMMA[mu]) * grid.volume, grid, 4)
        term = compose(g, m)
        out = term if out is None else out + term
    return out


__all__.append("slash_field")
__all__.append("hilbert_adjoint")


def plane_wave_values(q, grid: Grid) -> np.ndarray:
    """exp(-i q.x) on the lattice for an integer momentum label q."""
    x = np.array(grid.positions(centered=False))
    k = grid.momentum_of(q).reshape((grid.dim,) + (1,) * grid.dim)
    return np.exp(-1j * minkowski_dot(k, x))


def holographic_field_op(a: int, b: int, c: int, q, phases: PhaseFamily, L_cab, A_hat) -> NonlocalOperator:
    """exp(i Lambda_a) (A_c e^{-iqx} > L^c_{ab}) exp(-i Lambda_b)."""
    N = phases.N
    for name, v in (("a", a), ("b", b)):
        if not 0 <= v < N:
            raise IndexError(f"index {name}={v} out of range for N={N}")
    if not 0 <= c < len(L_cab):
        raise IndexError(f"index c={c} out of range")
    grid = phases.grid
    amp = A_hat[c] if np.ndim(A_hat) else A_hat
    T = triangle(amp * plane_wave_values(q, grid), L_cab[c][a][b])
    left = multiplication(phases.phase(a), grid)
    right = multiplication(phases.phase(b, -1), grid)
    return compose(compose(left, T), right)


# --- stationary phase ------------------------------------------------------


@dataclass
class SaddleResult:
    quadrature: complex
    estimate: complex
    points: list = field(default_factory=list)
    contributions: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)

    @property
    def deviation(self) -> float:
        if self.quadrature == 0:
            return float("inf") if self.estimate else 0.0
        return float(abs(self.estimate - self.quadrature) / abs(self.quadrature))


def _envelope(envelope_fns):
    if callable(envelope_fns):
        return envelope_fns
    fns = list(envelope_fns)

    def g(*x):
        out = 1.0
        for f in fns:
            out = out * f(*x)
        return out

    return g


def _hessian(phase_fn, x, h):
    d = len(x)
    H = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            ei = np.eye(d)[i] * h
            ej = np.eye(d)[j] * h
            H[i, j] = (
                phase_fn(*(x + ei + ej)) - phase_fn(*(x + ei - ej)) - phase_fn(*(x - ei + ej)) + phase_fn(*(x - ei - ej))
            ) / (4 * h * h)
    return H


def _gradient(phase_fn, x, h):
    d = len(x)
    return np.array([(phase_fn(*(x + np.eye(d)[i] * h)) - phase_fn(*(x - np.eye(d)[i] * h))) / (2 * h) for i in range(d)])


def saddle_integral(phase_fn: Callable, envelope_fns, axes: Sequence[np.ndarray], chunk: int = 512) -> SaddleResult:
    """Quadrature of g exp(i Phi) on a tensor grid and its stationary-phase estimate.

    ``axes`` holds one or two uniform coordinate arrays.  Critical points are
    located from sign changes of the finite-difference gradient and refined by
    one Newton step.
    """
    g = _envelope(envelope_fns)
    axes = [np.asarray(a, dtype=float) for a in axes]
    d = len(axes)
    if d not in (1, 2):
        raise ValueError("one or two integration dimensions are supported")
    steps = [float(a[1] - a[0]) for a in axes]
    weight = float(np.prod(steps))

    if d == 1:
        x = axes[0]
        quad = complex(np.sum(g(x) * np.exp(1j * phase_fn(x))) * weight)
        grad = np.gradient(phase_fn(x), x)
        idx = np.flatnonzero(np.sign(grad[:-1]) * np.sign(grad[1:]) <= 0)
        candidates = [np.array([x[i]]) for i in idx]
    else:
        x, y = axes
        quad = 0.0
        for s in range(0, len(x), chunk):
            X, Y = np.meshgrid(x[s : s + chunk], y, indexing="ij")
            quad += np.sum(g(X, Y) * np.exp(1j * phase_fn(X, Y)))
        quad = complex(quad * weight)
        X, Y = np.meshgrid(x, y, indexing="ij") if len(x) * len(y) <= 4_000_000 else (None, None)
        candidates = []
        if X is not None:
            P = phase_fn(X, Y)
            gx, gy = np.gradient(P, x, y)
            sx = np.sign(gx)
            sy = np.sign(gy)
            chx = (sx[:-1, :-1] * sx[1:, :-1] <= 0) | (sx[:-1, :-1] * sx[:-1, 1:] <= 0)
            chy = (sy[:-1, :-1] * sy[1:, :-1] <= 0) | (sy[:-1, :-1] * sy[:-1, 1:] <= 0)
            for i, j in zip(*np.nonzero(chx & chy)):
                candidates.append(np.array([x[i], y[j]]))
        else:
            candidates = _coarse_candidates(phase_fn, x, y)

    h = 1e-3 * min(steps) if min(steps) > 0 else 1e-6
    points, contribs, degenerate = [], [], []
    for c in candidates:
        H = _hessian(phase_fn, c, max(h, 1e-5))
        grad = _gradient(phase_fn, c, max(h, 1e-5))
        det = np.linalg.det(H)
        if abs(det) <= 1e-6:
            degenerate.append(tuple(c))
            continue
        xk = c - np.linalg.solve(H, grad)
        if any(np.linalg.norm(xk - p) < 2 * max(steps) for p in points):
            continue
        if any(xk[i] < axes[i][0] or xk[i] > axes[i][-1] for i in range(d)):
            continue
        H = _hessian(phase_fn, xk, max(h, 1e-5))
        det = np.linalg.det(H)
        sig = int(np.sum(np.sign(np.linalg.eigvalsh(H))))
        val = g(*xk) * (2 * np.pi) ** (d / 2) / np.sqrt(abs(det)) * np.exp(1j * (phase_fn(*xk) + np.pi * sig / 4))
        points.append(xk)
        contribs.append(complex(val))
    return SaddleResult(quad, complex(sum(contribs)), points, contribs, degenerate)


def _coarse_candidates(phase_fn, x, y, n=400):
    xs = np.linspace(x[0], x[-1], n)
    ys = np.linspace(y[0], y[-1], n)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    gx, gy = np.gradient(phase_fn(X, Y), xs, ys)
    mag = np.hypot(gx, gy)
    i, j = np.unravel_index(int(np.argmin(mag)), mag.shape)
    return [np.array([xs[i], ys[j]])]


def suppression_ratio(ratio: float, dim: int, l_min: float = 1.0, cross: float = 0.5, oversample: float = 3.0, reach: float = 5.5) -> float:
    """|int g exp(i Phi)| / |int g| for a Gaussian envelope of width l_min.

    The phase has a single nondegenerate critical point with Hessian of size
    1/l_lambda^2 (a non-separable cross term in two dimensions), where
    l_lambda = ratio * l_min.
    """
    l_lam = ratio * l_min
    R = reach * l_min
    # spectral width of the integrand; aliasing error ~ exp(-oversample^2 * 2)
    a, b = 1.0 / l_min**2, (1 + abs(cross)) / l_lam**2
    width = np.sqrt((a * a + b * b) / a)
    dx = 2 * np.pi / (2 * oversample * width)
    n = int(np.ceil(2 * R / dx)) | 1
    ax = np.linspace(-R, R, n)
    if dim == 1:

        def phase(x):
            return 0.5 * x**2 / l_lam**2

        def env(x):
            return np.exp(-0.5 * x**2 / l_min**2)

    elif dim == 2:

        def phase(x, y):
            return 0.5 * (x**2 + 2 * cross * x * y + y**2) / l_lam**2

        def env(x, y):
            return np.exp(-0.5 * (x**2 + y**2) / l_min**2)

    else:
        raise ValueError("dim must be 1 or 2")
    axes = [ax] * dim
    res = saddle_integral(phase, env, axes) if dim == 1 else _quad_only(phase, env, axes)
    ref = (2 * np.pi) ** (dim / 2) * l_min**dim
    return abs(res) / ref if not isinstance(res, SaddleResult) else abs(res.quadrature) / ref


def _quad_only(phase, env, axes, chunk=256):
    x, y = axes
    w = (x[1] - x[0]) * (y[1] - y[0])
    total = 0.0
    for s in range(0, len(x), chunk):
        X, Y = np.meshgrid(x[s : s + chunk], y, indexing="ij")
        total += np.sum(env(X, Y) * np.exp(1j * phase(X, Y)))
    return complex(total * w)


def suppression_exponent(ratios: Sequence[float], dim: int, l_min: float = 1.0, exclude_above: float = 0.5) -> dict:
    """Log-log slope of the suppression ratio against l_lambda / l_min.

    Sweep points with l_lambda / l_min above ``exclude_above`` have no scale
    separation; they are flagged and left out of the fit.
    """
    ratios = [float(r) for r in ratios]
    values = [suppression_ratio(r, dim, l_min) for r in ratios]
    used = [r <= exclude_above for r in ratios]
    xs = [r for r, u in zip(ratios, used) if u]
    ys = [v for v, u in zip(values, used) if u]
    slope = fit_slope(xs, ys) if len(xs) >= 2 else float("nan")
    return {"ratios": ratios, "values": values, "used": used, "slope": slope}


# --- counting --------------------------------------------------------------


@dataclass
class DephasingStatistics:
    alpha: float
    beta: float
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.alpha * self.beta * self.K > 0.1:
            warnings.warn(
                f"alpha*beta*K = {self.alpha * self.beta * self.K:.3g} exceeds 0.1; dephasing is not effective",
                RuntimeWarning,
                stacklevel=2,
            )


def counting_experiment(stats: DephasingStatistics, mode: str, seed: int, trials: int = 256, chunk: int = 2_000_000) -> dict:
    """Mean modulus of a sum of K stationary-point contributions.

    ``b_eq_d``: the contributions share one phase (coherent sum, grows like K).
    ``b_neq_d``: independent uniform phases (dephased sum, grows like sqrt K).
    Each contribution has modulus ``alpha``.
    """
    if mode not in ("b_eq_d", "b_neq_d"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.Generator(np.random.Philox(seed))
    K = int(stats.K)
    sums = np.empty(trials)
    if mode == "b_eq_d":
        common = rng.uniform(0, 2 * np.pi, trials)
        sums[:] = np.abs(K * stats.alpha * np.exp(1j * common))
    else:
        per = max(1, chunk // K)
        for s in range(0, trials, per):
            n = min(per, trials - s)
            ph = rng.uniform(0, 2 * np.pi, (n, K))
            sums[s : s + n] = np.abs(stats.alpha * np.exp(1j * ph).sum(axis=1))
    return {
        "mode": mode,
        "K": K,
        "mean": float(sums.mean()),
        "stderr": float(sums.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0,
    }


def counting_slopes(Ks=(100, 1000, 10000, 100000), seed: int = 0, trials: int = 256, alpha: float = 1.0, beta: float = 1e-7) -> dict:
    out = {}
    for mode in ("b_eq_d", "b_neq_d"):
        means = []
        for i, K in enumerate(Ks):
            stats = DephasingStatistics(alpha, beta, int(K))
            means.append(counting_experiment(stats, mode, seed + 7919 * i + (mode == "b_neq_d"), trials)["mean"])
        out[mode] = {"K": list(Ks), "mean": means, "slope": fit_slope(Ks, means)}
    return out


# --- low-rank commutator families -------------------------------------------


@dataclass
class MOperatorFamily:
    """Rank-r operators M^j_d(q) = c U V* on C^N (x) C^m, stored by site sets.

    ``sources[key]`` and ``images[key]`` are the r coordinate sites spanned by
    V and U; ``scale[key]`` is c.  The partner M^j_d(-q) is the adjoint
    c V U*, so the adjoint pairing holds by construction.
    """

    N: int
    rank: int
    dim: int
    q_list: list
    tensor_dim: int
    images: dict
    sources: dict
    scale: dict
    target: Callable

    def keys(self):
        return list(self.images)

    def dense(self, key, shift: complex = 0.0) -> np.ndarray:
        """Matrix of M for key = (j, d, q_index, sign); sign -1 is the adjoint partner."""
        j, d, qi, sgn = key
        base = (j, d, qi)
        U = np.zeros((self.dim, self.rank))
        V = np.zeros((self.dim, self.rank))
        U[self.images[base], np.arange(self.rank)] = 1.0
        V[self.sources[base], np.arange(self.rank)] = 1.0
        M = self.scale[base] * (U @ V.T if sgn > 0 else V @ U.T)
        return M.astype(complex) + shift * np.eye(self.dim)

    def diagonal_sum(self, j: int, k: int, qi: int) -> np.ndarray:
        """sum_d [M^j_d(q), M^k_d(-q)] as a dense matrix."""
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for d in range(4 * self.N):
            A = self.dense((j, d, qi, 1))
            B = self.dense((k, d, qi, -1))
            out += A @ B - B @ A
        return out

    def target_subspace(self, j: int, qi: int) -> np.ndarray:
        """Sites on which sum_d [M^j_d(q), M^j_d(-q)] should equal K^{jj}(q).

        These are the image sites of M(q) when K^{jj}(q) > 0 and those of
        M(-q) = M(q)* otherwise.
        """
        kval = float(np.atleast_2d(self.target(self.q_list[qi]))[j, j])
        sets = self.images if kval > 0 else self.sources
        return np.unique(np.concatenate([sets[(j, d, qi)] for d in range(4 * self.N)]))

    def _low_rank_commutator_norm(self, ka, kb) -> float:
        """Norm of [M_a, M_b] restricted to the at most 4r sites involved."""
        sites = []
        mats = []
        for key in (ka, kb):
            j, d, qi, sgn = key
            base = (j, d, qi)
            out_s, in_s = (self.images[base], self.sources[base]) if sgn > 0 else (self.sources[base], self.images[base])
            mats.append((out_s, in_s, self.scale[base]))
            sites.extend(out_s)
            sites.extend(in_s)
        sub = {s: i for i, s in enumerate(sorted(set(int(v) for v in sites)))}
        n = len(sub)
        A = np.zeros((n, n))
        B = np.zeros((n, n))
        for M, (o, i, c) in zip((A, B), mats):
            for a, b in zip(o, i):
                M[sub[int(a)], sub[int(b)]] += c
        return float(np.linalg.norm(A @ B - B @ A, 2))

    def commutator_norm(self, ka, kb, dense: bool = False) -> float:
        if dense:
            A = self.dense(ka)
            B = self.dense(kb)
            return float(np.linalg.norm(A @ B - B @ A, 2))
        return self._low_rank_commutator_norm(ka, kb)

    def cross_ratio(self, dense: bool = False) -> dict:
        """Mean cross-commutator norm over all pairs divided by the mean diagonal norm.

        Pairs are enumerated exactly.  Site collisions are found from the
        site sets, so only colliding pairs need a norm evaluation.
        """
        keys = [k + (s,) for k in self.images for s in (1, -1)]
        diag = [self.commutator_norm(k + (1,), k + (-1,), dense) for k in self.images]
        occupied = {}
        for key in keys:
            j, d, qi, s = key
            base = (j, d, qi)
            for site in np.concatenate([self.images[base], self.sources[base]]):
                occupied.setdefault(int(site), set()).add(key)
        colliding = set()
        for owners in occupied.values():
            for a, b in itertools.combinations(sorted(owners), 2):
                colliding.add((a, b))
        total_pairs = 0
        cross_sum = 0.0
        for a, b in itertools.combinations(sorted(keys), 2):
            if a[:3] == b[:3] and a[3] != b[3]:
                continue  # diagonal pair M(q), M(-q)
            total_pairs += 1
        for a, b in colliding:
            if a[:3] == b[:3] and a[3] != b[3]:
                continue
            cross_sum += self.commutator_norm(a, b, dense)
        cross_mean = cross_sum / max(total_pairs, 1)
        return {"cross_mean": cross_mean, "diag_mean": float(np.mean(diag)), "ratio": cross_mean / float(np.mean(diag)), "pairs": total_pairs, "colliding": len(colliding)}


def build_M_family(
    N: int,
    rank: int,
    q_list: Sequence,
    target_K: Callable,
    seed: int,
    tensor_dim: int = 1,
    per_component: int | None = None,
    layout: str = "random",
) -> MOperatorFamily:
    """Rank-r ladder pairs with a prescribed diagonal commutator.

    Each M^j_d(q) = c U V* maps r source sites to r image sites, so
    [M, M*] = c^2 (P_U - P_V) exactly.  With c^2 = |K^{jj}(q)| the sum over d
    equals K^{jj}(q) on ``target_subspace`` when the site sets are disjoint
    (``layout="disjoint"``); a trace-free finite matrix cannot do better.  With ``layout="random"`` the site sets are drawn
    independently in a space of dimension N * per_component, so collisions,
    and hence cross commutators, occur with probability of order 1/N.
    Only tensor-diagonal targets are supported.
    """
    n_ops = 4 * N * len(q_list) * tensor_dim
    m = per_component if per_component is not None else 2 * rank * len(q_list) * 4 * tensor_dim
    dim = N * m
    if 2 * rank * n_ops > dim and layout == "disjoint":
        raise ValueError(f"need dimension >= {2 * rank * n_ops} for disjoint images, have {dim}")
    if 2 * rank * len(q_list) * 4 * N > dim:
        raise ValueError(f"dimension {dim} too small for {len(q_list)} momenta at rank {rank}")
    rng = np.random.Generator(np.random.Philox(seed))
    images, sources, scale = {}, {}, {}
    if layout == "disjoint":
        perm = rng.permutation(dim)
        pos = 0
    for j in range(tensor_dim):
        for qi, q in enumerate(q_list):
            Kq = np.atleast_2d(np.asarray(target_K(q), dtype=float))
            kval = float(Kq[j, j])
            for d in range(4 * N):
                if layout == "disjoint":
                    a = perm[pos : pos + rank]
                    b = perm[pos + rank : pos + 2 * rank]
                    pos += 2 * rank
                elif layout == "random":
                    picks = rng.choice(dim, size=2 * rank, replace=False)
                    a, b = picks[:rank], picks[rank:]
                else:
                    raise ValueError(f"unknown layout {layout!r}")
                images[(j, d, qi)] = np.sort(a)
                sources[(j, d, qi)] = np.sort(b)
                scale[(j, d, qi)] = np.sqrt(abs(kval))
    return MOperatorFamily(N, rank, dim, list(q_list), tensor_dim, images, sources, scale, target_K)


# --- index matching for long products --------------------------------------


def phase_matching_survivors(a: Sequence[int], b: Sequence[int], p: int) -> tuple:
    """Apply a_p = b_p, the per-step either/or rule, then a_0 = b_0.

    ``a`` and ``b`` hold the indices for l = 0..p.  Returns (survives,
    branches) where branches maps each l = 3, 5, ..., p to 1 (equal pairs),
    2 (swapped pairs) or 0 (neither).  When both branches hold, 1 is reported.
    """
    if p % 2 == 0:
        raise ValueError("p must be odd")
    if len(a) != p + 1 or len(b) != p + 1:
        raise ValueError("need indices for l = 0..p")
    branches = {}
    ok = a[p] == b[p]
    for l in range(3, p + 1, 2):
        if a[l - 2] == b[l - 2] and a[l - 1] == b[l - 1]:
            branches[l] = 1
        elif a[l - 2] == b[l - 1] and a[l - 1] == b[l - 2]:
            branches[l] = 2
        else:
            branches[l] = 0
            ok = False
    ok = ok and a[0] == b[0]
    return bool(ok), branches


def _klein_gordon_matrix(n: int, mass: float) -> np.ndarray:
    k = 2 * np.pi * np.fft.fftfreq(n)
    ghat = 1.0 / (mass**2 + (2 * np.sin(k / 2)) ** 2)
    g = np.real(np.fft.ifft(ghat))
    idx = np.arange(n)
    return g[(idx[:, None] - idx[None, :]) % n]


def phase_matching_integral(a, b, p: int, wavenumbers, n: int, mass: float) -> complex:
    """Lattice sum of exp(i Phi_0) K_1 exp(i Phi_1) K_2 ... K_p exp(i Phi_p).

    Phi_l = Lambda_{a_l} - Lambda_{b_l} with Lambda_a(x) = 2 pi k_a x / n.
    Odd factors are massive lattice Klein-Gordon propagators; even factors
    are local.
    """
    x = np.arange(n)
    ks = np.asarray(wavenumbers, dtype=float)
    G = _klein_gordon_matrix(n, mass)
    vec = np.exp(2j * np.pi * (ks[a[p]] - ks[b[p]]) * x / n)
    for l in range(p, 0, -1):
        if l % 2 == 1:
            vec = G @ vec
        vec = vec * np.exp(2j * np.pi * (ks[a[l - 1]] - ks[b[l - 1]]) * x / n)
    return complex(vec.sum())


def phase_matching_experiment(
    p: int = 3, N: int = 3, n: int = 32, wavenumbers=(0, 3, 8), mass: float | None = None, rel_threshold: float = 1e-2
) -> dict:
    """Compare the index rules with brute-force lattice sums over all assignments.

    Brute-force survivors are the assignments within ``rel_threshold`` of the
    largest modulus.  ``class_ratio`` is the smallest rule-survivor modulus over
    the largest modulus among the rest.  The wavenumbers form a Sidon set, so
    equal pair sums force equal index pairs.
    """
    if len(wavenumbers) != N:
        raise ValueError("one wavenumber per family is required")
    mass = 1.0 / n if mass is None else mass
    records = []
    for idx in itertools.product(range(N), repeat=2 * (p + 1)):
        a, b = idx[: p + 1], idx[p + 1 :]
        survives, _ = phase_matching_survivors(a, b, p)
        records.append((a, b, survives, abs(phase_matching_integral(a, b, p, wavenumbers, n, mass))))
    mags = np.array([r[3] for r in records])
    rule = np.array([r[2] for r in records])
    brute = mags >= rel_threshold * mags.max()
    surv_min = float(mags[rule].min()) if rule.any() else 0.0
    non_max = float(mags[~rule].max()) if (~rule).any() else 0.0
    return {
        "assignments": len(records),
        "rule_survivors": int(rule.sum()),
        "brute_survivors": int(brute.sum()),
        "sets_equal": bool(np.array_equal(rule, brute)),
        "class_ratio": surv_min / max(non_max, 1e-300),
    }


def middle_phase_ratio(ratio: float, l_min: float = 64.0, n: int = 512, amplitude: float = np.pi, seeds=range(4)) -> float:
    """||L e^{i(Lambda_d - Lambda_b)} L|| / ||L L|| with L a Gaussian smoothing of width l_min.

    Measures how a mismatched middle phase suppresses the product of two
    holographic factors as l_lambda / l_min decreases.  The phases are drawn
    on a (2, n) lattice, where they are constant in time, so the operator
    splits into identical spatial blocks and one block suffices.  The ratio
    is averaged over the given seeds.
    """
    grid = Grid((2, n), 1.0)
    k = 2 * np.pi * np.fft.fftfreq(n)
    Lhat = np.exp(-0.5 * l_min**2 * k**2)
    idx = np.arange(n)
    out = []
    for seed in seeds:
        fam = make_phase_family(2, ratio * l_min, amplitude, seed, grid)
        f = np.exp(1j * (fam.lambdas[1, 0] - fam.lambdas[0, 0]))
        fhat = np.fft.fft(f) / n
        mid = fhat[(idx[:, None] - idx[None, :]) % n]
        out.append(np.linalg.norm(Lhat[:, None] * mid * Lhat[None, :], 2) / np.max(Lhat**2))
    return float(np.mean(out))
