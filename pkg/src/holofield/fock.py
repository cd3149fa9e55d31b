"""Toy Fock states with a bosonic index, factorization of perturbation terms,
and a second-order Dyson step.

A state is stored as a dense array ``T[a, i_1, ..., i_L]``: for each bosonic
index a, a fully antisymmetric rank-L tensor over M one-particle modes.  Wedge
products are unnormalized antisymmetrizations and the inner product carries a
1/L! so that creation and annihilation are mutual adjoints.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import factorial
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .fields import ScalarKernel
from .green import _green_blocks
from .opalg import GAMMA

__all__ = [
    "ToyFockState",
    "wedge",
    "apply_boson",
    "apply_fermion_create",
    "apply_fermion_annihilate",
    "anticommutator_defect",
    "antisymmetry_defect",
    "bosonic_entropy",
    "HamiltonianSpec",
    "apply_hamiltonian",
    "dyson_step",
    "exact_step",
    "toy_qed_spec",
    "FactorizationResult",
    "factorization_check",
]

MAX_MODES = 8
MAX_FERMIONS = 3
MAX_BOSONIC = 4


@dataclass
class ToyFockState:
    """Sum over a of (antisymmetric rank-L tensor) tensored with the basis vector phi_a."""

    tensors: np.ndarray

    def __post_init__(self):
        self.tensors = np.asarray(self.tensors, dtype=complex)
        if self.tensors.ndim < 1:
            raise ValueError("tensors need a leading bosonic axis")
        if len(set(self.tensors.shape[1:])) > 1:
            raise ValueError(f"fermionic axes must share one mode count, got {self.tensors.shape[1:]}")

    @property
    def N(self) -> int:
        return self.tensors.shape[0]

    @property
    def L(self) -> int:
        return self.tensors.ndim - 1

    @property
    def modes(self) -> int | None:
        return self.tensors.shape[1] if self.L else None

    @classmethod
    def vacuum(cls, weights) -> "ToyFockState":
        """No fermions; bosonic amplitudes ``weights`` (length N)."""
        return cls(np.asarray(weights, dtype=complex))

    @classmethod
    def from_orbitals(cls, orbitals, weights=None) -> "ToyFockState":
        """sum_a w_a psi_1^a ^ ... ^ psi_L^a (x) phi_a from orbitals of shape (N, L, M)."""
        orb = np.asarray(orbitals, dtype=complex)
        if orb.ndim != 3:
            raise ValueError("orbitals must have shape (N, L, M)")
        N, L, M = orb.shape
        _check_sizes(N, L, M)
        w = np.ones(N) if weights is None else np.asarray(weights, dtype=complex)
        state = cls.vacuum(w)
        for ell in reversed(range(L)):
            state = apply_fermion_create(state, orb[:, ell, :])
        return state

    def inner(self, other: "ToyFockState") -> complex:
        if self.tensors.shape != other.tensors.shape:
            return 0j
        return complex(np.vdot(self.tensors, other.tensors)) / factorial(self.L)

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self).real, 0.0)))

    def __add__(self, other):
        return ToyFockState(self.tensors + other.tensors)

    def __sub__(self, other):
        return ToyFockState(self.tensors - other.tensors)

    def __mul__(self, c):
        return ToyFockState(self.tensors * c)

    __rmul__ = __mul__

    def to_bytes(self) -> bytes:
        """Header (magic, N, M, L) then little-endian complex128 payload in C order."""
        head = _MAGIC + struct.pack("<III", self.N, self.modes or 0, self.L)
        return head + np.ascontiguousarray(self.tensors, dtype="<c16").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ToyFockState":
        if data[:4] != _MAGIC:
            raise ValueError("not a Fock state record")
        N, M, L = struct.unpack_from("<III", data, 4)
        vals = np.frombuffer(data, dtype="<c16", offset=16)
        return cls(vals.reshape((N,) + (M,) * L).astype(complex))


_MAGIC = b"HFK1"


def _check_sizes(N, L, M):
    if M > MAX_MODES or L > MAX_FERMIONS or N > MAX_BOSONIC:
        raise ValueError(f"toy dimensions exceeded: N={N} (<= {MAX_BOSONIC}), L={L} (<= {MAX_FERMIONS}), M={M} (<= {MAX_MODES})")


def _per_a(vec, state: ToyFockState) -> np.ndarray:
    v = np.asarray(vec, dtype=complex)
    if v.ndim == 1:
        v = np.broadcast_to(v, (state.N, v.size))
    if v.shape[0] != state.N:
        raise ValueError(f"one-particle vector has {v.shape[0]} bosonic components, state has {state.N}")
    if state.L and v.shape[1] != state.modes:
        raise ValueError(f"one-particle vector has {v.shape[1]} modes, state has {state.modes}")
    return v


def wedge(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """psi_1 ^ ... ^ psi_L as an unnormalized antisymmetric tensor."""
    st = ToyFockState.from_orbitals(np.asarray(vectors, dtype=complex)[None])
    return st.tensors[0]


def apply_fermion_create(state: ToyFockState, psi) -> ToyFockState:
    """Wedge psi^a in front of the a-th tensor; psi has shape (M,) or (N, M)."""
    v = _per_a(psi, state)
    # intermediate ranks may exceed the toy fermion count by two (CAR checks)
    if v.shape[1] > MAX_MODES or state.L + 1 > MAX_FERMIONS + 2:
        raise ValueError(f"toy dimensions exceeded: rank {state.L + 1}, modes {v.shape[1]}")
    T = state.tensors
    outer = np.einsum("ai,a...->ai...", v, T)
    out = np.zeros_like(outer)
    for k in range(state.L + 1):
        out += (-1) ** k * np.moveaxis(outer, 1, 1 + k)
    return ToyFockState(out)


def apply_fermion_annihilate(state: ToyFockState, phi) -> ToyFockState:
    """Contract conj(phi^a) into the first fermionic slot of the a-th tensor."""
    if state.L == 0:
        return ToyFockState(np.zeros((state.N,), dtype=complex))
    v = _per_a(phi, state)
    return ToyFockState(np.einsum("ai,ai...->a...", np.conj(v), state.tensors))


def anticommutator_defect(state: ToyFockState, psi, phi) -> dict:
    """Residuals of the toy canonical anticommutation relations on ``state``.

    ``mixed`` is || {a(phi), a^+(psi)} S - <phi^a, psi^a> S ||, ``create`` is
    || {a^+(psi), a^+(phi)} S ||.
    """
    psi_a = _per_a(psi, state)
    phi_a = _per_a(phi, state)
    ac = apply_fermion_annihilate(apply_fermion_create(state, psi_a), phi_a)
    if state.L:
        ac = ac + apply_fermion_create(apply_fermion_annihilate(state, phi_a), psi_a)
    overlap = np.einsum("ai,ai->a", np.conj(phi_a), psi_a)
    target = ToyFockState(np.einsum("a,a...->a...", overlap, state.tensors))
    cc = apply_fermion_create(apply_fermion_create(state, psi_a), phi_a)
    cc = cc + apply_fermion_create(apply_fermion_create(state, phi_a), psi_a)
    scale = max(state.norm(), 1e-300)
    return {"mixed": (ac - target).norm() / scale, "create": cc.norm() / scale}


def antisymmetry_defect(state: ToyFockState) -> float:
    """Largest || T + T with two fermionic axes swapped || relative to ||T||."""
    T = state.tensors
    scale = max(float(np.linalg.norm(T)), 1e-300)
    worst = 0.0
    for i in range(1, T.ndim):
        for j in range(i + 1, T.ndim):
            worst = max(worst, float(np.linalg.norm(T + np.swapaxes(T, i, j))) / scale)
    return worst


def apply_boson(state: ToyFockState, M) -> ToyFockState:
    """Route the bosonic index: the coefficient of phi_b becomes sum_a M[b, a] T_a."""
    M = np.asarray(M, dtype=complex)
    if M.shape != (state.N, state.N):
        raise ValueError(f"bosonic matrix must be {state.N}x{state.N}, got {M.shape}")
    return ToyFockState(np.einsum("ba,a...->b...", M, state.tensors))


def _one_body(state: ToyFockState, h: np.ndarray) -> ToyFockState:
    """Second-quantized one-body operator: h applied to each fermionic slot in turn."""
    T = state.tensors
    out = np.zeros_like(T)
    for ax in range(1, T.ndim):
        out += np.moveaxis(np.tensordot(h, T, axes=([1], [ax])), 0, ax)
    return ToyFockState(out)


def bosonic_entropy(state: ToyFockState) -> float:
    """Von Neumann entropy of the reduced density matrix on the bosonic index."""
    T = state.tensors.reshape(state.N, -1)
    rho = (np.conj(T) @ T.T).T / factorial(state.L)
    rho = rho / np.trace(rho).real
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    lam = lam[lam > 1e-15]
    return float(max(0.0, -np.sum(lam * np.log(lam))))


# --- dynamics ---------------------------------------------------------------


@dataclass
class HamiltonianSpec:
    """H(t) = sum_j dGamma(h_j(t)) (x) A_j with h_j(t) = e^{i H0 t} h_j e^{-i H0 t}.

    ``free`` is the one-particle free Hamiltonian H0 (None for a static H).
    """

    one_body: Sequence[np.ndarray]
    bosonic: Sequence[np.ndarray]
    free: np.ndarray | None = None

    def __post_init__(self):
        if len(self.one_body) != len(self.bosonic):
            raise ValueError("one_body and bosonic need the same number of terms")
        self.one_body = [np.asarray(h, dtype=complex) for h in self.one_body]
        self.bosonic = [np.asarray(A, dtype=complex) for A in self.bosonic]
        if self.free is not None:
            H0 = np.asarray(self.free, dtype=complex)
            self._evals, self._evecs = np.linalg.eigh(0.5 * (H0 + H0.conj().T))

    def at(self, t: float) -> list:
        if self.free is None:
            return list(self.one_body)
        U = (self._evecs * np.exp(1j * self._evals * t)) @ self._evecs.conj().T
        return [U @ h @ U.conj().T for h in self.one_body]


def apply_hamiltonian(state: ToyFockState, spec: HamiltonianSpec, t: float = 0.0) -> ToyFockState:
    out = ToyFockState(np.zeros_like(state.tensors))
    for h, A in zip(spec.at(t), spec.bosonic):
        out = out + apply_boson(_one_body(state, h), A)
    return out


def dyson_step(state: ToyFockState, spec: HamiltonianSpec, dt: float, order: int = 2, t0: float = 0.0, nodes: int = 8) -> ToyFockState:
    """Time-ordered Dyson series over [t0, t0 + dt] truncated at ``order`` (0, 1 or 2)."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    if order == 0 or dt == 0:
        return ToyFockState(state.tensors.copy())
    x, w = np.polynomial.legendre.leggauss(nodes)
    ts = t0 + 0.5 * dt * (x + 1)
    ws = 0.5 * dt * w
    first = ToyFockState(np.zeros_like(state.tensors))
    second = ToyFockState(np.zeros_like(state.tensors))
    for t1, w1 in zip(ts, ws):
        first = first + w1 * apply_hamiltonian(state, spec, t1)
        if order == 2:
            inner = ToyFockState(np.zeros_like(state.tensors))
            for t2, w2 in zip(t0 + 0.5 * (t1 - t0) * (x + 1), 0.5 * (t1 - t0) * w):
                inner = inner + w2 * apply_hamiltonian(state, spec, t2)
            second = second + w1 * apply_hamiltonian(inner, spec, t1)
    return state + (-1j) * first + (-1.0) * second


def exact_step(state: ToyFockState, spec: HamiltonianSpec, dt: float, t0: float = 0.0, rtol: float = 1e-12) -> ToyFockState:
    """Reference solution of i d/dt S = H(t) S by adaptive integration."""
    shape = state.tensors.shape

    def rhs(t, y):
        s = ToyFockState(y.reshape(shape))
        return (-1j * apply_hamiltonian(s, spec, t).tensors).ravel()

    sol = solve_ivp(rhs, (t0, t0 + dt), state.tensors.ravel(), method="DOP853", rtol=rtol, atol=1e-14)
    return ToyFockState(sol.y[:, -1].reshape(shape))


def toy_qed_spec(N: int = 2, n_momenta: int = 2, mass: float = 1.0, dk: float = 1.0, coupling: float = 1.0, seed: int = 0) -> HamiltonianSpec:
    """Interaction-picture toy QED on spinor (x) momentum-ring modes.

    One-body parts are -alpha^j times the symmetric momentum shift, the free
    part is alpha^1 k + beta m, and bosonic matrices are random Hermitian.
    """
    M = 4 * n_momenta
    _check_sizes(N, 1, M)
    rng = np.random.default_rng(seed)
    beta = GAMMA[0]
    shift = np.roll(np.eye(n_momenta), 1, axis=0)
    hop = shift + shift.T if n_momenta > 2 else shift
    k = dk * (np.arange(n_momenta) - n_momenta // 2)
    one_body, bosonic = [], []
    for j in (1, 2, 3):
        alpha = beta @ GAMMA[j]
        one_body.append(-coupling * np.kron(alpha, hop))
        X = rng.normal(size=(N, N)) + 1j * rng.normal(size=(N, N))
        bosonic.append(0.5 * (X + X.conj().T))
    free = np.kron(beta @ GAMMA[1], np.diag(k)) + mass * np.kron(beta, np.eye(n_momenta))
    return HamiltonianSpec(one_body, bosonic, free)


# --- factorization of perturbation terms ------------------------------------


@dataclass
class FactorizationResult:
    raw: np.ndarray
    factored: np.ndarray
    deviation: float
    chain: np.ndarray
    bosonic: np.ndarray


def _slash(vec: np.ndarray) -> np.ndarray:
    """gamma^i v_i with the index lowered by the metric."""
    metric = np.array([1.0, -1.0, -1.0, -1.0])[: len(vec)]
    return np.einsum("i,i,iab->ab", metric, vec, GAMMA[: len(vec)])


def factorization_check(
    momenta: Sequence,
    p,
    kernels: Sequence[ScalarKernel],
    A_hat: np.ndarray,
    spinor=None,
    mass: float = 1.0,
    eps_reg: float = 0.3,
    kind: str = "retarded",
) -> FactorizationResult:
    """Compare the chained n-th order term with its fermion x boson factorization.

    ``momenta`` are integer transfer labels q_1..q_n, ``p`` the label of the
    incoming plane wave, ``A_hat[l, b, i]`` the field sample A^i_b(q_l).  The
    raw side multiplies dense operators s (gamma.A_b E_q > L^b) on the full
    lattice; the factored side contracts the 4x4 chain s gamma^{i_1} s ... with
    the scalar products of A^{i} L^b at the midpoint momenta.
    """
    grid = kernels[0].grid
    n = len(momenta)
    if n > 2:
        raise ValueError("factorization check supports n <= 2")
    A_hat = np.asarray(A_hat, dtype=complex)
    dim = grid.dim
    if A_hat.shape != (n, len(kernels), dim):
        raise ValueError(f"A_hat must have shape ({n}, {len(kernels)}, {dim}), got {A_hat.shape}")
    u = np.ones(4, dtype=complex) if spinor is None else np.asarray(spinor, dtype=complex)
    qs = [np.asarray(q, dtype=int) for q in momenta]
    p = np.asarray(p, dtype=int)
    blocks = _green_blocks(kind, mass, grid, eps_reg)
    size = grid.size

    psi = np.zeros((size, 4), dtype=complex)
    psi[grid.flat_index(p)] = u
    if n == 0:
        return FactorizationResult(psi[grid.flat_index(p)], u, 0.0, np.eye(4)[None], np.ones(1))

    # raw side: dense operator chain acting on the plane wave
    idx = grid.momentum_indices()
    vec = psi.copy()
    for ell in reversed(range(n)):
        factor = np.zeros((size, 4, size, 4), dtype=complex)
        kr = idx
        kl = idx + qs[ell]
        rows = np.array([grid.flat_index(v) for v in kl])
        for b, L in enumerate(kernels):
            mid = L.midpoint(kl, kr)
            sl = _slash(A_hat[ell, b])
            factor[rows, :, np.arange(size), :] += mid[:, None, None] * sl[None]
        vec = np.einsum("xayb,yb->xa", factor, vec)
        vec = np.einsum("xab,xb->xa", blocks, vec)
    out_label = p + sum(qs)
    raw = vec[grid.flat_index(out_label)]

    # factored side: spinor chain times scalar bosonic product
    metric = np.array([1.0, -1.0, -1.0, -1.0])[:dim]
    legs = []
    bos = []
    for ell in range(n):
        kl = p + sum(qs[ell:])
        kr = p + sum(qs[ell + 1:]) if ell + 1 < n else p
        s = blocks[grid.flat_index(kl)]
        legs.append(np.einsum("ab,ibc->iac", s, GAMMA[:dim]))
        mids = np.array([L.midpoint(kl[None], kr[None])[0] for L in kernels])
        bos.append(np.einsum("b,bi->i", mids, A_hat[ell]) * metric)
    if n == 1:
        chain = legs[0]
        bosonic = bos[0]
        factored = np.einsum("iab,i,b->a", chain, bosonic, u)
    else:
        chain = np.einsum("iab,jbc->ijac", legs[0], legs[1])
        bosonic = np.einsum("i,j->ij", bos[0], bos[1])
        factored = np.einsum("ijab,ij,b->a", chain, bosonic, u)
    scale = max(float(np.linalg.norm(raw)), 1e-300)
    return FactorizationResult(raw, factored, float(np.linalg.norm(raw - factored)) / scale, chain, bosonic)
