"""Gaussian moments by explicit pairing enumeration.

A word is a sequence of groups; each group is a polynomial in field labels
(a list of monomials).  One group may be marked as the bracket group, for
example an expanded commutator.  Pairs joining two labels of the bracket
group are *inner*; pairs joining the bracket group to the rest are *outer*.
The mean of a word is the sum over monomial choices and perfect matchings of
the product of pair covariances; every diagram is kept with its value.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .fields import GaussianFieldSpec, sample_modes

MAX_LABELS = 12


@dataclass(frozen=True)
class FieldLabel:
    """One Gaussian factor.

    ``point`` is an integer momentum label or a spacetime position; ``deriv``
    counts time derivatives for position labels; ``slot`` names the role of
    the factor inside a word and is used for channel bookkeeping; ``at`` is an
    auxiliary evaluation momentum used by kernel-weighted covariances.
    """

    family: int = 0
    tensor: int = 0
    point: tuple = ()
    flavor: str = "scalar_W"
    deriv: int = 0
    slot: str = ""
    at: tuple = ()


@dataclass(frozen=True)
class Monomial:
    coeff: complex
    labels: tuple


@dataclass
class WickWord:
    groups: list
    bracket: int | None = None

    def __post_init__(self):
        norm = []
        for g in self.groups:
            if isinstance(g, FieldLabel):
                g = [Monomial(1.0, (g,))]
            elif isinstance(g, Monomial):
                g = [g]
            elif all(isinstance(x, FieldLabel) for x in g):
                g = [Monomial(1.0, tuple(g))]
            norm.append(list(g))
        self.groups = norm
        flavors = {lab.flavor for g in self.groups for m in g for lab in m.labels}
        if len(flavors) > 1:
            raise ValueError(f"mixed flavors in one word: {sorted(flavors)}")

    @classmethod
    def product(cls, labels: Sequence[FieldLabel]) -> "WickWord":
        return cls([[Monomial(1.0, (lab,))] for lab in labels])


@dataclass
class PairingDiagram:
    pairs: tuple
    kinds: tuple
    channel: str
    choice: tuple = ()
    coeff: complex = 1.0
    labels: tuple = ()

    @property
    def slot_pairs(self) -> frozenset:
        return frozenset(frozenset((self.labels[i].slot, self.labels[j].slot)) for i, j in self.pairs)


@dataclass
class WickResult:
    total: complex
    diagrams: list = field(default_factory=list)

    def channel_sum(self, channel: str) -> complex:
        return complex(sum(v for d, v in self.diagrams if d.channel == channel))

    def by_slot_pairs(self) -> dict:
        out: dict = {}
        for d, v in self.diagrams:
            key = d.slot_pairs
            out[key] = out.get(key, 0.0) + v
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["diagram_id", "pair_list", "channel", "value_re", "value_im"])
        for i, (d, v) in enumerate(self.diagrams):
            pl = ";".join(f"{a}-{b}" for a, b in d.pairs)
            w.writerow([i, pl, d.channel, repr(float(np.real(v))), repr(float(np.imag(v)))])
        return buf.getvalue()


def perfect_matchings(n: int) -> Iterator[tuple]:
    """All perfect matchings of range(n) as tuples of ordered pairs."""

    def rec(items):
        if not items:
            yield ()
            return
        first, rest = items[0], items[1:]
        for k in range(len(rest)):
            partner = rest[k]
            remaining = rest[:k] + rest[k + 1:]
            for tail in rec(remaining):
                yield ((first, partner),) + tail

    if n % 2:
        return iter(())
    return rec(tuple(range(n)))


def _choices(word: WickWord):
    for choice in itertools.product(*[range(len(g)) for g in word.groups]):
        labels, owner, coeff = [], [], 1.0
        for gi, mi in enumerate(choice):
            mono = word.groups[gi][mi]
            coeff *= mono.coeff
            labels.extend(mono.labels)
            owner.extend([gi] * len(mono.labels))
        yield choice, coeff, tuple(labels), owner


def _classify(pairs, owner, bracket):
    kinds = []
    for i, j in pairs:
        inside = (owner[i] == bracket, owner[j] == bracket)
        if bracket is None:
            kinds.append("plain")
        elif all(inside):
            kinds.append("inner")
        elif any(inside):
            kinds.append("outer")
        else:
            kinds.append("spectator")
    channel = "outer" if "outer" in kinds else "inner"
    return tuple(kinds), channel


def enumerate_pairings(word: WickWord) -> list:
    out = []
    for choice, coeff, labels, owner in _choices(word):
        n = len(labels)
        if n > MAX_LABELS:
            raise ValueError(f"word has {n} labels; the limit is {MAX_LABELS}")
        for pairs in perfect_matchings(n):
            kinds, channel = _classify(pairs, owner, word.bracket)
            out.append(PairingDiagram(pairs, kinds, channel, choice, coeff, labels))
    return out


def _uniform(word: WickWord) -> bool:
    return all(len({len(m.labels) for m in g}) == 1 for g in word.groups)


def _mean_contracted(word: WickWord, cov: Callable) -> WickResult:
    """Sum over monomial choices as a tensor contraction, one diagram per slot matching."""
    sizes = [len(g[0].labels) for g in word.groups]
    owner = [gi for gi, n in enumerate(sizes) for _ in range(n)]
    within = [s for n in sizes for s in range(n)]
    letters = "abcdefghijklmnopqrstuvwxyz"
    coeffs = [np.array([complex(m.coeff) for m in g]) for g in word.groups]
    diagrams, total = [], 0.0
    for pairs in perfect_matchings(len(owner)):
        operands, subs = [], []
        for gi, c in enumerate(coeffs):
            operands.append(c)
            subs.append(letters[gi])
        for i, j in pairs:
            gi, gj, si, sj = owner[i], owner[j], within[i], within[j]
            if gi == gj:
                arr = np.array([complex(cov(m.labels[si], m.labels[sj])) for m in word.groups[gi]])
                subs.append(letters[gi])
            else:
                arr = np.array(
                    [[complex(cov(a.labels[si], b.labels[sj])) for b in word.groups[gj]] for a in word.groups[gi]]
                )
                subs.append(letters[gi] + letters[gj])
            operands.append(arr)
        val = complex(np.einsum(",".join(subs) + "->", *operands))
        kinds, channel = _classify(pairs, owner, word.bracket)
        diagrams.append((PairingDiagram(pairs, kinds, channel, (), 1.0, ()), val))
        total += val
    return WickResult(complex(total), diagrams)


def mean_of_word(word: WickWord, cov, method: str = "auto") -> WickResult:
    """Exact Gaussian mean; ``cov`` is a callable on two labels or a spec.

    ``method="explicit"`` keeps one diagram per monomial choice and matching;
    ``"contract"`` sums the monomial choices of each slot matching by tensor
    contraction, which needs every group to have monomials of equal length.
    """
    if isinstance(cov, GaussianFieldSpec):
        cov = spec_covariance(cov)
    if method not in ("auto", "explicit", "contract"):
        raise ValueError(f"unknown method {method!r}")
    n_labels = sum(max(len(m.labels) for m in g) for g in word.groups)
    if n_labels > MAX_LABELS:
        raise ValueError(f"word has {n_labels} labels; the limit is {MAX_LABELS}")
    if method == "contract" or (method == "auto" and _uniform(word) and any(len(g) > 1 for g in word.groups)):
        if not _uniform(word):
            raise ValueError("contraction needs equal-length monomials within each group")
        return _mean_contracted(word, cov)
    diagrams = []
    total = 0.0
    cache: dict = {}

    def c(a, b):
        key = (a, b)
        if key not in cache:
            cache[key] = complex(cov(a, b))
        return cache[key]

    for d in enumerate_pairings(word):
        val = d.coeff
        for i, j in d.pairs:
            val = val * c(d.labels[i], d.labels[j])
            if val == 0:
                break
        diagrams.append((d, val))
        total += val
    return WickResult(complex(total), diagrams)


def brute_force_mean(labels: Sequence, cov: Callable) -> complex:
    """Isserlis sum over all permutations, divided by the overcounting factor."""
    n = len(labels)
    if n % 2:
        return 0.0
    if n > 10:
        raise ValueError("permutation oracle limited to 10 labels")
    m = n // 2
    mat = np.array([[complex(cov(a, b)) for b in labels] for a in labels])
    total = 0.0
    for perm in itertools.permutations(range(n)):
        prod = 1.0
        for k in range(m):
            prod *= mat[perm[2 * k], perm[2 * k + 1]]
        total += prod
    return complex(total / (2**m * math.factorial(m)))


def spec_covariance(spec: GaussianFieldSpec) -> Callable:
    """Covariance of momentum labels: E[W_i(q) W_j(q')] = V delta(q+q') hhat_ij(q)."""
    grid = spec.grid

    def cov(a: FieldLabel, b: FieldLabel) -> complex:
        for lab in (a, b):
            if not (0 <= lab.tensor < spec.tensor_dim and 0 <= lab.family < spec.n_families):
                raise ValueError(f"label {lab} does not fit a spec with {spec.tensor_dim} x {spec.n_families} components")
            if len(lab.point) != grid.dim:
                raise ValueError(f"label momentum {lab.point} does not match a {grid.dim}-dimensional grid")
        qa = np.asarray(a.point, dtype=int)
        qb = np.asarray(b.point, dtype=int)
        if np.any(np.mod(qa + qb, grid.points)):
            return 0.0
        pos = tuple(np.mod(qa, grid.points))
        i = spec.component(a.tensor, a.family)
        j = spec.component(b.tensor, b.family)
        return grid.volume * spec.covariance[pos + (i, j)]

    return cov


def position_covariance(h_derivative: Callable, families: np.ndarray | None = None) -> Callable:
    """Covariance of position labels with time derivatives.

    ``h_derivative(n, xi)`` returns the n-th time derivative of h at the
    separation xi; then E[d^m W(a) d^n W(b)] = (-1)^m h^(m+n)(b - a).
    Families are uncorrelated unless a family matrix is given.
    """

    def cov(a: FieldLabel, b: FieldLabel) -> complex:
        weight = (a.family == b.family) if families is None else families[a.family, b.family]
        if weight == 0:
            return 0.0
        xi = np.asarray(b.point, dtype=float) - np.asarray(a.point, dtype=float)
        return weight * (-1) ** a.deriv * h_derivative(a.deriv + b.deriv, xi)

    return cov


def lattice_time_derivatives(spec: GaussianFieldSpec, orders: int = 3) -> Callable:
    """h and its time derivatives from a scalar momentum covariance.

    The n-th derivative multiplies hhat(q) by (-i q0)^n before the inverse
    transform; separations are rounded to the nearest lattice vector.
    """
    from .lattice import inverse_ft

    grid = spec.grid
    if spec.components != 1:
        raise ValueError("scalar covariance expected")
    q0 = grid.momenta()[0]
    hhat = spec.covariance[..., 0, 0]
    tables = [inverse_ft(hhat * (-1j * q0) ** n, grid) for n in range(orders)]
    step = np.asarray(grid.spacing)

    def h_derivative(n: int, xi) -> complex:
        idx = np.mod(np.rint(np.asarray(xi, dtype=float) / step).astype(int), grid.points)
        return complex(tables[n][tuple(idx)])

    return h_derivative


def commutator_word(x, y, x1, x2, C: float, families: int = 1) -> WickWord:
    """i (W(x) dW(y) - W(y) dW(x)) tensor C W(x1) tensor C W(x2).

    With several families the bracket is summed family by family (different
    families commute) and each spectator is the family sum.
    """
    bracket, s1, s2 = [], [], []
    for a in range(families):
        X = FieldLabel(family=a, point=tuple(x), slot="x")
        Xd = FieldLabel(family=a, point=tuple(x), deriv=1, slot="x")
        Y = FieldLabel(family=a, point=tuple(y), slot="y")
        Yd = FieldLabel(family=a, point=tuple(y), deriv=1, slot="y")
        bracket += [Monomial(1j, (X, Yd)), Monomial(-1j, (Y, Xd))]
        s1.append(Monomial(C, (FieldLabel(family=a, point=tuple(x1), slot="x1"),)))
        s2.append(Monomial(C, (FieldLabel(family=a, point=tuple(x2), slot="x2"),)))
    return WickWord([bracket, s1, s2], bracket=0)


def outer_closed_form(h_derivative: Callable, x, y, x1, x2, C: float) -> complex:
    """Outer-pairing contribution of ``commutator_word`` in closed form."""
    x, y, x1, x2 = (np.asarray(v, dtype=float) for v in (x, y, x1, x2))

    def h(v):
        return h_derivative(0, v)

    def hd(v):
        return h_derivative(1, v)

    bracket = (
        -h(x1 - x) * hd(x2 - y)
        - h(x2 - x) * hd(x1 - y)
        + hd(x1 - x) * h(x2 - y)
        + hd(x2 - x) * h(x1 - y)
    )
    return 1j * C**2 * bracket


def inner_closed_form(h_derivative: Callable, x, y, x1, x2, C: float) -> complex:
    """C^2 h(x1 - x2) K(x, y) with K(x, y) = 2 i hdot(y - x)."""
    x, y, x1, x2 = (np.asarray(v, dtype=float) for v in (x, y, x1, x2))
    return C**2 * h_derivative(0, x1 - x2) * 2j * h_derivative(1, y - x)


def mean_momentum_triple(q, qp, r, rp, K_fn: Callable, p, k, kp, idx=(0, 0, 0, 0), atol: float = 1e-12) -> dict:
    """Channels of the mean of [B_q, B_q']|_p (x) B_r|_k (x) B_r'|_k'.

    ``K_fn(j, l, q, pL, pR)`` is the kernel-weighted covariance; the pair mean
    of B^j_q|_a and B^l_s|_b is delta(q + s) K(j, l, q, a + q/2, b + s/2).
    Returned values omit the momentum deltas; a channel is 0 when its delta
    support is not met.
    """
    q, qp, r, rp, p, k, kp = (np.asarray(v, dtype=float) for v in (q, qp, r, rp, p, k, kp))
    i, j, kk, ll = idx

    def on(a, b):
        return np.all(np.abs(a + b) <= atol)

    def pair(ja, qa, a, jb, qb, b):
        return K_fn(ja, jb, qa, a + qa / 2, b + qb / 2)

    out = {"p1": 0.0, "p2": 0.0, "p3": 0.0}
    if on(q, qp) and on(r, rp):
        spect = pair(kk, r, k, ll, rp, kp)
        out["p1"] = (pair(i, q, p + qp, j, qp, p) - pair(j, qp, p + q, i, q, p)) * spect
    if on(q, r) and on(qp, rp):
        out["p2"] = (
            pair(i, q, p + qp, kk, r, k) * pair(j, qp, p, ll, rp, kp)
            - pair(i, q, p, kk, r, k) * pair(j, qp, p + q, ll, rp, kp)
        )
    if on(q, rp) and on(qp, r):
        out["p3"] = (
            pair(i, q, p + qp, ll, rp, kp) * pair(j, qp, p, kk, r, k)
            - pair(i, q, p, ll, rp, kp) * pair(j, qp, p + q, kk, r, k)
        )
    return out


def momentum_triple_word(q, qp, r, rp, p, k, kp, idx=(0, 0, 0, 0)) -> WickWord:
    """The same product as a word, for the enumeration oracle."""
    i, j, kk, ll = idx
    t = lambda v: tuple(float(c) for c in np.asarray(v, dtype=float))  # noqa: E731
    q, qp, r, rp, p, k, kp = (np.asarray(v, dtype=float) for v in (q, qp, r, rp, p, k, kp))
    X1 = FieldLabel(tensor=i, point=t(q), slot="q", at=t(p + qp), flavor="vector_A")
    X2 = FieldLabel(tensor=j, point=t(qp), slot="q'", at=t(p), flavor="vector_A")
    Y1 = FieldLabel(tensor=j, point=t(qp), slot="q'", at=t(p + q), flavor="vector_A")
    Y2 = FieldLabel(tensor=i, point=t(q), slot="q", at=t(p), flavor="vector_A")
    R1 = FieldLabel(tensor=kk, point=t(r), slot="r", at=t(k), flavor="vector_A")
    R2 = FieldLabel(tensor=ll, point=t(rp), slot="r'", at=t(kp), flavor="vector_A")
    bracket = [Monomial(1.0, (X1, X2)), Monomial(-1.0, (Y1, Y2))]
    return WickWord([bracket, [Monomial(1.0, (R1,))], [Monomial(1.0, (R2,))]], bracket=0)


def kernel_covariance(K_fn: Callable, atol: float = 1e-12) -> Callable:
    def cov(a: FieldLabel, b: FieldLabel) -> complex:
        qa, qb = np.asarray(a.point), np.asarray(b.point)
        if np.any(np.abs(qa + qb) > atol):
            return 0.0
        return K_fn(a.tensor, b.tensor, qa, np.asarray(a.at) + qa / 2, np.asarray(b.at) + qb / 2)

    return cov


def triple_channels_by_enumeration(q, qp, r, rp, K_fn, p, k, kp, idx=(0, 0, 0, 0)) -> dict:
    word = momentum_triple_word(q, qp, r, rp, p, k, kp, idx)
    res = mean_of_word(word, kernel_covariance(K_fn), method="explicit")
    names = {
        frozenset({frozenset({"q", "q'"}), frozenset({"r", "r'"})}): "p1",
        frozenset({frozenset({"q", "r"}), frozenset({"q'", "r'"})}): "p2",
        frozenset({frozenset({"q", "r'"}), frozenset({"q'", "r"})}): "p3",
    }
    out = {"p1": 0.0, "p2": 0.0, "p3": 0.0}
    for key, val in res.by_slot_pairs().items():
        out[names[key]] += val
    return out


@dataclass
class MCReport:
    mean: complex
    stderr: complex
    exact: complex
    z_re: float
    z_im: float
    samples: int


def mc_samples(word: WickWord, spec: GaussianFieldSpec, samples: int, seed: int) -> np.ndarray:
    """Per-sample values of a word of momentum labels."""
    labs = sorted({lab for g in word.groups for m in g for lab in m.labels}, key=repr)
    qs = [lab.point for lab in labs]
    draws = sample_modes(spec, qs, samples, seed)
    values = {lab: draws[:, i, spec.component(lab.tensor, lab.family)] for i, lab in enumerate(labs)}
    out = None
    for g in word.groups:
        gsum = 0.0
        for mono in g:
            prod = mono.coeff * np.ones(samples, dtype=complex)
            for lab in mono.labels:
                prod = prod * values[lab]
            gsum = gsum + prod
        out = gsum if out is None else out * gsum
    return np.asarray(out)


def mc_check(word: WickWord, spec: GaussianFieldSpec, samples: int, seed: int) -> MCReport:
    if samples < 100:
        raise ValueError("need at least 100 samples")
    vals = mc_samples(word, spec, samples, seed)
    exact = mean_of_word(word, spec).total
    mean = vals.mean()
    se_re = vals.real.std(ddof=1) / np.sqrt(samples)
    se_im = vals.imag.std(ddof=1) / np.sqrt(samples)

    floor = 1e-12 * max(abs(exact), abs(mean))

    def z(diff, se):
        se = max(se, floor)
        if se == 0:
            return 0.0 if diff == 0 else float("inf")
        return float(abs(diff) / se)

    return MCReport(
        complex(mean),
        complex(se_re, se_im),
        exact,
        z(mean.real - exact.real, se_re),
        z(mean.imag - exact.imag, se_im),
        samples,
    )


def mc_convergence(word: WickWord, spec: GaussianFieldSpec, sizes=(1000, 10000, 100000), replicates: int = 16, seed: int = 0):
    """Log-log slope of the RMS Monte Carlo error against the sample count."""
    exact = mean_of_word(word, spec).total
    rms = []
    for si, n in enumerate(sizes):
        errs = [abs(mc_samples(word, spec, n, seed + 1000 * si + r).mean() - exact) for r in range(replicates)]
        rms.append(float(np.sqrt(np.mean(np.square(errs)))))
    slope = float(np.polyfit(np.log(sizes), np.log(rms), 1)[0])
    return slope, rms


__all__ = [
    "FieldLabel",
    "Monomial",
    "WickWord",
    "PairingDiagram",
    "WickResult",
    "MCReport",
    "perfect_matchings",
    "enumerate_pairings",
    "mean_of_word",
    "brute_force_mean",
    "spec_covariance",
    "position_covariance",
    "lattice_time_derivatives",
    "commutator_word",
    "outer_closed_form",
    "inner_closed_form",
    "mean_momentum_triple",
    "momentum_triple_word",
    "kernel_covariance",
    "triple_channels_by_enumeration",
    "mc_samples",
    "mc_check",
    "mc_convergence",
]
