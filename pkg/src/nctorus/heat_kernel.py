"""From the symbol b2 to the modular curvature functions.

Pipeline: angular integration over S^3, removal of the contour integral,
the r-integration by the rearrangement lemma, rewriting derivatives of e^h
in terms of derivatives of h, and numerical assembly of K and H.

Throughout, ``b0`` inside an :class:`RTerm` stands for ``(e^h r^2 + 1)^{-1}``
and modular variables are written ``u = e^s``.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import integrate

from .divided import dd2_zero, phi1
from .symbols import (B0, DExpH, DH, ExpH, Symbol, canonical_word, coef_real,
                      parametrix)


class HomogeneityError(ValueError):
    """A term does not have the total order required by the operation."""


class RearrangementError(ValueError):
    """A word cannot be brought into the slot/operand form."""


# ---------------------------------------------------------------------------
# angular integration


def double_factorial(n: int) -> int:
    return 1 if n <= 0 else math.prod(range(n, 0, -2))


def sphere_moment(mu) -> Fraction:
    """int_{S^3} xi^mu dOmega divided by pi^2 (exact)."""
    if any(m % 2 for m in mu):
        return Fraction(0)
    ks = [m // 2 for m in mu]
    K = sum(ks)
    num = 2 * math.prod(double_factorial(2 * k - 1) for k in ks)
    return Fraction(num, 2**K * math.factorial(K + 1))


@dataclass(frozen=True)
class RTerm:
    """coefficient * r^r_power * word, after angular integration."""

    coefficient: Fraction
    r_power: int
    word: tuple

    @property
    def n_b0(self) -> int:
        return sum(1 for a in self.word if isinstance(a, B0))

    def text(self) -> str:
        c = self.coefficient
        sign = "+" if c >= 0 else "-"
        return f"{sign}{abs(c)} r^{self.r_power} " + " ".join(a.text() for a in self.word)


def canonical_rterms(terms) -> list[RTerm]:
    """Merge equal (r_power, canonical word) pairs, drop zeros, sort."""
    acc: dict = {}
    for t in terms:
        key = (t.r_power, canonical_word(t.word))
        acc[key] = acc.get(key, Fraction(0)) + Fraction(t.coefficient)
    out = [RTerm(c, r, w) for (r, w), c in acc.items() if c != 0]
    out.sort(key=lambda t: (-t.r_power, t.text()))
    return out


def angular_integrate(sym: Symbol) -> list[RTerm]:
    """Integrate the xi-dependence over the unit sphere; xi = r * omega.

    The returned coefficient carries the moment divided by pi^2, and the
    r-power includes the r^3 of the volume element.
    """
    out = []
    for t in sym.terms:
        if t.lam:
            raise HomogeneityError("explicit lambda powers are not supported")
        if t.q < 0:
            raise ValueError("negative |xi| powers are not polynomial in the angles")
        mom = sphere_moment(t.xi)
        if mom == 0:
            continue
        out.append(RTerm(coef_real(t.c) * mom, sum(t.xi) + 2 * t.q + 3, t.word))
    return canonical_rterms(out)


def lambda_collapse(terms, normalization: Fraction | int = 1) -> list[RTerm]:
    """Carry out (1/2 pi i) int_C e^{-lambda} (.) d lambda after xi-integration.

    For a symbol homogeneous of order -4 the xi-integral of the contour
    integral equals the xi-integral of d/d lambda evaluated at lambda = -1.
    Differentiating a word replaces one b0 by b0 b0 (Leibniz); afterwards
    b0 means (e^h r^2 + 1)^{-1}.
    """
    norm = Fraction(normalization)
    out = []
    for t in terms:
        if t.r_power != 2 * t.n_b0 - 1:
            raise HomogeneityError(
                f"term {t.text()!r} has r^{t.r_power} with {t.n_b0} resolvents; not of order -4")
        for p, atom in enumerate(t.word):
            if isinstance(atom, B0):
                out.append(RTerm(t.coefficient * norm, t.r_power, t.word[:p] + (B0(),) + t.word[p:]))
    return canonical_rterms(out)


def b2_radial(normalization: Fraction | int = 1) -> list[RTerm]:
    """The engine's b2, angularly integrated and lambda-collapsed."""
    return lambda_collapse(angular_integrate(parametrix(2)), normalization)


# ---------------------------------------------------------------------------
# text form

_DIFF = re.compile(r"^((?:d[1-4])+)\((e\^h|h)\)$")


def parse_atom(tok: str):
    if tok == "b0":
        return B0()
    if tok == "e^h":
        return ExpH(1)
    if tok == "e^-h":
        return ExpH(-1)
    m = re.fullmatch(r"e\^(-?\d+)h", tok)
    if m:
        return ExpH(int(m.group(1)))
    m = _DIFF.match(tok)
    if m:
        ell = [0, 0, 0, 0]
        for d in re.findall(r"d([1-4])", m.group(1)):
            ell[int(d) - 1] += 1
        return DExpH(tuple(ell)) if m.group(2) == "e^h" else DH(tuple(ell))
    raise ValueError(f"unknown atom {tok!r}")


def parse_rterm(line: str) -> RTerm:
    toks = line.split()
    c = Fraction(toks[0])
    m = re.fullmatch(r"r\^(\d+)", toks[1])
    if not m:
        raise ValueError(f"expected r-power in {line!r}")
    return RTerm(c, int(m.group(1)), tuple(parse_atom(t) for t in toks[2:]))


def golden_b2(raw: bool = False) -> list[RTerm]:
    """The reference b2 list (four direction blocks).

    ``raw=True`` returns the lines as transcribed, before canonical merging.
    """
    text = resources.files("nctorus").joinpath("data/golden_b2.txt").read_text()
    terms = [parse_rterm(line) for line in text.splitlines() if line.strip()]
    return terms if raw else canonical_rterms(terms)


def term_direction(t: RTerm) -> int:
    """The single derivation direction occurring in a b2 term."""
    dirs = {i for a in t.word if isinstance(a, (DExpH, DH)) for i in range(4) if a.ell[i]}
    if len(dirs) != 1:
        raise RearrangementError(f"term {t.text()!r} mixes directions {sorted(dirs)}")
    return dirs.pop() + 1


def relabel(t: RTerm, i: int, j: int) -> RTerm:
    """Exchange directions i and j in every derivative atom."""
    def swap(ell):
        ell = list(ell)
        ell[i - 1], ell[j - 1] = ell[j - 1], ell[i - 1]
        return tuple(ell)

    word = tuple(type(a)(swap(a.ell)) if isinstance(a, (DExpH, DH)) else a for a in t.word)
    return RTerm(t.coefficient, t.r_power, word)


def compare_terms(mine, reference) -> list[str]:
    """Term-aligned differences between two canonical lists (empty if equal)."""
    a = {(t.r_power, t.word): t.coefficient for t in canonical_rterms(mine)}
    b = {(t.r_power, t.word): t.coefficient for t in canonical_rterms(reference)}
    out = []
    for key in sorted(set(a) | set(b), key=lambda k: (-k[0], str(k[1]))):
        ca, cb = a.get(key, Fraction(0)), b.get(key, Fraction(0))
        if ca != cb:
            word = " ".join(x.text() for x in key[1])
            out.append(f"r^{key[0]} {word}: engine {ca}, reference {cb}")
    return out


# ---------------------------------------------------------------------------
# rearrangement


@dataclass(frozen=True)
class RearrangedTerm:
    """coefficient * e^{y_power h} * prod_j U_j^{k_j} F_m(U_1..U_l) (rho_1 ... rho_l).

    ``U_j`` is the product of the modular operators acting on rho_1..rho_j.
    """

    coefficient: Fraction
    y_power: int
    m: tuple
    k: tuple
    operands: tuple

    def kernel(self, x, U):
        """x^{|m|-2} (x+1)^{-m0} prod (x U_j + 1)^{-m_j} times prod U_j^{k_j}."""
        out = x ** (sum(self.m) - 2) / (x + 1) ** self.m[0]
        for j in range(1, len(self.m)):
            out = out * U[j - 1] ** self.k[j] / (x * U[j - 1] + 1) ** self.m[j]
        return out


def rearrange(t: RTerm) -> RearrangedTerm:
    """Apply the rearrangement lemma to the r-integral of one collapsed term.

    With y = e^h acting on the left, int_0^infty r^p prod_j (y U_j)^{k_j}
    (y U_j r^2 + 1)^{-m_j} dr = (1/2) y^{sum k - (|m|-1)} prod U_j^{k_j} F_m(U)
    provided p = 2|m| - 3 (substitute x = y r^2).
    """
    ks, ms, ops = [0], [0], []
    for atom in canonical_word(t.word):
        if isinstance(atom, ExpH):
            ks[-1] += atom.k
        elif isinstance(atom, B0):
            ms[-1] += 1
        else:
            ops.append(atom)
            ks.append(0)
            ms.append(0)
    total = sum(ms)
    if ms[0] < 1 or total < 2:
        raise RearrangementError(f"{t.text()!r}: need a leading resolvent and |m| >= 2")
    if t.r_power != 2 * total - 3:
        raise RearrangementError(f"{t.text()!r}: r^{t.r_power} does not match |m| = {total}")
    return RearrangedTerm(t.coefficient / 2, sum(ks) - (total - 1), tuple(ms), tuple(ks), tuple(ops))


def F_m_eval(m, u, epsabs: float = 1e-12) -> float:
    """F_m(u) = int_0^infty x^{|m|-2} (x+1)^{-m0} prod_j (x prod_{i<=j} u_i + 1)^{-m_j} dx."""
    m = tuple(int(v) for v in m)
    u = np.asarray(u, dtype=float).ravel()
    if len(u) != len(m) - 1:
        raise ValueError("need one modular argument per operand")
    if sum(m) < 2 or any(v < 0 for v in m) or m[0] < 1:
        raise ValueError(f"F_m diverges for m = {m}")
    if np.any(u <= 0):
        raise ValueError("modular arguments must be positive")
    U = np.cumprod(u)
    rt = RearrangedTerm(Fraction(1), 0, m, (0,) * len(m), ())

    def f(v):
        x = math.tan(math.pi * v / 2)
        return rt.kernel(x, U) * (math.pi / 2) * (1 + x * x)

    val, _ = integrate.quad(f, 0.0, 1.0, epsabs=epsabs, epsrel=1e-12, limit=400)
    return val


# ---------------------------------------------------------------------------
# g-substitution


def g1(s):
    """g1(e^s) = (e^s - 1)/s."""
    return phi1(s)


def g2(s, t):
    """g2(e^s, e^t) = exp[0, s, s + t]."""
    s = np.asarray(s, dtype=float)
    return dd2_zero(s, s + np.asarray(t, dtype=float))


@dataclass(frozen=True)
class ModularTerm:
    """One contribution e^{-h} c f(s[, t]) (delta_i^2 h) or (delta_i h delta_i h).

    ``kind`` is 'K' (single operand delta_i^2 h) or 'H' (two operands);
    ``source`` records which substitution produced it: 'g1' from the first
    part of delta^2(e^h), 'g2' from its second part, 'g1g1' from a product of
    two first derivatives.
    """

    term: RearrangedTerm
    source: str
    direction: int

    @property
    def kind(self) -> str:
        return "K" if self.source == "g1" else "H"

    def integrand(self, x, s, t=None):
        rt = self.term
        if self.source == "g1":
            u = np.exp(s)
            return float(rt.coefficient) * rt.kernel(x, [u]) * g1(s)
        if self.source == "g2":
            u = np.exp(s + t)
            return float(rt.coefficient) * rt.kernel(x, [u]) * 2 * g2(s, t)
        u1 = np.exp(s)
        u2 = np.exp(s + t)
        # the e^h of the second operand passes the first one: factor U_1
        return float(rt.coefficient) * rt.kernel(x, [u1, u2]) * g1(s) * u1 * g1(t)


def g_substitute(rt: RearrangedTerm) -> list[ModularTerm]:
    """Rewrite delta(e^h) = e^h g1(Delta)(delta h) and
    delta^2(e^h) = e^h [g1(Delta)(delta^2 h) + 2 g2(Delta_(1), Delta_(2))(delta h delta h)].

    Each operand contributes one factor of e^h; the total power of e^h must
    come out as -1.
    """
    ops = rt.operands
    if not all(isinstance(a, DExpH) for a in ops):
        raise RearrangementError("operands must be derivatives of e^h")
    if any(sum(a.ell) > 2 for a in ops):
        raise RearrangementError("derivatives of order > 2 are not supported")
    if rt.y_power + len(ops) != -1:
        raise RearrangementError(f"e^h powers do not balance: {rt.y_power + len(ops)}")
    dirs = {i for a in ops for i in range(4) if a.ell[i]}
    if len(dirs) != 1:
        raise RearrangementError("mixed directions")
    d = dirs.pop() + 1
    if len(ops) == 1 and sum(ops[0].ell) == 2:
        return [ModularTerm(rt, "g1", d), ModularTerm(rt, "g2", d)]
    if len(ops) == 2 and all(sum(a.ell) == 1 for a in ops):
        return [ModularTerm(rt, "g1g1", d)]
    raise RearrangementError("unexpected operand pattern for a second-order coefficient")


def modular_terms(terms) -> list[ModularTerm]:
    out = []
    for t in terms:
        out.extend(g_substitute(rearrange(t)))
    return out


# ---------------------------------------------------------------------------
# numerical assembly


@dataclass
class ModularFunctionGrid:
    """K sampled on ``s``; H sampled on ``s`` x ``t`` (rows follow ``s``)."""

    s: np.ndarray
    K: np.ndarray
    t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    H: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    normalization: float = 1.0
    epsabs: float = 1e-12

    def to_csv(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        pk, ph = out_dir / "K.csv", out_dir / "H.csv"
        with open(pk, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "value"])
            for s, v in zip(self.s, self.K):
                w.writerow([repr(float(s)), repr(float(v))])
        with open(ph, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "t", "value"])
            for i, s in enumerate(self.s):
                for j, t in enumerate(self.t):
                    w.writerow([repr(float(s)), repr(float(t)), repr(float(self.H[i, j]))])
        return pk, ph


def _integrate_grid(terms, s, t=None, epsabs=1e-12):
    """int_0^infty of the summed integrand, vectorized over the grid points."""

    def f(v):
        x = math.tan(math.pi * v / 2)
        jac = (math.pi / 2) * (1 + x * x)
        acc = 0.0
        for mt in terms:
            acc = acc + mt.integrand(x, s, t)
        return acc * jac

    val, _ = integrate.quad_vec(f, 0.0, 1.0, epsabs=epsabs, epsrel=1e-13, norm="max", limit=2000)
    return val


def _block_terms(terms, direction=1):
    """Modular terms of one direction, after checking all four blocks agree."""
    by_dir: dict = {}
    for t in terms:
        by_dir.setdefault(term_direction(t), []).append(t)
    if sorted(by_dir) != [1, 2, 3, 4]:
        raise HomogeneityError(f"incomplete term set: directions {sorted(by_dir)}")
    ref = canonical_rterms(by_dir[direction])
    for i, block in by_dir.items():
        if canonical_rterms(relabel(t, i, direction) for t in block) != ref:
            raise HomogeneityError(f"direction block {i} differs from block {direction}")
    return modular_terms(ref)


def pinned_normalization(terms=None) -> Fraction:
    """The constant c making c * K_raw(0) = 1/2 (commutative limit)."""
    terms = b2_radial() if terms is None else terms
    mts = [m for m in _block_terms(terms) if m.kind == "K"]
    raw = sum(Fraction(m.term.coefficient) * _F_at_one(m.term) for m in mts)
    if raw == 0:
        raise HomogeneityError("K(0) vanishes; cannot pin the normalization")
    return Fraction(1, 2) / raw


def _F_at_one(rt: RearrangedTerm) -> Fraction:
    # all modular variables equal to 1: F_m = 1/(|m| - 1), g1(0) = 1
    return Fraction(1, sum(rt.m) - 1)


def assemble_KH(s_grid, t_grid=None, terms=None, normalization=None,
                epsabs: float = 1e-12) -> ModularFunctionGrid:
    """Numerical K(s) on ``s_grid`` and H(s, t) on ``s_grid`` x ``t_grid``.

    ``terms`` defaults to the engine's b2; ``normalization`` defaults to the
    pinned constant.
    """
    terms = b2_radial() if terms is None else terms
    norm = pinned_normalization(terms) if normalization is None else Fraction(normalization)
    mts = _block_terms(terms)
    s = np.asarray(s_grid, dtype=float)
    kt = [m for m in mts if m.kind == "K"]
    ht = [m for m in mts if m.kind == "H"]
    K = float(norm) * _integrate_grid(kt, s, epsabs=epsabs)
    grid = ModularFunctionGrid(s=s, K=K, normalization=float(norm), epsabs=epsabs)
    if t_grid is not None:
        t = np.asarray(t_grid, dtype=float)
        S, T = np.meshgrid(s, t, indexing="ij")
        H = float(norm) * _integrate_grid(ht, S.ravel(), T.ravel(), epsabs=epsabs)
        grid.t = t
        grid.H = H.reshape(S.shape)
    return grid
