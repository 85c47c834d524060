"""Operator-valued symbol calculus with noncommuting coefficient words.

A symbol is a finite sum of terms ``c * xi^mu * |xi|^(2q) * lambda^p * w`` where
``w`` is an ordered word of atoms: powers ``e^{kh}``, derivatives
``delta^l(e^h)`` and ``delta^l(h)``, the resolvent ``b0 = (e^h |xi|^2 - lambda)^{-1}``
and named generic elements.  Coefficients are exact Gaussian rationals.

Composition and adjoints follow the usual asymptotic expansions
``sum_l (1/l!) d_xi^l(rho) delta^l(rho')`` and
``sum_l (1/l!) d_xi^l delta^l(rho^*)``, truncated at a requested order.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from sympy.polys.domains import QQ_I

from .algebra import DIM, FourierElement, delta_multi

ZERO4 = (0, 0, 0, 0)


def unit(i: int) -> tuple[int, int, int, int]:
    """Multi-index e_i for i in 1..4."""
    e = [0, 0, 0, 0]
    e[i - 1] = 1
    return tuple(e)


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def coef(x):
    """Coerce ints, Fractions, strings like '5/2' or complex to a Gaussian rational."""
    if isinstance(x, type(QQ_I(0))):
        return x
    if isinstance(x, complex):
        return QQ_I(Fraction(x.real).limit_denominator(10**12), Fraction(x.imag).limit_denominator(10**12))
    if isinstance(x, str):
        x = Fraction(x)
    if isinstance(x, Fraction):
        return QQ_I(x.numerator, 0) / QQ_I(x.denominator, 0)
    return QQ_I(x, 0)


def coef_str(c) -> str:
    """'+4', '-16', '+5/2' or '+(1/2+3i)' in the text format."""
    re, im = Fraction(int(c.x.numerator), int(c.x.denominator)), Fraction(int(c.y.numerator), int(c.y.denominator))
    if im == 0:
        return f"{'+' if re >= 0 else '-'}{abs(re)}"
    return f"+({re}{'+' if im >= 0 else '-'}{abs(im)}i)"


def coef_real(c) -> Fraction:
    if c.y != 0:
        raise ValueError(f"coefficient {c} is not real")
    return Fraction(int(c.x.numerator), int(c.x.denominator))


# ---------------------------------------------------------------------------
# atoms


@dataclass(frozen=True, order=True)
class ExpH:
    """e^{k h}."""

    k: int

    def text(self):
        if self.k == 1:
            return "e^h"
        if self.k == -1:
            return "e^-h"
        return f"e^{self.k}h"


@dataclass(frozen=True, order=True)
class DExpH:
    """delta^l(e^h), |l| >= 1."""

    ell: tuple

    def text(self):
        return _dtext(self.ell) + "(e^h)"


@dataclass(frozen=True, order=True)
class DH:
    """delta^l(h), |l| >= 1."""

    ell: tuple

    def text(self):
        return _dtext(self.ell) + "(h)"


@dataclass(frozen=True, order=True)
class B0:
    """The leading parametrix symbol (e^h |xi|^2 - lambda)^{-1}."""

    def text(self):
        return "b0"


@dataclass(frozen=True, order=True)
class Elem:
    """delta^l of a named coefficient element (or of its adjoint)."""

    name: str
    ell: tuple = ZERO4
    starred: bool = False
    selfadjoint: bool = False

    def text(self):
        base = self.name + ("*" if self.starred else "")
        return base if sum(self.ell) == 0 else f"{_dtext(self.ell)}({base})"


def _dtext(ell) -> str:
    return "".join(f"d{i + 1}" * n for i, n in enumerate(ell))


def commutes_with_b0(atom) -> bool:
    return isinstance(atom, (ExpH, B0))


def _sort_key(atom):
    order = {ExpH: 0, B0: 1, DExpH: 2, DH: 3, Elem: 4}
    return (order[type(atom)], atom)


def star_atom(atom):
    """Return (sign, atom*).  delta_j(a^*) = -delta_j(a)^*; b0 taken at real lambda."""
    if isinstance(atom, (ExpH, B0)):
        return 1, atom
    if isinstance(atom, (DExpH, DH)):
        return (-1) ** sum(atom.ell), atom
    sign = (-1) ** sum(atom.ell)
    if atom.selfadjoint:
        return sign, atom
    return sign, Elem(atom.name, atom.ell, not atom.starred, False)


# ---------------------------------------------------------------------------
# terms and symbols


@dataclass(frozen=True)
class SymbolTerm:
    """c * xi^xi * |xi|^(2 q) * lambda^lam * word."""

    c: object
    xi: tuple = ZERO4
    q: int = 0
    word: tuple = ()
    lam: int = 0

    @property
    def key(self):
        return (self.xi, self.q, self.lam, self.word)

    @property
    def n_b0(self) -> int:
        return sum(1 for a in self.word if isinstance(a, B0))

    @property
    def order(self) -> int:
        """|xi-degree| + 2 lambda-degree - 2 (#b0); lambda counts as order 2."""
        return sum(self.xi) + 2 * self.q + 2 * self.lam - 2 * self.n_b0

    def with_(self, **kw) -> "SymbolTerm":
        d = dict(c=self.c, xi=self.xi, q=self.q, word=self.word, lam=self.lam)
        d.update(kw)
        return SymbolTerm(**d)

    def text(self) -> str:
        parts = [coef_str(self.c)]
        if any(self.xi):
            parts.append("xi^[" + ",".join(map(str, self.xi)) + "]")
        if self.q:
            parts.append(f"|xi|^{2 * self.q}")
        if self.lam:
            parts.append(f"lambda^{self.lam}")
        parts.extend(a.text() for a in self.word)
        return " ".join(parts)


def canonical_word(word: tuple) -> tuple:
    """Inside maximal runs of mutually commuting atoms (e^{kh} and b0) move the
    exponentials left and merge them; drop e^{0h}."""
    out = []
    run_k, run_b = 0, 0
    for atom in word + (None,):
        if atom is not None and commutes_with_b0(atom):
            if isinstance(atom, ExpH):
                run_k += atom.k
            else:
                run_b += 1
            continue
        if run_k:
            out.append(ExpH(run_k))
        out.extend([B0()] * run_b)
        run_k = run_b = 0
        if atom is not None:
            out.append(atom)
    return tuple(out)


class Symbol:
    """Canonical sum of SymbolTerms, merged on (xi, q, lambda, word)."""

    def __init__(self, terms=(), order: int | None = None, canonical_words: bool = True):
        acc: dict = {}
        for t in terms:
            c = coef(t.c)
            if not c:
                continue
            word = canonical_word(t.word) if canonical_words else t.word
            key = (t.xi, t.q, t.lam, word)
            acc[key] = acc.get(key, QQ_I(0, 0)) + c
        self.terms: tuple[SymbolTerm, ...] = tuple(
            SymbolTerm(c, xi, q, w, lam)
            for (xi, q, lam, w), c in sorted(acc.items(), key=lambda kv: _term_sort(kv[0]))
            if c
        )
        top = max((t.order for t in self.terms), default=None)
        if order is not None and top is not None and top > order:
            raise ValueError(f"term of order {top} exceeds declared order {order}")
        self.order = order if order is not None else (top if top is not None else -10**9)

    def __iter__(self):
        return iter(self.terms)

    def __len__(self):
        return len(self.terms)

    def __eq__(self, other):
        return isinstance(other, Symbol) and self.terms == other.terms

    def __add__(self, other: "Symbol") -> "Symbol":
        return Symbol(self.terms + other.terms)

    def __neg__(self):
        return Symbol(t.with_(c=-coef(t.c)) for t in self.terms)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "Symbol":
        c = coef(c)
        return Symbol(t.with_(c=c * coef(t.c)) for t in self.terms)

    def __mul__(self, other: "Symbol") -> "Symbol":
        """Pointwise product of symbols (not operator composition)."""
        return Symbol(_mul_terms(s, t) for s in self.terms for t in other.terms)

    def homogeneous(self, order: int) -> "Symbol":
        return Symbol(t for t in self.terms if t.order == order)

    def truncate(self, cutoff: int) -> "Symbol":
        return Symbol(t for t in self.terms if t.order >= cutoff)

    def is_zero(self) -> bool:
        return not self.terms

    def expand_radial(self) -> "Symbol":
        """Replace every |xi|^(2q), q > 0, by explicit monomials."""
        out = []
        for t in self.terms:
            if t.q <= 0:
                out.append(t)
                continue
            for combo in itertools.product(range(DIM), repeat=t.q):
                xi = list(t.xi)
                for k in combo:
                    xi[k] += 2
                out.append(t.with_(xi=tuple(xi), q=0))
        return Symbol(out)

    def substitute_flat(self) -> "Symbol":
        """h = 0: e^{kh} -> 1 and every delta-derivative of e^h or h -> 0."""
        out = []
        for t in self.terms:
            if any(isinstance(a, (DExpH, DH)) for a in t.word):
                continue
            out.append(t.with_(word=tuple(a for a in t.word if not isinstance(a, ExpH))))
        return Symbol(out)

    def text(self) -> str:
        return "\n".join(t.text() for t in self.terms)

    def __repr__(self):
        return f"Symbol(order={self.order}, {len(self.terms)} terms)"


def _term_sort(key):
    xi, q, lam, word = key
    return (-(sum(xi) + 2 * q + 2 * lam), xi, q, lam, len(word), tuple(_sort_key(a) for a in word))


def _mul_terms(s: SymbolTerm, t: SymbolTerm) -> SymbolTerm:
    return SymbolTerm(coef(s.c) * coef(t.c), _add(s.xi, t.xi), s.q + t.q, s.word + t.word, s.lam + t.lam)


def term(c, word=(), xi=ZERO4, q=0, lam=0) -> SymbolTerm:
    return SymbolTerm(coef(c), tuple(xi), q, tuple(word), lam)


def constant(c=1) -> Symbol:
    return Symbol([term(c)])


# ---------------------------------------------------------------------------
# derivatives


def partial_xi(j: int, t: SymbolTerm) -> list[SymbolTerm]:
    """d/d xi_j of a term.  Uses d_j b0 = -2 xi_j b0 e^h b0."""
    out = []
    c = coef(t.c)
    mu = t.xi[j - 1]
    if mu:
        xi = list(t.xi)
        xi[j - 1] -= 1
        out.append(t.with_(c=c * mu, xi=tuple(xi)))
    if t.q:
        out.append(t.with_(c=c * (2 * t.q), xi=_add(t.xi, unit(j)), q=t.q - 1))
    for p, atom in enumerate(t.word):
        if isinstance(atom, B0):
            word = t.word[:p] + (B0(), ExpH(1), B0()) + t.word[p + 1:]
            out.append(t.with_(c=c * (-2), xi=_add(t.xi, unit(j)), word=word))
    return out


def _delta_atom(i: int, atom) -> list[tuple[int, int, tuple]]:
    """delta_i of one atom as a list of (coefficient, extra |xi|^2 power, word)."""
    e = unit(i)
    if isinstance(atom, ExpH):
        k = atom.k
        if k == 0:
            return []
        if k > 0:
            # Leibniz over e^h ... e^h (k factors)
            return [
                (1, 0, tuple(a for a in (ExpH(j), DExpH(e), ExpH(k - 1 - j)) if not (isinstance(a, ExpH) and a.k == 0)))
                for j in range(k)
            ]
        # delta(e^{-h}) = -e^{-h} delta(e^h) e^{-h}, then Leibniz over |k| factors
        n = -k
        out = []
        for j in range(n):
            left = ExpH(-(j + 1))
            right = ExpH(-(n - j))
            out.append((-1, 0, (left, DExpH(e), right)))
        return out
    if isinstance(atom, DExpH):
        return [(1, 0, (DExpH(_add(atom.ell, e)),))]
    if isinstance(atom, DH):
        return [(1, 0, (DH(_add(atom.ell, e)),))]
    if isinstance(atom, B0):
        # delta_i(b0) = -b0 delta_i(e^h) |xi|^2 b0
        return [(-1, 1, (B0(), DExpH(e), B0()))]
    if isinstance(atom, Elem):
        return [(1, 0, (Elem(atom.name, _add(atom.ell, e), atom.starred, atom.selfadjoint),))]
    raise TypeError(atom)


def delta_deriv(i: int, t: SymbolTerm) -> list[SymbolTerm]:
    """delta_i of a term by the Leibniz rule over its word."""
    out = []
    c = coef(t.c)
    for p, atom in enumerate(t.word):
        for s, dq, w in _delta_atom(i, atom):
            out.append(t.with_(c=c * s, q=t.q + dq, word=t.word[:p] + w + t.word[p + 1:]))
    return out


def _apply_multi(fn, ell, sym: Symbol) -> Symbol:
    terms = list(sym.terms)
    for i, n in enumerate(ell, start=1):
        for _ in range(n):
            terms = [u for t in terms for u in fn(i, t)]
    return Symbol(terms)


def d_xi(ell, sym: Symbol) -> Symbol:
    return _apply_multi(partial_xi, ell, sym)


def d_delta(ell, sym: Symbol) -> Symbol:
    return _apply_multi(delta_deriv, ell, sym)


def multi_indices(n: int):
    """All l in Z_{>=0}^4 with |l| = n."""
    for cut in itertools.combinations(range(n + DIM - 1), DIM - 1):
        prev = -1
        out = []
        for c in cut + (n + DIM - 1,):
            out.append(c - prev - 1)
            prev = c
        yield tuple(out)


def _fact(ell) -> int:
    return math.prod(math.factorial(x) for x in ell)


# ---------------------------------------------------------------------------
# calculus


def compose(rho: Symbol, rho2: Symbol, order_cutoff: int) -> Symbol:
    """Symbol of P_rho P_rho2, keeping every term of order >= order_cutoff."""
    top = rho.order + rho2.order
    if order_cutoff > top:
        raise ValueError(f"cutoff {order_cutoff} above the product order {top}")
    out = []
    for n in range(0, top - order_cutoff + 1):
        for ell in multi_indices(n):
            a = d_xi(ell, rho)
            if a.is_zero():
                continue
            b = d_delta(ell, rho2)
            if b.is_zero():
                continue
            out.extend((a * b).scale(Fraction(1, _fact(ell))).terms)
    return Symbol(out).truncate(order_cutoff)


def star_symbol(rho: Symbol) -> Symbol:
    """Pointwise adjoint rho(xi)^* (xi real)."""
    out = []
    for t in rho.terms:
        sign = 1
        word = []
        for atom in reversed(t.word):
            s, a = star_atom(atom)
            sign *= s
            word.append(a)
        c = coef(t.c)
        out.append(t.with_(c=QQ_I(c.x, -c.y) * sign, word=tuple(word)))
    return Symbol(out)


def adjoint(rho: Symbol, order_cutoff: int) -> Symbol:
    """Symbol of the formal adjoint (phi0 inner product) of P_rho."""
    rs = star_symbol(rho)
    out = []
    for n in range(0, rho.order - order_cutoff + 1):
        for ell in multi_indices(n):
            s = d_xi(ell, d_delta(ell, rs))
            out.extend(s.scale(Fraction(1, _fact(ell))).terms)
    return Symbol(out, order=rho.order).truncate(order_cutoff)


def laplacian_parts(kind: str = "perturbed") -> tuple[Symbol, Symbol, Symbol]:
    """(a2, a1, a0) of the flat or conformally perturbed Laplacian."""
    if kind == "flat":
        a2 = Symbol([term(1, xi=_add(unit(i), unit(i))) for i in range(1, 5)])
        return a2, Symbol([]), Symbol([])
    if kind != "perturbed":
        raise ValueError(f"unknown Laplacian kind {kind!r}")
    a2 = Symbol([term(1, (ExpH(1),), xi=_add(unit(i), unit(i))) for i in range(1, 5)])
    a1 = Symbol([term(1, (DExpH(unit(i)),), xi=unit(i)) for i in range(1, 5)])
    a0 = Symbol(
        [term(1, (DExpH(_add(unit(i), unit(i))),)) for i in range(1, 5)]
        + [term(-1, (DExpH(unit(i)), ExpH(-1), DExpH(unit(i)))) for i in range(1, 5)]
    )
    return a2, a1, a0


def symbol_of_laplacian(kind: str = "perturbed") -> Symbol:
    a2, a1, a0 = laplacian_parts(kind)
    return a2 + a1 + a0


def _radial_a2() -> Symbol:
    # e^h |xi|^2: same function as a2, written with the radial power so that
    # delta-derivatives produce the |xi|^2 factors of the resolvent rule
    return Symbol([term(1, (ExpH(1),), q=1)])


def parametrix(n: int) -> Symbol:
    """b_n of the resolvent parametrix of the perturbed Laplacian, n in 0..2.

    b_n = - sum (1/l!) d_xi^l(b_j) delta^l(a_k) b0 over j < n, k in {0,1,2}
    with 2 + j + |l| - k = n.
    """
    if not 0 <= n <= 2:
        raise ValueError("parametrix terms are available for n = 0, 1, 2 only")
    return _parametrix_cache()[n]


_CACHE: dict = {}


def _parametrix_cache():
    if "b" in _CACHE:
        return _CACHE["b"]
    _, a1, a0 = laplacian_parts("perturbed")
    a = {0: a0, 1: a1, 2: _radial_a2()}
    b0 = Symbol([term(1, (B0(),))])
    bs = [b0]
    for n in (1, 2):
        acc = []
        for j in range(n):
            for k in (0, 1, 2):
                size = n - 2 - j + k
                if size < 0 or (k == 2 and size == 0):
                    continue
                for ell in multi_indices(size):
                    left = d_xi(ell, bs[j])
                    right = d_delta(ell, a[k])
                    if left.is_zero() or right.is_zero():
                        continue
                    prod = (left * right) * b0
                    acc.extend(prod.scale(Fraction(-1, _fact(ell))).terms)
        bs.append(Symbol(acc, order=-2 - n))
    _CACHE["b"] = bs
    return bs


# ---------------------------------------------------------------------------
# numeric realization of differential symbols


class Realization:
    """Numeric values for atoms: e^{kh} powers, derivatives, named elements.

    ``exp_h`` is whatever element stands for e^h (it need not be an actual
    exponential for purely algebraic identities); ``exp_mh`` is required only
    when negative powers occur.
    """

    def __init__(self, exp_h: FourierElement, h: FourierElement | None = None,
                 exp_mh: FourierElement | None = None, elements: dict | None = None):
        self.exp_h = exp_h
        self.exp_mh = exp_mh
        self.h = h
        self.elements = dict(elements or {})
        self.theta = exp_h.theta

    def atom(self, a) -> FourierElement:
        if isinstance(a, ExpH):
            if a.k >= 0:
                return self.exp_h ** a.k
            if self.exp_mh is None:
                raise ValueError("negative exponent needs exp_mh")
            return self.exp_mh ** (-a.k)
        if isinstance(a, DExpH):
            return delta_multi(a.ell, self.exp_h)
        if isinstance(a, DH):
            if self.h is None:
                raise ValueError("delta^l(h) needs h")
            return delta_multi(a.ell, self.h)
        if isinstance(a, Elem):
            base = self.elements[a.name]
            if a.starred:
                base = base.star()
            return delta_multi(a.ell, base)
        raise ValueError("b0 has no polynomial realization")

    def word(self, w: tuple) -> FourierElement:
        out = FourierElement.scalar(1.0, self.theta)
        for a in w:
            out = out * self.atom(a)
        return out


def _complex(c) -> complex:
    return complex(float(Fraction(int(c.x.numerator), int(c.x.denominator))),
                   float(Fraction(int(c.y.numerator), int(c.y.denominator))))


def _polynomial_parts(rho: Symbol, real: Realization):
    """Group a differential symbol as {xi-multi-index: coefficient element}."""
    parts: dict = {}
    for t in rho.expand_radial().terms:
        if t.n_b0 or t.lam or t.q < 0:
            raise ValueError("apply_symbol needs a polynomial (differential) symbol")
        el = real.word(t.word) * _complex(t.c)
        parts[t.xi] = parts.get(t.xi, FourierElement({}, real.theta)) + el
    return parts


def apply_symbol(rho: Symbol, u: FourierElement, real: Realization) -> FourierElement:
    """P_rho(u) = sum_l a_l delta^l(u) for rho = sum_l a_l xi^l."""
    out = FourierElement({}, real.theta)
    for ell, a in _polynomial_parts(rho, real).items():
        out = out + a * delta_multi(ell, u)
    return out


def symbol_matrix(rho: Symbol, box, real: Realization):
    """Compressed matrix of P_rho on a truncation box."""
    M = np.zeros((box.dim, box.dim), dtype=complex)
    for ell, a in _polynomial_parts(rho, real).items():
        d = np.prod([box.basis[:, k].astype(float) ** ell[k] for k in range(DIM)], axis=0)
        M += box.left_matrix(a) * d[None, :]
    return M
