"""Noncommutative residue of classical symbols and its Dixmier-trace normalization."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .algebra import DIM, FourierElement, delta_multi, theta_matrix
from .heat_kernel import sphere_moment
from .spectral import dixmier_estimate, lattice_stream
from .symbols import multi_indices


@dataclass(frozen=True)
class SymbolMonomial:
    """a * xi^mu * |xi|^(2 q); positively homogeneous of degree |mu| + 2 q."""

    coeff: FourierElement
    mu: tuple
    q: int = 0

    @property
    def degree(self) -> int:
        return sum(self.mu) + 2 * self.q


class ClassicalSymbol:
    """Finite sum of homogeneous monomials with element-valued coefficients.

    Monomials with the same (mu, q) are merged; their degrees give the
    homogeneous components.
    """

    def __init__(self, monomials=(), theta=None):
        acc: dict = {}
        th = theta
        for m in monomials:
            th = m.coeff.theta if th is None else th
            key = (tuple(m.mu), m.q)
            acc[key] = acc[key] + m.coeff if key in acc else m.coeff
        self.theta = theta_matrix(None) if th is None else th
        self.monomials = tuple(SymbolMonomial(c, mu, q) for (mu, q), c in sorted(acc.items())
                               if c.norm() > 0)

    @property
    def degrees(self) -> list[int]:
        return sorted({m.degree for m in self.monomials}, reverse=True)

    @property
    def order(self) -> int:
        return max(self.degrees, default=-10**9)

    def component(self, degree: int) -> "ClassicalSymbol":
        return ClassicalSymbol([m for m in self.monomials if m.degree == degree], self.theta)

    def __add__(self, other):
        return ClassicalSymbol(self.monomials + other.monomials, self.theta)

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "ClassicalSymbol":
        return ClassicalSymbol([SymbolMonomial(m.coeff * c, m.mu, m.q) for m in self.monomials], self.theta)

    def truncate(self, min_degree: int) -> "ClassicalSymbol":
        return ClassicalSymbol([m for m in self.monomials if m.degree >= min_degree], self.theta)

    def __repr__(self):
        return f"ClassicalSymbol(degrees={self.degrees}, {len(self.monomials)} monomials)"


def xi_power(mu, coeff: FourierElement, q: int = 0) -> ClassicalSymbol:
    return ClassicalSymbol([SymbolMonomial(coeff, tuple(mu), q)], coeff.theta)


def d_xi(j: int, rho: ClassicalSymbol) -> ClassicalSymbol:
    """d/d xi_j, using d_j |xi|^(2q) = 2 q xi_j |xi|^(2q-2)."""
    out = []
    for m in rho.monomials:
        if m.mu[j - 1]:
            mu = list(m.mu)
            mu[j - 1] -= 1
            out.append(SymbolMonomial(m.coeff * m.mu[j - 1], tuple(mu), m.q))
        if m.q:
            mu = list(m.mu)
            mu[j - 1] += 1
            out.append(SymbolMonomial(m.coeff * (2 * m.q), tuple(mu), m.q - 1))
    return ClassicalSymbol(out, rho.theta)


def d_delta(ell, rho: ClassicalSymbol) -> ClassicalSymbol:
    """delta^ell applied to the coefficients."""
    return ClassicalSymbol([SymbolMonomial(delta_multi(ell, m.coeff), m.mu, m.q) for m in rho.monomials],
                           rho.theta)


def _d_xi_multi(ell, rho):
    for j, n in enumerate(ell, start=1):
        for _ in range(n):
            rho = d_xi(j, rho)
    return rho


def _product(a: ClassicalSymbol, b: ClassicalSymbol) -> ClassicalSymbol:
    out = []
    for x, y in itertools.product(a.monomials, b.monomials):
        out.append(SymbolMonomial(x.coeff * y.coeff, tuple(p + r for p, r in zip(x.mu, y.mu)), x.q + y.q))
    return ClassicalSymbol(out, a.theta)


def compose(rho: ClassicalSymbol, rho2: ClassicalSymbol, min_degree: int = -4) -> ClassicalSymbol:
    """sum_l (1/l!) d_xi^l(rho) delta^l(rho2), keeping degrees >= min_degree."""
    top = rho.order + rho2.order
    out = ClassicalSymbol([], rho.theta)
    for n in range(0, max(top - min_degree, -1) + 1):
        for ell in multi_indices(n):
            a = _d_xi_multi(ell, rho)
            if not a.monomials:
                continue
            b = d_delta(ell, rho2)
            if not b.monomials:
                continue
            w = 1.0 / math.prod(math.factorial(k) for k in ell)
            out = out + _product(a, b).scale(w)
    return out.truncate(min_degree)


def nc_residue(rho: ClassicalSymbol) -> complex:
    """int_{S^3} phi0(rho_{-4}) dOmega, using the exact sphere moments."""
    total = 0j
    for m in rho.monomials:
        if m.degree != -4:
            continue
        mom = sphere_moment(m.mu)
        if mom:
            total += m.coeff.phi0() * float(mom)
    return total * math.pi**2


def trace_property_check(rho: ClassicalSymbol, rho2: ClassicalSymbol) -> float:
    """|res(P_rho P_rho2 - P_rho2 P_rho)|."""
    if rho.order + rho2.order < -4:
        return 0.0
    c = compose(rho, rho2, -4) - compose(rho2, rho, -4)
    return abs(nc_residue(c))


def inverse_square_laplacian_symbol(theta=None, terms: int = 3) -> ClassicalSymbol:
    """Classical expansion of (1 + |xi|^2)^{-2} = sum_k (-1)^k (k+1) |xi|^{-4-2k}."""
    one = FourierElement.scalar(1.0, theta)
    return ClassicalSymbol([SymbolMonomial(one * ((-1) ** k * (k + 1)), (0, 0, 0, 0), -2 - k)
                            for k in range(terms)], one.theta)


def random_classical(rng: np.random.Generator, theta, degrees=(-2, -3), radius: int = 1,
                     n_terms: int = 3, scale: float = 1.0) -> ClassicalSymbol:
    """Random symbol with one or more monomials per requested degree.

    Coefficients are random elements supported on |alpha_i| <= radius; the
    xi-dependence is xi^mu |xi|^(2q) with |mu| <= 2 and q fixed by the degree.
    """
    mons = []
    modes = list(itertools.product(range(-radius, radius + 1), repeat=DIM))
    for deg in degrees:
        for _ in range(n_terms):
            k = int(rng.choice([x for x in (0, 1, 2) if (deg - x) % 2 == 0]))
            mu = [0] * DIM
            for _ in range(k):
                mu[int(rng.integers(0, DIM))] += 1
            q = (deg - k) // 2
            coeffs = {}
            for idx in rng.choice(len(modes), size=4, replace=False):
                coeffs[modes[idx]] = scale * complex(rng.normal(), rng.normal())
            mons.append(SymbolMonomial(FourierElement(coeffs, theta), tuple(mu), q))
    return ClassicalSymbol(mons, theta)


@dataclass
class DixmierResidueReport:
    res: float
    dixmier: float
    n_terms: int
    drift: float
    theta_rational: bool

    @property
    def ratio(self) -> float:
        """Dixmier estimate over res/4 (1 when the normalization holds)."""
        return self.dixmier / (self.res / 4)

    def to_dict(self) -> dict:
        return {"res": self.res, "dixmier": self.dixmier, "ratio": self.ratio,
                "n_terms": self.n_terms, "drift": self.drift, "theta_rational": self.theta_rational}


def _looks_rational(theta, max_den: int = 1000) -> bool:
    vals = np.asarray(theta, dtype=float).ravel()
    return all(abs(float(Fraction(v).limit_denominator(max_den)) - v) < 1e-12 for v in vals)


def dixmier_vs_residue(n_terms: int = 100_000, scale: float = 1.0, theta=None,
                       extra_stream=None) -> DixmierResidueReport:
    """Compare the Dixmier estimate of scale * (1 + flat Laplacian)^{-2} with res/4.

    The eigenvalues are the lattice values scale * (1 + |alpha|^2)^{-2};
    ``extra_stream`` (same length) adds a perturbation to the eigenvalue stream,
    e.g. a trace-class one, re-sorted before estimation.
    """
    th = theta_matrix(theta)
    sym = inverse_square_laplacian_symbol(th).scale(scale)
    res = nc_residue(sym).real
    mu = scale * lattice_stream(n_terms)
    if extra_stream is not None:
        mu = np.sort(mu + np.asarray(extra_stream, dtype=float))[::-1]
    est = dixmier_estimate(mu)
    return DixmierResidueReport(res, est.value, n_terms, est.drift, _looks_rational(th))
