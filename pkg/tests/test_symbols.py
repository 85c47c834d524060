from fractions import Fraction

import numpy as np
import pytest

from nctorus.algebra import FourierElement, TruncationBox, exp_element, random_selfadjoint, theta_matrix
from nctorus.symbols import (B0, DExpH, Elem, ExpH, Realization, Symbol, adjoint, canonical_word, coef,
                             coef_real, compose, d_xi, laplacian_parts, parametrix, symbol_matrix,
                             symbol_of_laplacian, term, unit)

from conftest import THETA

TH = theta_matrix(THETA)
AXES = (0, 1)


def _xi(*pairs):
    xi = [0, 0, 0, 0]
    for i, n in pairs:
        xi[i - 1] += n
    return tuple(xi)


def first_order(name):
    """a_1 xi_1 + a_2 xi_2 + a_0 with named coefficient elements."""
    return Symbol([term(1, (Elem(name + "1"),), xi=unit(1)), term(1, (Elem(name + "2"),), xi=unit(2)),
                   term(1, (Elem(name + "0"),))])


def second_order(name):
    return Symbol([term(1, (Elem(name + "11"),), xi=_xi((1, 2))), term(1, (Elem(name + "12"),), xi=_xi((1, 1), (2, 1))),
                   term(1, (Elem(name + "2"),), xi=unit(2)), term(1, (Elem(name + "0"),))])


def realization(rng, names):
    els = {n: random_selfadjoint(rng, TH, radius=1.0, axes=AXES) + 0.5j * random_selfadjoint(rng, TH, radius=1.0, axes=AXES)
           for n in names}
    one = FourierElement.scalar(1.0, TH)
    return Realization(one, elements=els)


def interior_error(A, B, box, depth):
    idx = box.interior(depth)
    return np.abs((A - B)[np.ix_(idx, idx)]).max() / np.abs(B[np.ix_(idx, idx)]).max()


def test_coefficients_are_exact_rationals():
    c = coef(Fraction(5, 2))
    assert coef_real(c) == Fraction(5, 2)
    assert coef_real(coef("-3/4")) == Fraction(-3, 4)
    with pytest.raises(ValueError):
        coef_real(coef(1 + 2j))


def test_canonical_word_merges_commuting_runs():
    w = (B0(), ExpH(1), B0(), DExpH(unit(1)), ExpH(1), ExpH(-1), B0())
    assert canonical_word(w) == (ExpH(1), B0(), B0(), DExpH(unit(1)), B0())


def test_xi_derivative_of_b0():
    b0 = Symbol([term(1, (B0(),))])
    got = d_xi(unit(2), b0)
    want = Symbol([term(-2, (B0(), ExpH(1), B0()), xi=unit(2))])
    assert got == want


def test_compose_matches_matrix_product(rng):
    rho, rho2 = first_order("a"), second_order("b")
    real = realization(rng, ["a1", "a2", "a0", "b11", "b12", "b2", "b0"])
    box = TruncationBox(6, AXES)
    lhs = symbol_matrix(compose(rho, rho2, 0), box, real)
    rhs = symbol_matrix(rho, box, real) @ symbol_matrix(rho2, box, real)
    assert interior_error(lhs, rhs, box, 3) < 1e-8


def test_compose_rejects_cutoff_above_order():
    with pytest.raises(ValueError):
        compose(first_order("a"), first_order("b"), 3)


def test_adjoint_matches_conjugate_transpose(rng):
    rho = second_order("a")
    real = realization(rng, ["a11", "a12", "a2", "a0"])
    box = TruncationBox(6, AXES)
    lhs = symbol_matrix(adjoint(rho, 0), box, real)
    rhs = symbol_matrix(rho, box, real).conj().T
    assert interior_error(lhs, rhs, box, 3) < 1e-8


def test_adjoint_is_involutive():
    rho = second_order("a")
    assert adjoint(adjoint(rho, 0), 0) == rho


def _mult(k):
    return Symbol([term(1, (ExpH(k),))])


def test_laplacian_from_dolbeault_factors():
    # (1/2) sum over d, dbar of e^h D^* e^{-h} D e^h
    total = Symbol([])
    for i, j in ((1, 3), (2, 4)):
        d = Symbol([term(1, xi=unit(i)), term(-1j, xi=unit(j))])
        dbar = Symbol([term(1, xi=unit(i)), term(1j, xi=unit(j))])
        for D, Ds in ((d, dbar), (dbar, d)):
            op = compose(_mult(1), Ds, -10)
            op = compose(op, _mult(-1), -10)
            op = compose(op, D, -10)
            op = compose(op, _mult(1), -10)
            total = total + op
    total = total.scale(Fraction(1, 2))
    assert total == symbol_of_laplacian()


def test_laplacian_symbol_against_operator(theta, rng):
    h = random_selfadjoint(rng, theta, radius=1.0, scale=0.1, axes=AXES)
    box = TruncationBox(6, AXES)
    wide = TruncationBox(12, AXES)
    real = Realization(exp_element(h, wide), h, exp_element(-h, wide))
    from nctorus.spectral import perturbed_laplacian
    M = perturbed_laplacian(h, box).matrix
    S = symbol_matrix(symbol_of_laplacian(), box, real)
    # the compressed factors lose modes outside the box; depth 4 keeps only |alpha| <= 2
    assert interior_error(S, M, box, 4) < 1e-12


def test_flat_laplacian_parts():
    a2, a1, a0 = laplacian_parts("flat")
    assert a1.is_zero() and a0.is_zero()
    assert len(a2) == 4


@pytest.mark.parametrize("n", [0, 1, 2])
def test_parametrix_is_homogeneous(n):
    assert {t.order for t in parametrix(n)} == {-2 - n}


def test_parametrix_sizes():
    assert [len(parametrix(n)) for n in range(3)] == [1, 8, 120]
    with pytest.raises(ValueError):
        parametrix(3)


def test_b2_vanishes_when_flat():
    assert parametrix(2).substitute_flat().is_zero()
    assert parametrix(1).substitute_flat().is_zero()
