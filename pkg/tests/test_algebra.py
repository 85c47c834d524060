import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nctorus.algebra import (DomainError, FourierElement, IncompatibleAlgebraError, ModularCalculus,
                             TruncationBox, delta, exp_element, modular_apply, modular_biapply,
                             mul, random_selfadjoint, theta_matrix, weyl_state)

from conftest import THETA

TH = theta_matrix(THETA)


def naive_mul(a, b):
    out = {}
    for x, u in a.coeffs.items():
        for y, v in b.coeffs.items():
            g = tuple(p + q for p, q in zip(x, y))
            out[g] = out.get(g, 0) + u * v * np.exp(1j * np.pi * np.array(x) @ a.theta @ np.array(y))
    return out


modes = st.tuples(*[st.integers(-2, 2)] * 4)
coeff = st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False)
elements = st.dictionaries(modes, coeff, max_size=6).map(lambda d: FourierElement(d, TH))


def test_theta_matrix_is_skew():
    assert np.allclose(TH, -TH.T)
    with pytest.raises(ValueError):
        theta_matrix(np.ones((4, 4)))


def test_generator_relation(theta):
    u1, u2 = FourierElement.generator(1, theta), FourierElement.generator(2, theta)
    lhs = u2 * u1
    rhs = (u1 * u2) * np.exp(-2j * np.pi * theta[0, 1])
    assert (lhs - rhs).norm() < 1e-14


def test_mul_matches_pairwise_sum(theta, rng):
    a = random_selfadjoint(rng, theta, radius=2.5)
    b = random_selfadjoint(rng, theta, radius=2.5)
    ref = naive_mul(a, b)
    c = mul(a, b)
    assert max(abs(c[g] - v) for g, v in ref.items()) < 1e-14


@settings(max_examples=40, deadline=None)
@given(elements, elements, elements)
def test_associativity(a, b, c):
    lhs, rhs = (a * b) * c, a * (b * c)
    assert (lhs - rhs).norm() <= 1e-12 * (1 + a.norm() * b.norm() * c.norm())


@settings(max_examples=40, deadline=None)
@given(elements, elements)
def test_star_is_antimultiplicative(a, b):
    assert ((a * b).star() - b.star() * a.star()).norm() <= 1e-12 * (1 + a.norm() * b.norm())


@settings(max_examples=40, deadline=None)
@given(elements, elements, st.integers(1, 4))
def test_delta_is_derivation(a, b, i):
    lhs = delta(i, a * b)
    rhs = delta(i, a) * b + a * delta(i, b)
    assert (lhs - rhs).norm() <= 1e-11 * (1 + a.norm() * b.norm())


@settings(max_examples=40, deadline=None)
@given(elements, elements)
def test_phi0_is_tracial(a, b):
    assert abs((a * b).phi0() - (b * a).phi0()) <= 1e-12 * (1 + a.norm() * b.norm())


def test_incompatible_theta():
    a = FourierElement.generator(1, TH)
    b = FourierElement.generator(1, theta_matrix(None))
    with pytest.raises(IncompatibleAlgebraError):
        a * b


def test_json_roundtrip(theta, rng):
    a = random_selfadjoint(rng, theta)
    b = FourierElement.from_json(a.to_json())
    assert (a - b).norm() == 0


def test_exp_element_inverse(theta, rng):
    h = random_selfadjoint(rng, theta, radius=1.0, scale=0.1)
    e, em = exp_element(h), exp_element(-h)
    assert (e * em - FourierElement.scalar(1.0, theta)).norm() < 1e-13


def test_exp_rejects_large(theta):
    h = FourierElement.scalar(4.0, theta)
    with pytest.raises(DomainError):
        exp_element(h)
    exp_element(h, allow_large=True)


def test_weyl_state_of_constant(theta):
    h = FourierElement.scalar(0.3, theta)
    assert abs(weyl_state(FourierElement.scalar(1.0, theta), h) - np.exp(-0.6)) < 1e-14


def test_box_matrices(theta, rng):
    box = TruncationBox(2)
    a = random_selfadjoint(rng, theta, radius=1.0)
    x = random_selfadjoint(rng, theta, radius=1.0)
    inner = box.interior(1)
    prod = box.vector(a * x)
    assert np.allclose((box.left_matrix(a) @ box.vector(x))[inner], prod[inner], atol=1e-14)
    assert np.allclose((box.right_matrix(a) @ box.vector(x))[inner], box.vector(x * a)[inner], atol=1e-14)


def test_box_axes_subset():
    box = TruncationBox(3, axes=(0, 2))
    assert box.dim == 49
    assert np.all(box.basis[:, [1, 3]] == 0)


def test_modular_operator_is_conjugation(theta, rng):
    h = random_selfadjoint(rng, theta, radius=1.0, scale=0.1, axes=(0, 1))
    box = TruncationBox(8, axes=(0, 1))
    calc = ModularCalculus(h, box)
    a = random_selfadjoint(rng, theta, radius=1.0, axes=(0, 1))
    lhs = modular_apply(np.exp, a, calc)
    rhs = calc.exp_mh * a * calc.exp_h
    inner = TruncationBox(4, axes=(0, 1))
    assert np.abs(inner.vector(lhs) - inner.vector(rhs)).max() < 1e-12
    assert calc.commutator_residue(depth=box.N // 2 + 1) < 1e-10


def test_biapply_factorizes(theta, rng):
    h = random_selfadjoint(rng, theta, radius=1.0, scale=0.1, axes=(0, 1))
    box = TruncationBox(8, axes=(0, 1))
    calc = ModularCalculus(h, box)
    x = random_selfadjoint(rng, theta, radius=1.0, axes=(0, 1))
    y = random_selfadjoint(rng, theta, radius=1.0, axes=(0, 1))
    # F(s, t) = e^s gives Delta(x) y
    lhs = modular_biapply(lambda s, t: np.exp(s) + 0 * t, x, y, calc)
    rhs = modular_apply(np.exp, x, calc) * y
    inner = TruncationBox(4, axes=(0, 1))
    assert np.abs(inner.vector(lhs) - inner.vector(rhs)).max() < 1e-12


def test_modular_calculus_rejects_nonselfadjoint(theta):
    h = FourierElement.generator(1, theta) * 0.1
    with pytest.raises(DomainError):
        ModularCalculus(h, TruncationBox(2))
