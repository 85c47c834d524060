import math
from fractions import Fraction

import mpmath
import numpy as np
import pytest
from scipy.linalg import expm

from nctorus.heat_kernel import (F_m_eval, HomogeneityError, RTerm, RearrangementError, angular_integrate,
                                 b2_radial, canonical_rterms, compare_terms, g1, g2, golden_b2,
                                 lambda_collapse, modular_terms, parse_rterm, pinned_normalization,
                                 rearrange, relabel, sphere_moment, term_direction)
from nctorus.symbols import B0, DExpH, ExpH, Symbol, term, unit


@pytest.fixture(scope="module")
def engine_b2():
    return b2_radial()


def test_sphere_moments_exact():
    # |S^3| = 2 pi^2; int omega_1^2 = pi^2 / 2; int omega_1^4 = pi^2 / 4; int omega_1^2 omega_2^2 = pi^2 / 12
    assert sphere_moment((0, 0, 0, 0)) == 2
    assert sphere_moment((2, 0, 0, 0)) == Fraction(1, 2)
    assert sphere_moment((4, 0, 0, 0)) == Fraction(1, 4)
    assert sphere_moment((2, 2, 0, 0)) == Fraction(1, 12)
    assert sphere_moment((1, 1, 0, 0)) == 0


def test_sphere_moments_monte_carlo():
    rng = np.random.default_rng(2024)
    mus = [(2, 0, 0, 0), (4, 0, 0, 0), (2, 2, 0, 0), (6, 0, 0, 0), (4, 2, 0, 0), (2, 2, 2, 0), (1, 1, 0, 0)]
    n, chunk = 10_000_000, 1_000_000
    s1 = np.zeros(len(mus))
    s2 = np.zeros(len(mus))
    for _ in range(n // chunk):
        x = rng.standard_normal((chunk, 4))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        for k, mu in enumerate(mus):
            v = np.prod(x**np.array(mu), axis=1)
            s1[k] += v.sum()
            s2[k] += (v * v).sum()
    mean = s1 / n
    sigma = np.sqrt((s2 / n - mean**2) / n)
    for k, mu in enumerate(mus):
        exact = float(sphere_moment(mu)) / 2  # average over the sphere
        assert abs(mean[k] - exact) <= 3 * sigma[k], mu


@pytest.mark.parametrize("m", [(2, 0), (1, 1), (3, 1), (2, 2), (1, 3), (2, 1, 1), (1, 2, 1), (3, 1, 1), (1, 1, 1, 1)])
def test_F_m_beta_at_unit_arguments(m):
    # with every u = 1 the integrand is x^{n-2} (1+x)^{-n}: B(n-1, 1) = 1/(n-1)
    n = sum(m)
    assert abs(F_m_eval(m, [1.0] * (len(m) - 1)) - 1.0 / (n - 1)) < 1e-12


@pytest.mark.parametrize("m", [(1, 1), (2, 1), (1, 2), (3, 1), (2, 2), (1, 3), (2, 3)])
@pytest.mark.parametrize("u", [0.25, 0.7, 1.9, 5.0])
def test_F_m_hypergeometric(m, u):
    # int x^{n-2} (1+x)^{-m0} (1+ux)^{-m1} = B(n-1, 1) 2F1(m1, n-1; n; 1-u)
    n = sum(m)
    exact = float(mpmath.beta(n - 1, 1) * mpmath.hyp2f1(m[1], n - 1, n, 1 - u))
    assert abs(F_m_eval(m, [u]) - exact) < 1e-12


def test_F_m_logarithm():
    for u in (0.3, 2.0, 7.5):
        assert abs(F_m_eval((1, 1), [u]) - math.log(u) / (u - 1)) < 1e-12


def test_F_m_domain():
    with pytest.raises(ValueError):
        F_m_eval((0, 2), [1.0])
    with pytest.raises(ValueError):
        F_m_eval((1, 1), [-1.0])


def _exp_curve_second_derivative(Hm, K1, K2, eps=1e-3):
    # d^2/de^2 exp(H + e K1 + e^2/2 K2) at 0 by a 4th-order central stencil
    f = lambda e: expm(Hm + e * K1 + 0.5 * e * e * K2)
    return (-f(2 * eps) + 16 * f(eps) - 30 * f(0) + 16 * f(-eps) - f(-2 * eps)) / (12 * eps * eps)


def test_g_substitution_against_finite_differences():
    rng = np.random.default_rng(3)
    n = 5
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    Hm = 0.5 * (A + A.conj().T) * 0.4
    K1 = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    K2 = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    w, V = np.linalg.eigh(Hm)
    k1 = V.conj().T @ K1 @ V
    k2 = V.conj().T @ K2 @ V
    # Delta(X) = e^{-H} X e^{H}: on X_ij the modular variable is w_j - w_i
    s = w[None, :] - w[:, None]
    first = g1(s) * k2
    second = np.zeros((n, n), dtype=complex)
    for i in range(n):
        for k in range(n):
            for j in range(n):
                second[i, k] += g2(w[j] - w[i], w[k] - w[j]) * k1[i, j] * k1[j, k]
    formula = V @ (np.diag(np.exp(w)) @ (first + 2 * second)) @ V.conj().T
    fd = _exp_curve_second_derivative(Hm, K1, K2)
    assert np.abs(formula - fd).max() < 1e-7 * np.abs(fd).max()


def test_g1_first_derivative():
    rng = np.random.default_rng(4)
    n = 4
    A = rng.normal(size=(n, n))
    Hm = 0.3 * (A + A.T)
    K = rng.normal(size=(n, n))
    w, V = np.linalg.eigh(Hm)
    s = w[None, :] - w[:, None]
    formula = V @ (np.diag(np.exp(w)) @ (g1(s) * (V.T @ K @ V))) @ V.T
    eps = 1e-4
    fd = (expm(Hm + eps * K) - expm(Hm - eps * K)) / (2 * eps)
    assert np.abs(formula - fd).max() < 1e-7


def test_engine_b2_matches_golden(engine_b2):
    raw = golden_b2(raw=True)
    assert len(raw) == 120
    assert compare_terms(engine_b2, raw) == []
    assert len(engine_b2) == 92


def test_golden_blocks_are_relabelings():
    terms = golden_b2()
    blocks = {}
    for t in terms:
        blocks.setdefault(term_direction(t), []).append(t)
    ref = canonical_rterms(blocks[1])
    for i in (2, 3, 4):
        assert canonical_rterms(relabel(t, i, 1) for t in blocks[i]) == ref


def test_compare_localizes_a_corrupted_term(engine_b2):
    raw = golden_b2(raw=True)
    bad = list(raw)
    bad[7] = RTerm(bad[7].coefficient + 1, bad[7].r_power, bad[7].word)
    diff = compare_terms(engine_b2, bad)
    assert len(diff) == 1
    assert " ".join(a.text() for a in canonical_rterms([raw[7]])[0].word) in diff[0]


def test_parse_roundtrip():
    line = "+4 r^9 e^h b0 b0 b0 d1(e^h) e^h b0 b0 d1(e^h) b0"
    t = parse_rterm(line)
    assert t.r_power == 9 and t.coefficient == 4
    assert parse_rterm(t.text()) == t


def test_lambda_collapse_rejects_wrong_order():
    with pytest.raises(HomogeneityError):
        lambda_collapse([RTerm(Fraction(1), 5, (B0(),))])


def test_lambda_collapse_on_leading_term():
    # b0 alone: r^3 b0 would be order -2 (not -4), while r^3 b0 b0 is fine
    out = lambda_collapse([RTerm(Fraction(1), 3, (B0(), B0()))])
    assert out == [RTerm(Fraction(2), 3, (B0(), B0(), B0()))]


def test_angular_integration_drops_odd_moments():
    sym = Symbol([term(1, (B0(),), xi=(1, 0, 0, 0)), term(1, (B0(),), xi=(2, 0, 0, 0))])
    out = angular_integrate(sym)
    assert out == [RTerm(Fraction(1, 2), 5, (B0(),))]


def test_rearrange_requires_matching_power():
    t = RTerm(Fraction(1), 7, (ExpH(1), B0(), B0(), DExpH((2, 0, 0, 0)), B0()))
    with pytest.raises(RearrangementError):
        rearrange(t)
    ok = rearrange(RTerm(Fraction(1), 3, (ExpH(1), B0(), B0(), DExpH((2, 0, 0, 0)), B0())))
    assert ok.m == (2, 1) and ok.y_power == 1 - 2


def test_substitution_balances_powers(engine_b2):
    mts = modular_terms(engine_b2)
    assert {m.kind for m in mts} == {"K", "H"}
    assert {m.direction for m in mts} == {1, 2, 3, 4}


def test_pinned_normalization(engine_b2):
    assert pinned_normalization(engine_b2) == -1
