"""Divided differences of the exponential, evaluated without cancellation.

Every modular function in the package is a combination of ``exp[0, p]`` and
``exp[0, p, q]``; computing them here once keeps the removable singularities
at coinciding nodes harmless.
"""

from __future__ import annotations

import math

import numpy as np

_SERIES_TERMS = 30
_INV_FACT = np.array([1.0 / math.factorial(n + 2) for n in range(_SERIES_TERMS)])


def phi1(x):
    """(e^x - 1)/x, equal to 1 at x = 0."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    nz = x != 0
    out[nz] = np.expm1(x[nz]) / x[nz]
    return out


def dd1(a, b):
    """exp[a, b] = (e^b - e^a)/(b - a)."""
    a = np.asarray(a, dtype=float)
    return np.exp(a) * phi1(np.asarray(b, dtype=float) - a)


def dd2_zero(p, q):
    """exp[0, p, q], symmetric in its three nodes.

    Near the origin uses sum_n h_n(p, q)/(n+2)! with h_n the complete
    homogeneous polynomial; elsewhere divides by the widest node gap.
    """
    p, q = np.broadcast_arrays(np.asarray(p, dtype=float), np.asarray(q, dtype=float))
    p = p.astype(float).copy()
    q = q.astype(float).copy()
    out = np.empty(p.shape)
    gap = np.maximum(np.maximum(np.abs(p), np.abs(q)), np.abs(p - q))
    small = gap < 1.0

    if small.any():
        ps, qs = p[small], q[small]
        acc = np.zeros(ps.shape)
        h = np.ones(ps.shape)          # h_n(p, q)
        qn = np.ones(ps.shape)         # q^n
        for n in range(_SERIES_TERMS):
            acc += h * _INV_FACT[n]
            qn = qn * qs
            h = h * ps + qn            # h_{n+1} = p h_n + q^{n+1}
        out[small] = acc

    big = ~small
    if big.any():
        pb, qb = p[big], q[big]
        res = np.empty(pb.shape)
        aq, ap, apq = np.abs(qb), np.abs(pb), np.abs(pb - qb)
        use_q = (aq >= ap) & (aq >= apq)
        use_p = ~use_q & (ap >= apq)
        use_pq = ~use_q & ~use_p
        i = use_q
        res[i] = (dd1(pb[i], qb[i]) - phi1(pb[i])) / qb[i]
        i = use_p
        res[i] = (dd1(qb[i], pb[i]) - phi1(qb[i])) / pb[i]
        i = use_pq
        res[i] = (phi1(qb[i]) - phi1(pb[i])) / (qb[i] - pb[i])
        out[big] = res
    return out
