"""Modular curvature functions, the scalar curvature and the Einstein-Hilbert action."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .algebra import (FourierElement, ModularCalculus, TruncationBox, delta,
                      modular_apply, modular_biapply)
from .divided import dd2_zero, phi1

TAYLOR_RADIUS = 1e-4

_K_SERIES = (1 / 2, -1 / 4, 1 / 12, -1 / 48, 1 / 240, -1 / 1440)
_G_SERIES = (-1 / 4, 1 / 6, -1 / 48, 1 / 120, -1 / 1440, 1 / 5040)
_T_SERIES = (1 / 4, -1 / 12, 1 / 16, -1 / 80, 1 / 288, -1 / 2016)
_HDIAG_SERIES = (-1 / 4, 1 / 4, -7 / 48, 1 / 16, -31 / 1440, 1 / 160)
# H(s, t) = sum_{a, b <= 3} c[a][b] s^a t^b + O(|.|^4)
_H_SERIES = (
    (-1 / 4, 1 / 24, 0.0, -1 / 480),
    (5 / 24, -1 / 16, 1 / 80, -1 / 576),
    (-1 / 12, 7 / 240, -1 / 144, 5 / 4032),
    (11 / 480, -5 / 576, 1 / 448, -1 / 2304),
)


def _poly(coeffs, s):
    return np.polynomial.polynomial.polyval(s, coeffs)


def taylor_K(s):
    return _poly(_K_SERIES, np.asarray(s, dtype=float))


def taylor_G(s):
    return _poly(_G_SERIES, np.asarray(s, dtype=float))


def taylor_T(s):
    return _poly(_T_SERIES, np.asarray(s, dtype=float))


def taylor_H_diagonal(s):
    return _poly(_HDIAG_SERIES, np.asarray(s, dtype=float))


def taylor_H(s, t):
    return np.polynomial.polynomial.polyval2d(np.asarray(s, dtype=float), np.asarray(t, dtype=float),
                                              np.array(_H_SERIES))


def _with_taylor(exact, series, s):
    s = np.asarray(s, dtype=float)
    out = np.asarray(exact(s), dtype=float)
    near = np.abs(s) < TAYLOR_RADIUS
    if near.any():
        out = np.where(near, series(s), out)
    return out[()] if out.ndim == 0 else out


def K(s):
    """(1 - e^{-s}) / (2 s)."""
    return _with_taylor(lambda x: 0.5 * np.exp(-x) * phi1(x), taylor_K, s)


def H(s, t):
    """The two-variable curvature function in closed form.

    Written as -(e^{-s-t}/4)(3 exp[0, t, s+t] - exp[0, s, s+t]), which is the
    printed rational-exponential expression with its removable singularities
    on s = 0, t = 0 and s + t = 0 resolved.
    """
    s, t = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(t, dtype=float))
    out = -0.25 * np.exp(-s - t) * (3 * dd2_zero(t, s + t) - dd2_zero(s, s + t))
    near = np.maximum(np.abs(s), np.abs(t)) < TAYLOR_RADIUS
    if near.any():
        out = np.where(near, taylor_H(s, t), out)
    return out[()] if out.ndim == 0 else out


def H_printed(s, t):
    """The rational-exponential form as printed; singular on s t (s+t) = 0."""
    s, t = np.asarray(s, dtype=float), np.asarray(t, dtype=float)
    es, et = np.exp(s), np.exp(t)
    num = (-es - 3) * s * (et - 1) + (es - 1) * (3 * et + 1) * t
    return -np.exp(-s - t) * num / (4 * s * t * (s + t))


def G(s):
    """H(s, -s) = (-4s - 3e^{-s} + e^s + 2) / (4 s^2)."""
    def exact(x):
        zero = np.zeros_like(x)
        return -0.25 * (3 * dd2_zero(zero, -x) - dd2_zero(zero, x))
    return _with_taylor(exact, taylor_G, s)


def T(s):
    """(-2s + e^s - e^{-s}(2s + 3) + 2) / (4 s^2), the integrand of the combined action."""
    return _with_taylor(lambda x: 0.5 * np.exp(-x) * phi1(x) + G(x), taylor_T, s)


def G_printed(s):
    s = np.asarray(s, dtype=float)
    return (-4 * s - 3 * np.exp(-s) + np.exp(s) + 2) / (4 * s**2)


def T_printed(s):
    s = np.asarray(s, dtype=float)
    return (-2 * s + np.exp(s) - np.exp(-s) * (2 * s + 3) + 2) / (4 * s**2)


def T_minimum() -> tuple[float, float]:
    """(s*, T(s*)) for the global minimum of T."""
    res = optimize.minimize_scalar(lambda x: float(T(x)), bracket=(-1.0, 0.8, 3.0), tol=1e-12)
    return float(res.x), float(res.fun)


# ---------------------------------------------------------------------------
# scalar curvature


@dataclass
class CurvatureResult:
    """pi^2 (e^{-h} K(nabla)(sum delta_i^2 h) + e^{-h} H(nabla_(1), nabla_(2))(sum (delta_i h)^2))."""

    R: FourierElement
    K_part: FourierElement
    H_part: FourierElement
    h: FourierElement
    box: TruncationBox
    calc: ModularCalculus = field(repr=False)

    def action(self) -> float:
        return float(self.R.phi0().real)

    def interior(self) -> FourierElement:
        """R restricted to the modes at sup-distance >= N/2 from the box boundary.

        Outer coefficients carry the truncation error of the modular calculus.
        """
        inner = TruncationBox(self.box.N - self.box.N // 2, self.box.axes)
        return inner.element(inner.vector(self.R), self.h.theta)

    def selfadjoint_defect(self) -> float:
        r = self.interior()
        return (r - r.star()).norm()


def _active(box: TruncationBox):
    return [i + 1 for i in box.axes]


def scalar_curvature(h: FourierElement, box: TruncationBox, calc: ModularCalculus | None = None,
                     allow_large: bool = False) -> CurvatureResult:
    """The scalar curvature element for the Weyl factor e^{-h}.

    Derivatives along axes outside ``box.axes`` must vanish on h; the sums
    over i run over the active axes only.
    """
    calc = calc if calc is not None else ModularCalculus(h, box, allow_large=allow_large)
    for i in range(1, 5):
        if i not in _active(box) and delta(i, h).norm() > 0:
            raise ValueError(f"h varies along axis {i}, which the box does not resolve")
    lap = FourierElement({}, h.theta)
    for i in _active(box):
        lap = lap + delta(i, delta(i, h))
    k_part = calc.exp_mh * modular_apply(K, lap, calc)
    h_sum = FourierElement({}, h.theta)
    for i in _active(box):
        d = delta(i, h)
        h_sum = h_sum + modular_biapply(H, d, d, calc)
    h_part = calc.exp_mh * h_sum
    scale = math.pi**2
    R = (k_part + h_part) * scale
    return CurvatureResult(R.chop(1e-300), k_part * scale, h_part * scale, h, box, calc)


def commutative_curvature(h: FourierElement, box: TruncationBox) -> FourierElement:
    """pi^2 e^{-h} (1/2 sum delta_i^2 h - 1/4 sum (delta_i h)^2) (theta = 0 formula)."""
    calc = ModularCalculus(h, box)
    acc = FourierElement({}, h.theta)
    for i in _active(box):
        d = delta(i, h)
        acc = acc + 0.5 * delta(i, d) - 0.25 * (d * d)
    return calc.exp_mh * acc * math.pi**2


class ConsistencyError(RuntimeError):
    """The two evaluations of the action disagree beyond tolerance."""


def methods_agree(a: float, b: float, rtol: float = 1e-8, atol: float = 1e-14) -> bool:
    """|a - b| <= rtol max(|a|, |b|) + atol."""
    return abs(a - b) <= rtol * max(abs(a), abs(b)) + atol


def eh_action(h: FourierElement, box: TruncationBox, method: str = "direct",
              calc: ModularCalculus | None = None, allow_large: bool = False) -> float:
    """phi0(R) evaluated directly, or through pi^2 sum_i phi0(e^{-h} T(nabla)(delta_i h) delta_i h)."""
    calc = calc if calc is not None else ModularCalculus(h, box, allow_large=allow_large)
    if method == "direct":
        return scalar_curvature(h, box, calc).action()
    if method == "combined":
        total = 0.0
        for i in _active(box):
            d = delta(i, h)
            total += (calc.exp_mh * modular_apply(T, d, calc) * d).phi0().real
        return math.pi**2 * total
    if method == "both":
        a = eh_action(h, box, "direct", calc)
        b = eh_action(h, box, "combined", calc)
        if not methods_agree(a, b):
            raise ConsistencyError(f"direct {a!r} vs combined {b!r}")
        return a
    raise ValueError(f"unknown method {method!r}")


@dataclass
class ExtremumReport:
    T_min_s: float
    T_min: float
    T_nonnegative: bool
    samples: list = field(default_factory=list)  # (label, is_constant, action)
    tol: float = 1e-10

    @property
    def ok(self) -> bool:
        if not self.T_nonnegative:
            return False
        for _, const, val in self.samples:
            if const and abs(val) > 1e-12:
                return False
            if not const and not val < -self.tol:
                return False
        return True

    def to_dict(self) -> dict:
        return {
            "T_min_s": self.T_min_s,
            "T_min": self.T_min,
            "T_nonnegative": self.T_nonnegative,
            "samples": [{"label": l, "constant": c, "action": v} for l, c, v in self.samples],
            "max_attained_only_at_constants": self.ok,
        }


def is_constant(h: FourierElement) -> bool:
    return all(delta(i, h).norm() == 0 for i in range(1, 5))


def extremum_certificate(samples, box: TruncationBox, grid=None, tol: float = 1e-10) -> ExtremumReport:
    """Check T >= 0 on a grid and phi0(R) <= 0 on the samples, with equality only at constants.

    ``samples`` is an iterable of (label, h) pairs.
    """
    grid = np.linspace(-10, 10, 20001) if grid is None else np.asarray(grid, dtype=float)
    s0, t0 = T_minimum()
    rep = ExtremumReport(s0, t0, bool(np.all(T(grid) >= 0)), tol=tol)
    for label, h in samples:
        rep.samples.append((label, is_constant(h), eh_action(h, box)))
    return rep
