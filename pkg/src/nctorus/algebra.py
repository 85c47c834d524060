"""Twisted Fourier algebra of the noncommutative 4-torus.

Elements are finitely supported sums ``sum_a c_a U_a`` over ``a in Z^4`` with
the Weyl-ordered product ``U_a U_b = exp(pi i theta(a, b)) U_{a+b}``.  Besides
the algebra itself this module holds the truncated operator machinery
(left/right multiplication matrices on a box of Fourier modes) and the
functional calculus of the modular operator ``Delta(a) = e^{-h} a e^{h}``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DIM = 4
_ATOL = 1e-12


class IncompatibleAlgebraError(ValueError):
    """Raised when elements over different deformation matrices are combined."""


class DomainError(ValueError):
    """Raised when an operation needs a selfadjoint (or otherwise valid) input."""


def theta_matrix(entries=None) -> np.ndarray:
    """Validate and return a real skew-symmetric 4x4 deformation matrix.

    ``entries`` may be a full 4x4 array or a mapping ``{(k, l): value}`` for
    the upper triangle (1-based indices).  ``None`` gives the commutative torus.
    """
    if entries is None:
        return np.zeros((DIM, DIM))
    if isinstance(entries, dict):
        th = np.zeros((DIM, DIM))
        for (k, l), v in entries.items():
            th[k - 1, l - 1] = v
            th[l - 1, k - 1] = -v
        return th
    th = np.array(entries, dtype=float)
    if th.shape != (DIM, DIM):
        raise ValueError(f"theta must be 4x4, got shape {th.shape}")
    if not np.allclose(th, -th.T, atol=0.0, rtol=0.0) or np.any(np.diag(th) != 0):
        raise ValueError("theta must be skew-symmetric with zero diagonal")
    return th


def _as_alpha(alpha) -> tuple[int, int, int, int]:
    a = tuple(int(x) for x in alpha)
    if len(a) != DIM:
        raise ValueError(f"multi-index must have {DIM} entries: {alpha!r}")
    return a


class FourierElement:
    """Finitely supported element ``sum c_alpha U_alpha`` of C^inf(T^4_theta).

    Instances are treated as immutable.  ``coeffs`` maps 4-tuples to complex
    numbers; exact zeros are dropped.
    """

    __slots__ = ("theta", "coeffs")
    # keep numpy scalars from treating elements as sequences
    __array_ufunc__ = None

    def __init__(self, coeffs=None, theta=None):
        self.theta = theta_matrix(theta) if not isinstance(theta, np.ndarray) else theta
        self.coeffs: dict[tuple, complex] = {}
        for alpha, c in (coeffs or {}).items():
            c = complex(c)
            if c != 0:
                self.coeffs[_as_alpha(alpha)] = c

    # -- constructors -----------------------------------------------------

    @classmethod
    def scalar(cls, c, theta=None) -> "FourierElement":
        return cls({(0, 0, 0, 0): c}, theta)

    @classmethod
    def unitary(cls, alpha, theta=None, coeff=1.0) -> "FourierElement":
        return cls({_as_alpha(alpha): coeff}, theta)

    @classmethod
    def generator(cls, i: int, theta=None) -> "FourierElement":
        """``U_i`` for ``i`` in 1..4."""
        e = [0] * DIM
        e[i - 1] = 1
        return cls.unitary(e, theta)

    @classmethod
    def from_arrays(cls, alphas: np.ndarray, values: np.ndarray, theta, tol=0.0):
        keep = np.abs(values) > tol
        return cls(
            {tuple(int(x) for x in a): v for a, v in zip(alphas[keep], values[keep])},
            theta,
        )

    # -- basic structure --------------------------------------------------

    def _check(self, other: "FourierElement"):
        if self.theta is not other.theta and not np.array_equal(self.theta, other.theta):
            raise IncompatibleAlgebraError("elements live over different theta matrices")

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.coeffs:
            return np.zeros((0, DIM), dtype=np.int64), np.zeros(0, dtype=complex)
        keys = list(self.coeffs)
        return np.array(keys, dtype=np.int64), np.array([self.coeffs[k] for k in keys])

    def __getitem__(self, alpha) -> complex:
        return self.coeffs.get(_as_alpha(alpha), 0j)

    def __len__(self):
        return len(self.coeffs)

    def support_radius(self) -> int:
        """Largest |alpha_i| over the support (sup-norm radius)."""
        return max((max(abs(x) for x in a) for a in self.coeffs), default=0)

    def norm(self) -> float:
        """l2 norm of the coefficient sequence (the phi0 Hilbert norm)."""
        return float(np.sqrt(sum(abs(c) ** 2 for c in self.coeffs.values())))

    def l1_norm(self) -> float:
        """Sum of |coefficients|; bounds the operator norm."""
        return float(sum(abs(c) for c in self.coeffs.values()))

    def is_selfadjoint(self, tol: float = _ATOL) -> bool:
        return (self - self.star()).l1_norm() <= tol * max(1.0, self.l1_norm())

    def chop(self, tol: float = 1e-16) -> "FourierElement":
        return FourierElement({a: c for a, c in self.coeffs.items() if abs(c) > tol}, self.theta)

    def __repr__(self):
        terms = ", ".join(f"{a}: {c:.6g}" for a, c in sorted(self.coeffs.items())[:6])
        more = "" if len(self.coeffs) <= 6 else f", ... ({len(self.coeffs)} terms)"
        return f"FourierElement({{{terms}{more}}})"

    # -- linear structure -------------------------------------------------

    def __add__(self, other):
        if not isinstance(other, FourierElement):
            other = FourierElement.scalar(other, self.theta)
        self._check(other)
        out = dict(self.coeffs)
        for a, c in other.coeffs.items():
            out[a] = out.get(a, 0j) + c
        return FourierElement(out, self.theta)

    __radd__ = __add__

    def __neg__(self):
        return FourierElement({a: -c for a, c in self.coeffs.items()}, self.theta)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, FourierElement):
            return mul(self, other)
        return FourierElement({a: c * other for a, c in self.coeffs.items()}, self.theta)

    def __rmul__(self, other):
        return FourierElement({a: other * c for a, c in self.coeffs.items()}, self.theta)

    def __truediv__(self, other):
        return self * (1.0 / other)

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative powers are not available for general elements")
        out = FourierElement.scalar(1.0, self.theta)
        for _ in range(k):
            out = out * self
        return out

    # -- involution, trace, derivations -------------------------------------

    def star(self) -> "FourierElement":
        return star(self)

    def phi0(self) -> complex:
        return phi0(self)

    def delta(self, i: int) -> "FourierElement":
        return delta(i, self)

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        payload = {
            "theta": self.theta.tolist(),
            "coeffs": [
                {"alpha": list(a), "re": c.real, "im": c.imag}
                for a, c in sorted(self.coeffs.items())
            ],
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "FourierElement":
        payload = json.loads(text)
        theta = theta_matrix(payload["theta"])
        return cls(
            {tuple(t["alpha"]): complex(t["re"], t.get("im", 0.0)) for t in payload["coeffs"]},
            theta,
        )


def twist(theta: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """theta(a, b) = sum_kl theta_kl a_k b_l for stacked multi-indices."""
    return np.einsum("...k,kl,...l->...", a, theta, b)


_KEY_OFFSET = 1 << 15
_DENSE_LIMIT = 5e7
_BLOCK = 1 << 22


def _group_sum(keys: np.ndarray, values: np.ndarray):
    """Sum ``values`` over identical rows of ``keys``."""
    if len(keys) == 0:
        return keys, values
    # pack the four small integers into one int64 so unique works on scalars
    packed = np.zeros(len(keys), dtype=np.int64)
    for k in range(DIM):
        packed = (packed << 16) | (keys[:, k].astype(np.int64) + _KEY_OFFSET)
    uniq, first, inv = np.unique(packed, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    re = np.bincount(inv, weights=values.real, minlength=len(uniq))
    im = np.bincount(inv, weights=values.imag, minlength=len(uniq))
    return keys[first], re + 1j * im


def mul(a: FourierElement, b: FourierElement) -> FourierElement:
    """Twisted convolution: (ab)_g = sum_{x+y=g} a_x b_y exp(pi i theta(x, y))."""
    a._check(b)
    A, ca = a.arrays()
    B, cb = b.arrays()
    if len(A) == 0 or len(B) == 0:
        return FourierElement({}, a.theta)
    lo = A.min(axis=0) + B.min(axis=0)
    shape = A.max(axis=0) + B.max(axis=0) - lo + 1
    if np.prod(shape.astype(float)) > _DENSE_LIMIT:
        phase = np.exp(1j * np.pi * (A @ a.theta @ B.T))
        vals = (ca[:, None] * cb[None, :] * phase).reshape(-1)
        keys = (A[:, None, :] + B[None, :, :]).reshape(-1, DIM)
        keys, vals = _group_sum(keys, vals)
        return FourierElement.from_arrays(keys, vals, a.theta)
    # accumulate on the dense bounding grid of the output, a block of rows at a time;
    # flat indices are linear in the multi-index, so they add like the modes do
    strides = np.r_[np.cumprod(shape[::-1])[:-1][::-1], 1]
    ia = (A - lo) @ strides
    ib = B @ strides
    size = int(np.prod(shape))
    re = np.zeros(size)
    im = np.zeros(size)
    tB = a.theta @ B.T
    step = max(1, _BLOCK // len(B))
    for i in range(0, len(A), step):
        sl = slice(i, i + step)
        vals = (ca[sl, None] * cb[None, :] * np.exp(1j * np.pi * (A[sl] @ tB))).reshape(-1)
        idx = (ia[sl, None] + ib[None, :]).reshape(-1)
        re += np.bincount(idx, weights=vals.real, minlength=size)
        im += np.bincount(idx, weights=vals.imag, minlength=size)
    vals = re + 1j * im
    nz = np.flatnonzero(vals)
    keys = np.stack(np.unravel_index(nz, tuple(shape)), axis=1) + lo
    return FourierElement.from_arrays(keys, vals[nz], a.theta)


def star(a: FourierElement) -> FourierElement:
    """Adjoint: (sum c_x U_x)* = sum conj(c_x) U_{-x}."""
    return FourierElement(
        {tuple(-x for x in alpha): c.conjugate() for alpha, c in a.coeffs.items()}, a.theta
    )


def phi0(a: FourierElement) -> complex:
    """The canonical tracial state: the coefficient of U_0."""
    return a.coeffs.get((0, 0, 0, 0), 0j)


def delta(i: int, a: FourierElement) -> FourierElement:
    """Basic derivation: delta_i(U_x) = x_i U_x, i in 1..4."""
    if i not in (1, 2, 3, 4):
        raise ValueError(f"derivation index must be 1..4, got {i}")
    return FourierElement({x: x[i - 1] * c for x, c in a.coeffs.items()}, a.theta)


def delta_multi(ell, a: FourierElement) -> FourierElement:
    """delta^ell = delta_1^l1 ... delta_4^l4."""
    ell = _as_alpha(ell)
    return FourierElement(
        {x: c * np.prod([x[k] ** ell[k] for k in range(DIM)]) for x, c in a.coeffs.items()},
        a.theta,
    )


def weyl_state(a: FourierElement, h: FourierElement, exp_m2h: FourierElement | None = None) -> complex:
    """Conformally rescaled volume state phi(a) = phi0(a e^{-2h})."""
    if exp_m2h is None:
        exp_m2h = exp_element(-2.0 * h, allow_large=True)
    return phi0(mul(a, exp_m2h))


# ---------------------------------------------------------------------------
# truncation boxes and multiplication matrices


@dataclass(frozen=True)
class TruncationBox:
    """Modes ``{alpha : |alpha_i| <= N}`` on the active axes, zero elsewhere.

    ``axes`` are 0-based directions.  Restricting to a sub-lattice is useful
    when every element of interest is generated by a subset of the U_i.
    """

    N: int
    axes: tuple[int, ...] = (0, 1, 2, 3)

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("box size must be non-negative")
        if not self.axes or any(ax not in range(DIM) for ax in self.axes):
            raise ValueError(f"invalid axes {self.axes}")

    @cached_property
    def basis(self) -> np.ndarray:
        rng = range(-self.N, self.N + 1)
        pts = np.array(list(itertools.product(rng, repeat=len(self.axes))), dtype=np.int64)
        out = np.zeros((len(pts), DIM), dtype=np.int64)
        out[:, list(self.axes)] = pts
        return out

    @property
    def dim(self) -> int:
        return (2 * self.N + 1) ** len(self.axes)

    @cached_property
    def index(self) -> dict:
        return {tuple(int(v) for v in a): k for k, a in enumerate(self.basis)}

    def enlarged(self, margin: int) -> "TruncationBox":
        return TruncationBox(self.N + margin, self.axes)

    def contains(self, alpha) -> bool:
        return all(
            (abs(alpha[k]) <= self.N) if k in self.axes else alpha[k] == 0 for k in range(DIM)
        )

    def interior(self, depth: int) -> np.ndarray:
        """Boolean mask of basis modes at sup-distance >= depth from the boundary."""
        return np.max(np.abs(self.basis), axis=1) <= self.N - depth

    def vector(self, a: FourierElement, strict: bool = False) -> np.ndarray:
        v = np.zeros(self.dim, dtype=complex)
        for alpha, c in a.coeffs.items():
            k = self.index.get(alpha)
            if k is None:
                if strict:
                    raise ValueError(f"mode {alpha} lies outside the box")
                continue
            v[k] = c
        return v

    def element(self, v: np.ndarray, theta, tol: float = 0.0) -> FourierElement:
        return FourierElement.from_arrays(self.basis, np.asarray(v), theta, tol)

    def _dense_lookup(self, a: FourierElement, radius: int) -> np.ndarray:
        size = 2 * radius + 1
        arr = np.zeros((size,) * DIM, dtype=complex)
        for alpha, c in a.coeffs.items():
            if all(abs(x) <= radius for x in alpha):
                arr[tuple(x + radius for x in alpha)] = c
        return arr

    def left_matrix(self, a: FourierElement) -> np.ndarray:
        """Compression of x -> a x to the box: M[g, b] = a_{g-b} e^{pi i theta(g-b, b)}."""
        B = self.basis
        diff = B[:, None, :] - B[None, :, :]
        arr = self._dense_lookup(a, 2 * self.N)
        vals = arr[tuple(np.moveaxis(diff + 2 * self.N, -1, 0))]
        phase = np.exp(1j * np.pi * twist(a.theta, diff, B[None, :, :]))
        return vals * phase

    def right_matrix(self, a: FourierElement) -> np.ndarray:
        """Compression of x -> x a: M[g, b] = a_{g-b} e^{pi i theta(b, g-b)}."""
        B = self.basis
        diff = B[:, None, :] - B[None, :, :]
        arr = self._dense_lookup(a, 2 * self.N)
        vals = arr[tuple(np.moveaxis(diff + 2 * self.N, -1, 0))]
        phase = np.exp(1j * np.pi * twist(a.theta, B[None, :, :], diff))
        return vals * phase

    def derivation_diagonal(self, i: int) -> np.ndarray:
        return self.basis[:, i - 1].astype(float)


def exp_element(
    h: FourierElement,
    box: TruncationBox | None = None,
    margin: int = 2,
    tol: float = 1e-18,
    allow_large: bool = False,
) -> FourierElement:
    """e^h as the Taylor series of the multiplication operator applied to 1.

    With a box, every partial product is projected onto the box enlarged by
    ``margin``; without one the series is summed exactly on growing supports
    and coefficients below ``tol`` are dropped.
    """
    if not h.is_selfadjoint(1e-12):
        raise DomainError("exp_element expects a selfadjoint element")
    bound = h.l1_norm()
    if bound > 3.0 and not allow_large:
        raise DomainError(f"|h| = {bound:.3g} > 3: truncation error would dominate")
    big = box.enlarged(margin) if box is not None else None
    term = FourierElement.scalar(1.0, h.theta)
    total = term
    k = 0
    while True:
        k += 1
        term = mul(h, term) * (1.0 / k)
        if big is not None:
            term = FourierElement({a: c for a, c in term.coeffs.items() if big.contains(a)}, h.theta)
        term = term.chop(tol)
        total = total + term
        if term.l1_norm() < tol or k > 200:
            break
    return total.chop(tol)


# ---------------------------------------------------------------------------
# modular operator


@dataclass
class ModularCalculus:
    """Functional calculus of nabla = log Delta on a truncation box.

    ``nabla_L = log L_{e^{-h}}`` and ``nabla_R = log R_{e^{h}}`` are built from
    the compressed multiplication matrices (Hermitian for the phi0 inner
    product); ``nabla`` is their sum and is diagonalized once.
    """

    h: FourierElement
    box: TruncationBox
    margin: int = 2
    allow_large: bool = False
    exp_h: FourierElement = field(init=False, repr=False)
    exp_mh: FourierElement = field(init=False, repr=False)

    def __post_init__(self):
        if not self.h.is_selfadjoint():
            raise DomainError("the conformal factor h must be selfadjoint")
        if self.h.l1_norm() > 3.0 and not self.allow_large:
            raise DomainError("|h| > 3 rejected; pass allow_large=True to override")
        # differences of box modes reach 2N, so exponentials are kept that far
        wide = TruncationBox(2 * self.box.N, self.box.axes)
        self.exp_h = exp_element(self.h, wide, self.margin, allow_large=self.allow_large)
        self.exp_mh = exp_element(-self.h, wide, self.margin, allow_large=self.allow_large)
        self.L_exp_mh = self.box.left_matrix(self.exp_mh)
        self.R_exp_h = self.box.right_matrix(self.exp_h)
        self.nabla_L = _hermitian_log(self.L_exp_mh)
        self.nabla_R = _hermitian_log(self.R_exp_h)
        nabla = self.nabla_L + self.nabla_R
        nabla = 0.5 * (nabla + nabla.conj().T)
        self.spectrum, self.eigvecs = np.linalg.eigh(nabla)

    @property
    def theta(self):
        return self.h.theta

    @property
    def nabla(self) -> np.ndarray:
        return (self.eigvecs * self.spectrum) @ self.eigvecs.conj().T

    def commutator_residue(self, depth: int | None = None) -> float:
        """Frobenius norm of [nabla_L, nabla_R] (zero before truncation).

        With ``depth`` the norm is taken on the modes at least that far from
        the box boundary, where truncation has not reached.
        """
        c = self.nabla_L @ self.nabla_R - self.nabla_R @ self.nabla_L
        if depth is not None:
            idx = self.box.interior(depth)
            c = c[np.ix_(idx, idx)]
        return float(np.linalg.norm(c))

    def coords(self, a: FourierElement) -> np.ndarray:
        """Coefficients of ``a`` in the nabla eigenbasis."""
        return self.eigvecs.conj().T @ self.box.vector(a)

    def element(self, coords: np.ndarray, tol: float = 0.0) -> FourierElement:
        return self.box.element(self.eigvecs @ coords, self.theta, tol)


def _hermitian_log(M: np.ndarray) -> np.ndarray:
    M = 0.5 * (M + M.conj().T)
    w, V = np.linalg.eigh(M)
    if w.min() <= 0:
        raise DomainError("multiplication operator is not positive definite on the box")
    return (V * np.log(w)) @ V.conj().T


def _checked(values: np.ndarray, name: str) -> np.ndarray:
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        raise FloatingPointError(f"{name} is not finite on the spectrum of nabla")
    return values


def modular_apply(F, a: FourierElement, calc: ModularCalculus) -> FourierElement:
    """F(nabla)(a) through the eigendecomposition of nabla."""
    c = calc.coords(a)
    f = _checked(F(calc.spectrum), "F")
    return calc.element(f * c)


def modular_biapply(F, x: FourierElement, y: FourierElement, calc: ModularCalculus) -> FourierElement:
    """F(nabla_(1), nabla_(2))(x y) = sum_{s,t} F(s, t) x_s y_t.

    x_s, y_t are the spectral components of x and y.  The bilinear kernel
    is formed in the mode basis and then contracted with the twisted
    convolution, which avoids one product per eigenvector pair.
    """
    calc.h._check(x)
    s = calc.spectrum
    Fst = _checked(F(s[:, None], s[None, :]), "F")
    V = calc.eigvecs
    cx = calc.coords(x)
    cy = calc.coords(y)
    K = (V * cx) @ Fst @ (V * cy).T
    B = calc.box.basis
    phase = np.exp(1j * np.pi * (B @ calc.theta @ B.T))
    keys = (B[:, None, :] + B[None, :, :]).reshape(-1, DIM)
    vals = (K * phase).reshape(-1)
    keys, vals = _group_sum(keys, vals)
    return FourierElement.from_arrays(keys, vals, calc.theta)


def random_selfadjoint(
    rng: np.random.Generator,
    theta,
    radius: float = 2.0,
    scale: float = 0.05,
    axes=(0, 1, 2, 3),
    include_constant: bool = False,
) -> FourierElement:
    """Random selfadjoint element on modes with Euclidean |alpha| <= radius."""
    r = int(np.floor(radius))
    pts = []
    for pt in itertools.product(range(-r, r + 1), repeat=len(axes)):
        if 0 < sum(x * x for x in pt) <= radius**2:
            full = [0] * DIM
            for ax, x in zip(axes, pt):
                full[ax] = x
            pts.append(tuple(full))
    coeffs = {}
    for alpha in pts:
        neg = tuple(-x for x in alpha)
        if neg in coeffs:
            coeffs[alpha] = np.conj(coeffs[neg])
        else:
            coeffs[alpha] = scale * complex(rng.normal(), rng.normal()) / np.sqrt(2)
    if include_constant:
        coeffs[(0, 0, 0, 0)] = scale * rng.normal()
    return FourierElement(coeffs, theta)
