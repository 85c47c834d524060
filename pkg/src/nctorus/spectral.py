"""Truncated Laplacians on the noncommutative 4-torus and spectral estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algebra import DomainError, FourierElement, TruncationBox, exp_element, weyl_state

# pairs (i, j) with d = delta_i - 1j * delta_j, dbar = delta_i + 1j * delta_j
DOLBEAULT_PAIRS = ((1, 3), (2, 4))


def dolbeault_diagonals(box: TruncationBox) -> dict[str, np.ndarray]:
    """Diagonals of d_1, d_2 and their adjoints dbar_1, dbar_2 on the box."""
    out = {}
    for k, (i, j) in enumerate(DOLBEAULT_PAIRS, start=1):
        di, dj = box.derivation_diagonal(i), box.derivation_diagonal(j)
        out[f"d{k}"] = di - 1j * dj
        out[f"dbar{k}"] = di + 1j * dj
    return out


@dataclass
class SpectralModel:
    """A Hermitian matrix on a truncation box with its full spectrum.

    A one-dimensional ``matrix`` is taken as the diagonal of a diagonal operator.
    """

    matrix: np.ndarray
    box: TruncationBox
    h: FourierElement | None = None
    eigenvalues: np.ndarray = field(init=False)

    def __post_init__(self):
        M = self.matrix
        if M.ndim == 1:
            if np.abs(M.imag).max(initial=0.0) > 0:
                raise ValueError("diagonal operator has non-real entries")
            self.eigenvalues = np.sort(M.real)
            return
        herm = np.abs(M - M.conj().T).max() if M.size else 0.0
        if herm > 1e-12 * max(1.0, np.abs(M).max()):
            raise ValueError(f"operator matrix is not Hermitian (defect {herm:.3g})")
        self.eigenvalues = np.linalg.eigvalsh(0.5 * (M + M.conj().T))

    def counting(self, lam) -> np.ndarray:
        """N(lambda) = #{eigenvalues <= lambda}."""
        return np.searchsorted(self.eigenvalues, np.asarray(lam, dtype=float), side="right")

    def volume(self) -> float:
        """phi0(e^{-2h}); 1 for the flat model."""
        if self.h is None:
            return 1.0
        return float(weyl_state(FourierElement.scalar(1.0, self.h.theta), self.h).real)

    def weyl_target(self) -> float:
        """pi^2 phi0(e^{-2h}) / 2, the leading coefficient of N(lambda) / lambda^2."""
        return math.pi**2 * self.volume() / 2

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{v!r}\n" for v in map(float, self.eigenvalues)))
        return path


def flat_laplacian(box: TruncationBox) -> SpectralModel:
    """sum_i delta_i^2: diagonal with entries |alpha|^2."""
    d = np.sum(box.basis.astype(float) ** 2, axis=1)
    return SpectralModel(d.astype(complex), box)


def perturbed_laplacian(h: FourierElement, box: TruncationBox, allow_large: bool = False) -> SpectralModel:
    """The conformally perturbed Laplacian in the positive form (1/2) sum_D Y_D^* Y_D.

    Y_D = e^{-h/2} D e^{h} (left multiplications) for D in {d_1, dbar_1, d_2, dbar_2}
    compresses the operator e^h dbar e^{-h} d e^h + ... to the box while keeping
    it Hermitian and positive semidefinite.  The factor 1/2 makes h = 0 give
    the flat Laplacian: the four Dolbeault terms add up to twice sum delta_i^2.
    """
    if not h.is_selfadjoint(1e-12):
        raise DomainError("the conformal factor h must be selfadjoint")
    wide = TruncationBox(2 * box.N, box.axes)
    e_h = exp_element(h, wide, allow_large=allow_large)
    e_mh2 = exp_element(-0.5 * h, wide, allow_large=allow_large)
    L_h = box.left_matrix(e_h)
    L_mh2 = box.left_matrix(e_mh2)
    M = np.zeros((box.dim, box.dim), dtype=complex)
    for diag in dolbeault_diagonals(box).values():
        Y = L_mh2 @ (diag[:, None] * L_h)
        M += Y.conj().T @ Y
    M *= 0.5
    M = 0.5 * (M + M.conj().T)
    return SpectralModel(M, box, h)


# ---------------------------------------------------------------------------
# Weyl law


@dataclass
class CountingFit:
    """Least-squares fit of N(lambda) = C lambda^2 over a window."""

    lam_lo: float
    lam_hi: float
    C_fit: float
    target: float
    n_points: int
    endpoint_ratio: float

    @property
    def rel_dev(self) -> float:
        return abs(self.C_fit - self.target) / self.target

    @property
    def endpoint_rel_dev(self) -> float:
        return abs(self.endpoint_ratio - 1.0)

    def to_dict(self) -> dict:
        return {
            "C_fit": self.C_fit,
            "target": self.target,
            "rel_dev": self.rel_dev,
            "window": [self.lam_lo, self.lam_hi],
            "n_points": self.n_points,
            "endpoint_ratio": self.endpoint_ratio,
            "endpoint_rel_dev": self.endpoint_rel_dev,
        }


def counting_fit(model: SpectralModel, window: tuple[float, float] | None = None,
                 level_tol: float = 1e-9) -> CountingFit:
    """Fit C in N(lambda) ~ C lambda^2 on the spectral levels inside ``window``.

    The counting function is sampled once per distinct eigenvalue (levels
    closer than ``level_tol`` relative are merged) and C minimizes
    sum_k (N(lambda_k) - C lambda_k^2)^2.  The default window [N^2/4, N^2]
    keeps lambda below the inscribed-ball radius of the box.
    """
    N = model.box.N
    lo, hi = window if window is not None else (N * N / 4.0, float(N * N))
    ev = model.eigenvalues
    pts = ev[(ev >= lo) & (ev <= hi)]
    if pts.size == 0:
        raise ValueError(f"no eigenvalues in the window [{lo}, {hi}]")
    # last member of each cluster of (numerically) equal eigenvalues
    last = np.r_[np.diff(pts) > level_tol * (1 + np.abs(pts[1:])), True]
    levels = pts[last]
    counts = model.counting(levels * (1 + level_tol) + level_tol).astype(float)
    C = float(np.sum(counts * levels**2) / np.sum(levels**4))
    target = model.weyl_target()
    endpoint = float(model.counting(hi)) / (target * hi * hi)
    return CountingFit(lo, hi, C, target, int(levels.size), endpoint)


# ---------------------------------------------------------------------------
# heat trace


def heat_trace(model: SpectralModel, t_list) -> list[tuple[float, float, float]]:
    """(t, sum_j exp(-t lambda_j), t^2 * trace) for each t > 0."""
    ev = np.clip(model.eigenvalues, 0.0, None)
    out = []
    for t in np.atleast_1d(np.asarray(t_list, dtype=float)):
        if t <= 0:
            raise ValueError("heat trace needs t > 0")
        tr = float(np.sum(np.exp(-t * ev)))
        out.append((float(t), tr, t * t * tr))
    return out


@dataclass
class HeatPlateau:
    t: float
    value: float
    target: float

    @property
    def rel_dev(self) -> float:
        return abs(self.value - self.target) / self.target

    def to_dict(self) -> dict:
        return {"t": self.t, "value": self.value, "target": self.target, "rel_dev": self.rel_dev}


def heat_plateau(model: SpectralModel, t_range: tuple[float, float] | None = None,
                 n: int = 200) -> HeatPlateau:
    """Value of t^2 Trace(e^{-t Delta}) where it is flattest in log t.

    Small t is spoiled by the box cut-off, large t by the discrete low
    spectrum; the default search range [1/N, 2] sits between the two.
    """
    N = model.box.N
    lo, hi = t_range if t_range is not None else (1.0 / max(N, 1), 2.0)
    ts = np.geomspace(lo, hi, n)
    vals = np.array([v for _, _, v in heat_trace(model, ts)])
    slope = np.abs(np.gradient(vals, np.log(ts)))
    k = int(np.argmin(slope[1:-1])) + 1
    return HeatPlateau(float(ts[k]), float(vals[k]), math.pi**2 * model.volume())


# ---------------------------------------------------------------------------
# Dixmier trace


@dataclass
class DixmierEstimate:
    """Dixmier-trace estimate with a plateau diagnostic.

    ``drift`` is the relative change of the estimate between the window
    ending at N/sqrt(10) and the window ending at N.
    """

    value: float
    n_terms: int
    drift: float
    window_decades: float

    @property
    def plateau(self) -> bool:
        return self.drift < 0.05

    def to_dict(self) -> dict:
        return {"value": self.value, "n_terms": self.n_terms, "drift": self.drift,
                "window_decades": self.window_decades, "plateau": self.plateau}


def _slope_mean(S: np.ndarray, L: int, decades: float, n_grid: int) -> float:
    # average of dS/dlog N over a geometric grid on [L 10^-decades, L]; the
    # trapezoid sum of local slopes telescopes to a difference quotient
    lo = max(1, int(round(L / 10**decades)))
    grid = np.unique(np.geomspace(lo, L, n_grid).astype(int))
    logn = np.log(grid)
    slopes = np.diff(S[grid - 1]) / np.diff(logn)
    return float(np.sum(slopes * np.diff(logn)) / (logn[-1] - logn[0]))


def dixmier_estimate(mu, min_terms: int = 10_000, window_decades: float = 1.0,
                     n_grid: int = 200) -> DixmierEstimate:
    """Estimate lim S_N / log N, S_N = sum_{n <= N} mu_n, for a descending stream.

    The ratio itself converges like 1/log N.  Instead the local slopes
    dS_N / d log N are averaged (Cesaro, in log N) over the last
    ``window_decades`` decades of the stream; whenever S_N / log N has a
    limit, the slope average over [N_0, N] has the same limit, and the
    constant term of S_N no longer enters.
    """
    mu = np.asarray(mu, dtype=float)
    if mu.size < min_terms:
        raise ValueError(f"need at least {min_terms} eigenvalues, got {mu.size}")
    if np.any(np.diff(mu) > 1e-12 * np.abs(mu).max()):
        raise ValueError("eigenvalue stream must be sorted in descending order")
    S = np.cumsum(mu)
    L = mu.size
    value = _slope_mean(S, L, window_decades, n_grid)
    earlier = _slope_mean(S, int(L / math.sqrt(10)), window_decades, n_grid)
    # relative to S_N / log N so that a vanishing trace is measured on the right scale
    scale = max(abs(value), abs(S[-1]) / math.log(L), 1e-300)
    drift = abs(value - earlier) / scale
    return DixmierEstimate(value, int(L), float(drift), window_decades)


def lattice_stream(n_terms: int, power: float = 2.0, mass: float = 1.0) -> np.ndarray:
    """The first ``n_terms`` eigenvalues (mass + |alpha|^2)^{-power}, alpha in Z^4, descending.

    Enumerates a cube large enough to contain the n_terms smallest |alpha|^2.
    """
    # volume of the 4-ball of radius R is pi^2 R^4 / 2
    R = int(math.ceil((2 * n_terms / math.pi**2) ** 0.25)) + 2
    while True:
        r = np.arange(-R, R + 1)
        sq = r * r
        norms = (sq[:, None, None, None] + sq[None, :, None, None]
                 + sq[None, None, :, None] + sq[None, None, None, :]).ravel()
        norms = norms[norms <= R * R]
        if norms.size >= n_terms:
            norms = np.sort(norms)[:n_terms]
            return (mass + norms.astype(float)) ** (-power)
        R += 2
