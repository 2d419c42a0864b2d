"""Dense Fourier-collocation discretizations of the linear operators around the soliton.

Operators act on real functions sampled on a :class:`~kplab.spectral.Grid1D`
(box centered at x = 0). Whenever the inverse derivative appears, or the
operator naturally lives on derivatives, the matrix is restricted to the
zero-x-mean subspace through an orthonormal basis ``V`` of that subspace, so
that the stored matrix is ``V.T @ full @ V``.

Growth rates follow the convention of the time evolution
``u_t + A(n) u = 0``: an eigenvalue ``-sigma`` of ``A(n)`` with ``sigma > 0``
is an exponentially growing mode. The spectrum of ``A(n)`` is symmetric
under ``lam -> -lam``, so the same ``sigma`` also appears as the decaying mode
``A(n) phi = sigma phi``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import (
    AmbiguousSpectrum,
    EigensolveFailed,
    InsufficientSamples,
    NearSingular,
    NoSignChange,
    NotACharacteristicRoot,
    OutOfRange,
)
from .io import write_profile, write_rows
from .profiles import gkdv_soliton, kdv_soliton
from .spectral import Grid1D

IMAG_TOL = 1e-6
LOCALIZATION_MASS = 0.99
REFINE_RTOL = 5e-3
BISECT_TOL = 1e-4


# -- matrix building blocks -------------------------------------------------

def symbol_matrix(grid: Grid1D, symbol: np.ndarray) -> np.ndarray:
    """Real circulant matrix of the Fourier multiplier ``symbol``."""
    col = np.fft.ifft(symbol)
    # contiguous copy: a strided real view keeps matmuls off BLAS
    return np.ascontiguousarray(sla.circulant(col).real)


def derivative_matrix(grid: Grid1D, order: int = 1) -> np.ndarray:
    """Spectral derivative matrix; odd orders zero the Nyquist mode."""
    sym = (1j * grid.xi) ** order
    if order % 2:
        sym[grid.Nx // 2] = 0.0
    return symbol_matrix(grid, sym)


def antiderivative_matrix(grid: Grid1D) -> np.ndarray:
    """Multiplier 1/(i xi) on xi != 0, zero on the mean and the Nyquist mode."""
    xi = grid.xi
    sym = np.zeros(grid.Nx, complex)
    nz = xi != 0
    sym[nz] = 1.0 / (1j * xi[nz])
    sym[grid.Nx // 2] = 0.0
    return symbol_matrix(grid, sym)


def gram_matrix(grid: Grid1D, symbol: np.ndarray) -> np.ndarray:
    """Symmetric matrix G with h * f.T @ G @ g = int f * (multiplier g) for real even symbols."""
    G = symbol_matrix(grid, np.asarray(symbol, complex))
    return 0.5 * (G + G.T)


def zero_mean_basis(n: int) -> np.ndarray:
    """Orthonormal basis (n x (n-1)) of vectors with zero sum, from a Householder reflector."""
    v = np.full(n, 1.0 / np.sqrt(n))
    v[0] -= 1.0
    H = np.eye(n) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, 1:]


def reflect(values: np.ndarray) -> np.ndarray:
    """Sample of f(-x) on the centered grid."""
    return np.roll(np.asarray(values)[::-1], 1)


# -- operator container -----------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinOp1D:
    """Dense matrix of a 1D operator, possibly restricted to a subspace.

    ``basis`` maps reduced coordinates to grid values (columns orthonormal in
    the Euclidean sense); ``None`` means the matrix acts on grid values.
    """

    grid: Grid1D
    matrix: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    basis: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_reduced(self, values: np.ndarray) -> np.ndarray:
        return values if self.basis is None else self.basis.T @ values

    def to_grid(self, coords: np.ndarray) -> np.ndarray:
        return coords if self.basis is None else self.basis @ coords

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.to_grid(self.matrix @ self.to_reduced(values))

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        try:
            if self.is_symmetric:
                return sla.eigvalsh(self.matrix)
            return sla.eigvals(self.matrix)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigensolveFailed(str(exc)) from exc

    @property
    def is_symmetric(self) -> bool:
        return self.kind in ("Mc", "Lk")

    def min_eigenvalue(self) -> float:
        try:
            w = sla.eigh(self.matrix, eigvals_only=True, subset_by_index=[0, 0])
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigensolveFailed(str(exc)) from exc
        return float(w[0])


def build_Mc(c: float, grid: Grid1D) -> LinOp1D:
    """M_c u = u'''' - ((c - Q_c) u')' + u as a symmetric matrix on grid values."""
    if not c > 0:
        raise ValueError("c must be positive")
    Q = kdv_soliton(c, grid)
    D = derivative_matrix(grid, 1)
    M = gram_matrix(grid, grid.xi**4) + D.T @ ((c - Q)[:, None] * D) + np.eye(grid.Nx)
    return LinOp1D(grid, 0.5 * (M + M.T), "Mc", {"c": c})


def min_eig_Mc(c: float, grid: Grid1D) -> float:
    return build_Mc(c, grid).min_eigenvalue()


def _bisect(f, lo: float, hi: float, tol: float) -> float:
    flo, fhi = f(lo), f(hi)
    if np.sign(flo) == np.sign(fhi) or flo == 0 and fhi == 0:
        raise NoSignChange(f"no sign change on [{lo}, {hi}]: f={flo:.3e}, {fhi:.3e}")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_cstar(grid: Grid1D, bracket=(2.0, 2.6), tol: float = BISECT_TOL) -> float:
    """Speed at which the lowest eigenvalue of M_c crosses zero."""
    return _bisect(lambda c: min_eig_Mc(c, grid), bracket[0], bracket[1], tol)


# -- characteristic roots and exact solutions ------------------------------

class CharacteristicRoots(NamedTuple):
    roots: np.ndarray
    double: bool


def characteristic_roots(nu: float) -> CharacteristicRoots:
    """Roots of mu^4 - 4 mu^2 + 3 nu^2 = 0 sorted by real part, then imaginary part."""
    if nu < 0:
        raise ValueError("nu must be nonnegative")
    disc = np.sqrt(complex(4.0 - 3.0 * nu**2))
    sq = [2.0 + disc, 2.0 - disc]
    roots = []
    for s in sq:
        r = np.sqrt(s)
        roots += [r, -r]
    roots = np.array(roots, dtype=complex)
    roots = roots[np.lexsort((roots.imag, roots.real))]
    double = bool(np.isclose(nu**2, 4.0 / 3.0, rtol=0, atol=1e-12))
    return CharacteristicRoots(roots, double)


def g_mu(mu, y, order: int = 0):
    """Exact solution e^(mu y)(mu^3 + 2 mu - 3 mu^2 tanh y) or its derivative of given order.

    Written as (a -+ b) e^(mu y) +- 2 b e^(mu y) / (1 + e^(+-2y)) on y >< 0 to
    avoid the cancellation in 1 -+ tanh y for large |y|.
    """
    y = np.asarray(y, float)
    T = np.tanh(y)
    S = 1.0 / np.cosh(y) ** 2
    a = mu**3 + 2 * mu
    b = 3 * mu**2
    tanh_derivs = [None, S, -2 * T * S, (6 * T**2 - 2) * S, 8 * T * S * (2 - 3 * T**2)]
    e = np.exp(mu * y)
    pos = y >= 0
    base = np.where(
        pos,
        (a - b) * e + 2 * b * np.exp(mu * y - np.logaddexp(0.0, 2 * y)),
        (a + b) * e - 2 * b * np.exp(mu * y - np.logaddexp(0.0, -2 * y)),
    )
    if order == 0:
        return base
    # Leibniz rule on e^(mu y) * P(y) with P = a - b tanh y
    out = mu**order * base
    for j in range(1, order + 1):
        out = out + comb(order, j) * mu ** (order - j) * e * (-b * tanh_derivs[j])
    return out


def decay_coefficient(mu):
    """Limit of e^(-mu y) g_mu(y) as y -> +infinity."""
    return mu**3 + 2 * mu - 3 * mu**2


def g_mu_residual(mu, nu: float, half_width: float = 30.0, n: int = 512) -> float:
    """Relative residual of w'''' - 4(1 - 3 sech^2 y) w'' + 3 nu^2 w for w = g_mu.

    Uses Fourier differentiation on a periodic y-window when g_mu decays at
    both ends of the window, and the closed-form derivatives otherwise.
    """
    if abs(mu**4 - 4 * mu**2 + 3 * nu**2) > 1e-10 * (1 + abs(mu) ** 4):
        raise NotACharacteristicRoot(f"mu={mu} is not a root at nu={nu}")
    grid = Grid1D(2 * half_width, n)
    y = grid.x
    w = g_mu(mu, y)
    if np.max(np.abs(w[[0, -1]])) < 1e-13 * np.max(np.abs(w)):
        sym2 = (1j * grid.xi) ** 2
        sym4 = (1j * grid.xi) ** 4
        W = np.fft.fft(w)
        w2 = np.fft.ifft(sym2 * W)
        w4 = np.fft.ifft(sym4 * W)
        if np.isrealobj(w):
            w2, w4 = np.real(w2), np.real(w4)
    else:
        w2 = g_mu(mu, y, 2)
        w4 = g_mu(mu, y, 4)
    res = w4 - 4 * (1 - 3 / np.cosh(y) ** 2) * w2 + 3 * nu**2 * w
    return float(np.linalg.norm(res) / np.linalg.norm(w))


def nu_lambda_map(c: float, lam: float) -> float:
    """nu = sqrt(16 (1 - lam) / (3 c^2))."""
    if not c > 0:
        raise OutOfRange("c must be positive")
    val = 16.0 * (1.0 - lam) / (3.0 * c**2)
    if val < 0:
        raise OutOfRange(f"(16/c^2)(1 - lam) must be nonnegative, got lam={lam}")
    return float(np.sqrt(val))


# -- L(k) and the critical wavenumber --------------------------------------

def build_Lk(p: int, k: float, grid: Grid1D) -> LinOp1D:
    """L(k) = -d/dx(-d_xx + 1 - R^p) d/dx + k^2 on zero-mean functions (speed-1 profile)."""
    R = gkdv_soliton(p, 1.0, grid)
    D = derivative_matrix(grid, 1)
    full = gram_matrix(grid, grid.xi**4) + D.T @ ((1 - R**p)[:, None] * D) + k**2 * np.eye(grid.Nx)
    V = zero_mean_basis(grid.Nx)
    M = V.T @ full @ V
    return LinOp1D(grid, 0.5 * (M + M.T), "Lk", {"p": p, "k": k}, V)


def find_k0(p: int, grid: Grid1D, tol: float = BISECT_TOL) -> float:
    """Unique k > 0 where the lowest eigenvalue of L(k) vanishes.

    L(k) - L(k') = (k^2 - k'^2) Id, so a single eigensolve of L(0) fixes the
    lowest eigenvalue on the whole k-axis; the bisection runs on that exact
    shift.
    """
    lam0 = build_Lk(p, 0.0, grid).min_eigenvalue()
    if lam0 >= 0:
        raise NoSignChange("L(0) has no negative eigenvalue")
    hi = 1.0
    while lam0 + hi**2 <= 0:
        hi *= 2
    return _bisect(lambda k: lam0 + k**2, 0.0, hi, tol)


def kernel_vector(p: int, k0: float, grid: Grid1D) -> np.ndarray:
    """Normalized eigenvector of the lowest eigenvalue of L(k0), as grid values."""
    op = build_Lk(p, k0, grid)
    w, v = sla.eigh(op.matrix, subset_by_index=[0, 0])
    chi = op.to_grid(v[:, 0])
    return chi / np.sqrt(grid.h * np.sum(chi**2))


# -- the linearized operator A(n) -------------------------------------------

def build_An(c: float, p: int, n: float, L: float, grid: Grid1D) -> LinOp1D:
    """A(n) w = w''' - c w' + (n/L)^2 dx^-1 w + (R_{c,p}^p w)' on zero-mean functions."""
    q = n / L
    R = gkdv_soliton(p, c, grid)
    D1 = derivative_matrix(grid, 1)
    D3 = derivative_matrix(grid, 3)
    Dinv = antiderivative_matrix(grid)
    full = D3 - c * D1 + q**2 * Dinv + D1 * (R**p)[None, :]
    V = zero_mean_basis(grid.Nx)
    return LinOp1D(grid, V.T @ full @ V, "A_n", {"c": c, "p": p, "n": n, "L": L}, V)


@dataclass
class SpectrumReport:
    """Eigenvalues of a nonsymmetric operator with spurious-mode verdicts."""

    eigenvalues: np.ndarray
    localized: np.ndarray
    real: np.ndarray
    eigenvectors: list = field(default_factory=list)
    grid: Grid1D | None = None
    verdict: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        verdict = self.verdict if self.verdict is not None else self.localized & self.real
        rows = [
            {
                "re": float(l.real),
                "im": float(l.imag),
                "verdict": "accepted" if v else "spurious",
                "localized": int(loc),
            }
            for l, loc, v in zip(self.eigenvalues, self.localized, verdict)
        ]
        return write_rows(path, rows)

    def write_eigenvectors(self, prefix):
        paths = []
        for i, vec in enumerate(self.eigenvectors):
            paths.append(write_profile(f"{prefix}_{i}.csv", self.grid.x, np.real(vec)))
        return paths


def _localized_mass(vec: np.ndarray, grid: Grid1D) -> float:
    w = np.abs(vec) ** 2
    inner = np.abs(grid.x) <= grid.Lx / 4
    return float(w[inner].sum() / w.sum())


def spectrum(op: LinOp1D, with_vectors: bool = True) -> SpectrumReport:
    try:
        lam, vecs = sla.eig(op.matrix)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolveFailed(str(exc)) from exc
    grid_vecs = op.to_grid(vecs) if with_vectors else None
    loc = np.array([_localized_mass(grid_vecs[:, i], op.grid) > LOCALIZATION_MASS for i in range(len(lam))])
    real = np.abs(lam.imag) <= IMAG_TOL
    rep = SpectrumReport(lam, loc, real, grid=op.grid, meta=dict(op.params, kind=op.kind))
    rep._vectors = grid_vecs
    return rep


def _candidate_modes(c, p, n, L, grid):
    """(sigma, growing, decaying) for filtered real eigenvalue pairs, largest sigma first."""
    rep = spectrum(build_An(c, p, n, L, grid))
    lam, vecs = rep.eigenvalues, rep._vectors
    ok = rep.localized & rep.real
    out = []
    for i in np.flatnonzero(ok & (lam.real > IMAG_TOL)):
        sigma = float(lam[i].real)
        # partner eigenvalue -sigma: the growing mode
        j_candidates = np.flatnonzero(ok & (np.abs(lam + sigma) <= max(1e-8, 1e-6 * sigma)))
        decaying = np.real(vecs[:, i])
        if j_candidates.size:
            growing = np.real(vecs[:, j_candidates[0]])
        else:
            growing = reflect(decaying)
        out.append((sigma, growing, decaying))
    out.sort(key=lambda t: -t[0])
    return out


def _normalize(vec: np.ndarray, grid: Grid1D) -> np.ndarray:
    vec = vec / np.sqrt(grid.h * np.sum(np.abs(vec) ** 2))
    i = np.argmax(np.abs(vec))
    return vec * np.sign(vec[i])


class GrowthMode(NamedTuple):
    sigma: float
    growing: np.ndarray | None
    decaying: np.ndarray | None


def growth_mode(c: float, p: int, n: float, L: float, grid: Grid1D, refine: bool = True) -> GrowthMode:
    """Largest filtered growth rate of A(n) with its growing and decaying eigenfunctions.

    An eigenvalue is accepted if it is real to ``IMAG_TOL``, its eigenvector
    keeps 99 % of its mass in |x| <= Lx/4 and (when ``refine``) it reappears
    within 0.5 % on the grid with Nx and Lx doubled. Returns sigma = 0 and no
    modes when nothing survives. Eigenfunctions are L2-normalized on the line.
    """
    cands = _candidate_modes(c, p, n, L, grid)
    if refine and cands:
        fine = [s for s, _, _ in _candidate_modes(c, p, n, L, grid.refined(2))]
        kept = []
        for s, g, d in cands:
            if any(abs(s - f) <= REFINE_RTOL * s for f in fine):
                kept.append((s, g, d))
        cands = kept
    if not cands:
        return GrowthMode(0.0, None, None)
    distinct = [cands[0][0]]
    for s, _, _ in cands[1:]:
        if all(abs(s - d) > REFINE_RTOL * d for d in distinct):
            distinct.append(s)
    if len(distinct) > 1 and refine:
        raise AmbiguousSpectrum(f"several real growth rates survive refinement: {distinct}")
    s, g, d = cands[0]
    return GrowthMode(s, _normalize(g, grid), _normalize(d, grid))


def growth_rate(c: float, p: int, n: float, L: float, grid: Grid1D, refine: bool = True):
    """(sigma, psi) with psi the growing mode, A(n) psi = -sigma psi."""
    m = growth_mode(c, p, n, L, grid, refine)
    return m.sigma, m.growing


def growth_rate_pencil(p: int, k: float, grid: Grid1D) -> float:
    """Cross-check: largest real sigma with -sigma U' = L(k) U at speed 1."""
    op = build_Lk(p, k, grid)
    D = op.basis.T @ derivative_matrix(grid, 1) @ op.basis
    try:
        lam, vecs = sla.eig(op.matrix, -D)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolveFailed(str(exc)) from exc
    best = 0.0
    for i in np.flatnonzero(np.isfinite(lam)):
        l = lam[i]
        if abs(l.imag) > IMAG_TOL or l.real <= IMAG_TOL:
            continue
        vec = derivative_matrix(grid, 1) @ op.to_grid(vecs[:, i])
        if _localized_mass(vec, grid) > LOCALIZATION_MASS:
            best = max(best, float(l.real))
    return best


def sigma_curve(p: int, grid: Grid1D, k_samples, refine: bool = False) -> list[tuple[float, float]]:
    """Speed-1 growth rate sigma(k) for transverse wavenumbers ``k_samples``."""
    return [(float(k), growth_rate(1.0, p, 1.0, 1.0 / k, grid, refine)[0]) for k in k_samples]


class KappaFit(NamedTuple):
    k0: float
    kappa: float
    linear: float
    sigma_max: float
    residual: float


def fit_kappa(curve) -> KappaFit:
    """Least-squares fit k = k0 - b sigma - kappa sigma^2 - d sigma^4 on samples with sigma > 0.

    Eigenvalues come in pairs +-sigma, so k(sigma) is even and sigma^4 is the
    first correction; the linear coefficient b is kept to test k'(0) = 0.
    ``residual`` is the RMS misfit in k.
    """
    pts = np.array([(k, s) for k, s in curve if s > 0], float)
    if len(pts) < 5:
        raise InsufficientSamples(f"need at least 5 samples with sigma > 0, have {len(pts)}")
    k, s = pts[:, 0], pts[:, 1]
    A = np.column_stack([np.ones_like(s), -s, -(s**2), -(s**4)])
    coef, *_ = np.linalg.lstsq(A, k, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - k) ** 2)))
    return KappaFit(float(coef[0]), float(coef[2]), float(coef[1]), float(s.max()), resid)


def resolvent_solve(op: LinOp1D, z: complex, rhs: np.ndarray, check_spectrum: bool = True) -> np.ndarray:
    """Solve (op - z) w = rhs; rhs and w are grid values."""
    if check_spectrum:
        lam = op.eigenvalues
        if np.min(np.abs(lam - z)) <= 1e-6:
            raise NearSingular(f"z={z} lies within 1e-6 of the spectrum")
    b = op.to_reduced(np.asarray(rhs))
    if op.basis is not None:
        lost = np.linalg.norm(op.to_grid(b) - rhs)
        if lost > 1e-8 * max(np.linalg.norm(rhs), 1e-300):
            raise ValueError("rhs has a component outside the operator's subspace (nonzero mean)")
    Mz = op.matrix - z * np.eye(op.dim)
    try:
        w = sla.solve(Mz, b)
    except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
        raise NearSingular(str(exc)) from exc
    r = np.linalg.norm(Mz @ w - b)
    if r > 1e-10 * max(np.linalg.norm(b), 1e-300):
        raise NearSingular(f"resolvent residual {r:.2e} exceeds tolerance")
    return op.to_grid(w)
