"""Second variation of the Hamiltonian about the soliton and its coercivity constants.

Per transverse wavenumber k the form is

    B_k(f, g) = 2 int [f' g' + k^2 (dx^-1 f)(dx^-1 g) + c f g - R^p f g] dx,

with ``B_0`` the k = 0 member (no antiderivative). Coercivity constants are
the smallest generalized eigenvalues of the form against its natural metric,
so they are the sharp constants of the discretized inequalities.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import AntiderivativeUndefined, EigensolveFailed
from .io import write_rows
from .linops import _bisect, gram_matrix, zero_mean_basis
from .profiles import gkdv_soliton
from .spectral import Field2D, Grid1D, check_zero_mean

__all__ = [
    "FormSpec",
    "B0c",
    "Bkc",
    "Q_form",
    "B_form",
    "transverse_profiles",
    "coercivity_B0",
    "coercivity_Bk",
    "coercivity_threshold",
    "coercivity_table",
]


@dataclass(frozen=True)
class FormSpec:
    c: float
    k: float
    grid: Grid1D
    p: int = 1

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")


def _hat(f, grid: Grid1D):
    return np.fft.fft(f) / grid.Nx


def _inv_xi2(grid: Grid1D):
    xi = grid.xi
    out = np.zeros_like(xi)
    out[xi != 0] = 1.0 / xi[xi != 0] ** 2
    return out


def _require_zero_mean(fh, gh, scale):
    for h in (fh, gh):
        if abs(h[0]) > 1e-10 * max(scale, 1e-300):
            raise AntiderivativeUndefined("B_k with k != 0 needs zero-mean arguments")


def Bkc(f, g, c: float, k: float, grid: Grid1D, p: int = 1) -> float:
    """B_k^c(f, g); complex arguments enter as Re int conj(f) g."""
    fh, gh = _hat(f, grid), _hat(g, grid)
    if k != 0:
        _require_zero_mean(fh, gh, np.sqrt(np.sum(np.abs(fh) ** 2) + np.sum(np.abs(gh) ** 2)))
    R = gkdv_soliton(p, c, grid)
    xi2 = grid.xi**2
    spec = np.sum(np.conj(fh) * gh * (xi2 + k**2 * _inv_xi2(grid) + c))
    phys = grid.h * np.sum(np.conj(f) * g * R**p)
    return float(2 * np.real(grid.Lx * spec - phys))


def B0c(f, g, c: float, grid: Grid1D, p: int = 1) -> float:
    return Bkc(f, g, c, 0.0, grid, p)


def Q_form(u, c: float, grid: Grid1D) -> float:
    """int [u''^2 + u^2 + (c - Q_c) u'^2], the form of M_c."""
    uh = _hat(u, grid)
    xi = grid.xi
    Q = gkdv_soliton(1, c, grid)
    sym1 = 1j * xi
    sym1[grid.Nx // 2] = 0.0
    du = np.real(np.fft.ifft(sym1 * uh * grid.Nx))
    spec = grid.Lx * np.sum(np.abs(uh) ** 2 * (xi**4 + 1))
    return float(spec + grid.h * np.sum((c - Q) * du**2))


def transverse_profiles(w: Field2D) -> dict[int, np.ndarray]:
    """Partial Fourier transform in y: w_hat(x, n) = (1 / 2 pi L) int e^(-i n y / L) w dy."""
    coeff = np.fft.fft(w.values, axis=1) / w.grid.Ny
    return {int(n): coeff[:, j] for j, n in enumerate(w.grid.n)}


def B_form(w: Field2D, c: float, p: int = 1) -> float:
    """B^c(w, w) = 2 int int [w_x^2 + (dx^-1 dy w)^2 + c w^2 - R^p w^2] on the 2D box."""
    g = w.grid
    coeffs = w.coefficients
    check_zero_mean(coeffs)
    xi = g.xi[:, None]
    inv = np.zeros_like(g.xi)
    inv[g.xi != 0] = 1.0 / g.xi[g.xi != 0]
    weight = xi**2 + (inv[:, None] * g.q[None, :]) ** 2 + c
    spec = g.measure * np.sum(weight * np.abs(coeffs) ** 2)
    R = gkdv_soliton(p, c, g.x_grid)
    phys = g.hx * g.hy * np.sum(R[:, None] ** p * w.values**2)
    return float(2 * (spec - phys))


def _form_matrices(c: float, k: float, grid: Grid1D, p: int):
    R = gkdv_soliton(p, c, grid)
    K1 = gram_matrix(grid, grid.xi**2)
    Km1 = gram_matrix(grid, _inv_xi2(grid))
    B = 2 * (K1 + k**2 * Km1 + np.diag(c - R**p))
    return B, K1, Km1


def _min_generalized(B, G) -> float:
    try:
        w = sla.eigh(0.5 * (B + B.T), 0.5 * (G + G.T), eigvals_only=True, subset_by_index=[0, 0])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolveFailed(str(exc)) from exc
    return float(w[0])


def coercivity_B0(c: float, grid: Grid1D, p: int = 1, project: bool = True) -> float:
    """min B_0^c(g, g) / (|g'|^2 + c |g|^2) over g orthogonal to R and R' (when ``project``)."""
    B, K1, _ = _form_matrices(c, 0.0, grid, p)
    G = K1 + c * np.eye(grid.Nx)
    if project:
        R = gkdv_soliton(p, c, grid)
        dR = gkdv_soliton(p, c, grid, order=1)
        Qfull, _ = np.linalg.qr(np.column_stack([R, dR]), mode="complete")
        P = Qfull[:, 2:]
        B, G = P.T @ B @ P, P.T @ G @ P
    return _min_generalized(B, G)


def coercivity_Bk(c: float, k: float, grid: Grid1D, p: int = 1) -> float:
    """min B_k^c(f, f) / (|f|_H1^2 + k^2 |dx^-1 f|^2) over zero-mean f."""
    if k == 0:
        raise ValueError("k must be nonzero; use coercivity_B0")
    B, K1, Km1 = _form_matrices(c, k, grid, p)
    G = K1 + np.eye(grid.Nx) + k**2 * Km1
    V = zero_mean_basis(grid.Nx)
    return _min_generalized(V.T @ B @ V, V.T @ G @ V)


def coercivity_threshold(grid: Grid1D, k: float = 1.0, bracket=(2.0, 2.6), p: int = 1, tol: float = 1e-4) -> float:
    """Speed where the B_k coercivity constant changes sign."""
    return _bisect(lambda c: coercivity_Bk(c, k, grid, p), bracket[0], bracket[1], tol)


def coercivity_table(cs, ks, grid: Grid1D, p: int = 1, path=None) -> list[dict]:
    """Rows (c, k, constant); k = 0 uses the projected B_0 constant."""
    rows = []
    for c in cs:
        for k in ks:
            val = coercivity_B0(c, grid, p) if k == 0 else coercivity_Bk(c, k, grid, p)
            rows.append({"c": float(c), "k": float(k), "constant": val})
    if path is not None:
        write_rows(path, rows)
    return rows
