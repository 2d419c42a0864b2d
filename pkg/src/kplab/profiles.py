"""Solitary-wave profiles of (g)KP-I in the moving frame and the scaling maps.

All profiles are centered at x = 0, the midpoint of the periodic box.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoxTooSmall, IncompatibleGrid
from .spectral import Field2D, Grid1D, Grid2D

TAIL_RTOL = 1e-11


@dataclass(frozen=True)
class SolitonSpec:
    p: int
    c: float

    def __post_init__(self):
        if self.p not in (1, 2, 3):
            raise ValueError(f"p must be 1, 2 or 3, got {self.p}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")

    @property
    def amplitude(self) -> float:
        return (self.c * (self.p + 1) * (self.p + 2) / 2) ** (1.0 / self.p)


def _xgrid(grid) -> Grid1D:
    return grid.x_grid if isinstance(grid, Grid2D) else grid


def gkdv_soliton(p: int, c: float, grid, order: int = 0, tail_rtol: float = TAIL_RTOL) -> np.ndarray:
    """Sample R_{c,p}(x) = A sech^(2/p)(p sqrt(c) x / 2) or one of its first three derivatives.

    ``A = (c (p+1)(p+2) / 2)^(1/p)`` solves -c R + R^(p+1)/(p+1) + R'' = 0.
    """
    spec = SolitonSpec(p, c)
    g = _xgrid(grid)
    A = spec.amplitude
    m = 2.0 / p
    b = p * np.sqrt(c) / 2
    edge = np.cosh(b * g.Lx / 2) ** (-m)
    if edge > tail_rtol:
        raise BoxTooSmall(f"soliton tail {edge:.2e} at box edge exceeds {tail_rtol:g} (Lx={g.Lx}, c={c})")
    s = 1.0 / np.cosh(b * g.x)
    t = np.tanh(b * g.x)
    sm = s**m
    if order == 0:
        return A * sm
    if order == 1:
        return -A * m * b * sm * t
    if order == 2:
        return A * m * b**2 * sm * (m - (m + 1) * s**2)
    if order == 3:
        return A * m * b**3 * sm * t * ((m + 1) * (m + 2) * s**2 - m**2)
    raise ValueError("order must be 0, 1, 2 or 3")


def kdv_soliton(c: float, grid, order: int = 0, tail_rtol: float = TAIL_RTOL) -> np.ndarray:
    """Q_c(x) = 3c sech^2(sqrt(c) x / 2) and its derivatives up to order 3."""
    return gkdv_soliton(1, c, grid, order, tail_rtol)


def spectral_derivative(values: np.ndarray, grid, order: int = 1) -> np.ndarray:
    g = _xgrid(grid)
    sym = (1j * g.xi) ** order
    if order % 2:
        sym[g.Nx // 2] = 0.0
    return np.real(np.fft.ifft(sym * np.fft.fft(values)))


def soliton_residual(profile: np.ndarray, p: int, c: float, grid) -> float:
    """Relative L2 residual of the stationary equation -c R' + R^p R' + R''' = 0."""
    R = np.asarray(profile, float)
    norm = np.linalg.norm(R)
    if norm == 0:
        return 0.0
    r1 = spectral_derivative(R, grid, 1)
    r3 = spectral_derivative(R, grid, 3)
    res = -c * r1 + R**p * r1 + r3
    return float(np.linalg.norm(res) / norm)


def soliton_field(p: int, c: float, grid: Grid2D, time: float = 0.0) -> Field2D:
    return Field2D.from_profile(grid, gkdv_soliton(p, c, grid), time=time)


def scaled_grid(grid: Grid2D, lam: float) -> Grid2D:
    return Grid2D(grid.Lx / lam, grid.Nx, grid.L / lam**2, grid.Ny)


def scale_solution(field: Field2D, lam: float, p: int = 1, target: Grid2D | None = None) -> Field2D:
    """u_lam(t, x, y) = lam^(2/p) u(lam^3 t, lam x, lam^2 y).

    The same samples are reused on the grid shrunk by ``lam`` in x and
    ``lam^2`` in y, so a snapshot at time t becomes one at time t / lam^3 and
    a moving frame of speed c becomes one of speed c lam^2.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    new_grid = scaled_grid(field.grid, lam)
    if target is not None and not _grids_match(target, new_grid):
        raise IncompatibleGrid(f"scaled grid {new_grid} does not match target {target}")
    return Field2D(new_grid, lam ** (2.0 / p) * field.values, time=field.time / lam**3, meta=dict(field.meta))


def rescale_to_speed_one(field: Field2D, c: float, p: int = 1, target: Grid2D | None = None) -> Field2D:
    """Map a speed-c moving-frame field to the speed-1 frame (transverse period grows by c)."""
    return scale_solution(field, c ** -0.5, p, target)


def _grids_match(a: Grid2D, b: Grid2D) -> bool:
    return (
        a.Nx == b.Nx
        and a.Ny == b.Ny
        and np.isclose(a.Lx, b.Lx, rtol=1e-12)
        and np.isclose(a.L, b.L, rtol=1e-12)
    )
