"""Periodic Fourier machinery on the truncated cylinder [-Lx/2, Lx/2) x [0, 2*pi*L).

Spectral coefficients are normalized so that a constant field 1 has
coefficient 1 at (xi, n) = (0, 0), i.e. ``u_hat = fft2(u) / (Nx * Ny)``.
With this convention the L2 integral over the box is
``Lx * 2*pi*L * sum(|u_hat|**2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from .errors import AntiderivativeUndefined, DegenerateField

__all__ = [
    "Grid1D",
    "Grid2D",
    "Field2D",
    "NormReport",
    "transform",
    "dx",
    "dy",
    "dealias_mask",
    "check_zero_mean",
    "project_zero_mean",
    "l2_norm",
    "norm_hs",
    "norm_zs",
    "energy",
    "hamiltonian",
    "norm_report",
    "sobolev_ratio",
    "integrate_power",
    "harmonic",
    "harmonic_l2",
]

ZERO_MEAN_RTOL = 1e-10


def _is_pow2(n):
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid1D:
    """Uniform periodic grid on [-Lx/2, Lx/2) with ``Nx`` points."""

    Lx: float
    Nx: int

    def __post_init__(self):
        if not self.Lx > 0:
            raise ValueError(f"Lx must be positive, got {self.Lx}")
        if self.Nx < 8 or self.Nx % 2:
            raise ValueError(f"Nx must be even and >= 8, got {self.Nx}")

    @property
    def h(self) -> float:
        return self.Lx / self.Nx

    @cached_property
    def x(self) -> np.ndarray:
        return -self.Lx / 2 + self.h * np.arange(self.Nx)

    @cached_property
    def xi(self) -> np.ndarray:
        return 2 * np.pi / self.Lx * np.fft.fftfreq(self.Nx, 1.0 / self.Nx)

    def refined(self, factor: int = 2) -> "Grid1D":
        """Grid with both the box and the point count scaled by ``factor``."""
        return Grid1D(self.Lx * factor, self.Nx * factor)


@dataclass(frozen=True)
class Grid2D:
    """Discretization of R_x x (R / 2*pi*L Z)_y.

    Attributes
    ----------
    Lx : float
        Length of the periodic box standing in for the real line.
    Nx : int
        Number of x points (power of two, >= 8).
    L : float
        Transverse period parameter; y ranges over [0, 2*pi*L).
    Ny : int
        Number of y points (power of two, >= 2).
    """

    Lx: float
    Nx: int
    L: float = 1.0
    Ny: int = 16

    def __post_init__(self):
        if not self.Lx > 0 or not self.L > 0:
            raise ValueError("Lx and L must be positive")
        if self.Nx < 8 or not _is_pow2(self.Nx):
            raise ValueError(f"Nx must be a power of two >= 8, got {self.Nx}")
        if self.Ny < 2 or not _is_pow2(self.Ny):
            raise ValueError(f"Ny must be a power of two >= 2, got {self.Ny}")

    @property
    def Ly(self) -> float:
        return 2 * np.pi * self.L

    @property
    def hx(self) -> float:
        return self.Lx / self.Nx

    @property
    def hy(self) -> float:
        return self.Ly / self.Ny

    @property
    def measure(self) -> float:
        """Area of the box."""
        return self.Lx * self.Ly

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nx, self.Ny)

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_grid.x

    @cached_property
    def y(self) -> np.ndarray:
        return self.hy * np.arange(self.Ny)

    @cached_property
    def xi(self) -> np.ndarray:
        return self.x_grid.xi

    @cached_property
    def n(self) -> np.ndarray:
        """Integer transverse harmonic index in FFT order."""
        return np.fft.fftfreq(self.Ny, 1.0 / self.Ny)

    @cached_property
    def q(self) -> np.ndarray:
        """Transverse wavenumbers n / L."""
        return self.n / self.L

    @cached_property
    def x_grid(self) -> Grid1D:
        return Grid1D(self.Lx, self.Nx)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    def wavenumber_mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.xi, self.q, indexing="ij")

    def as_dict(self) -> dict:
        return {"Lx": self.Lx, "Nx": self.Nx, "L": self.L, "Ny": self.Ny}


@dataclass(frozen=True, eq=False)
class Field2D:
    """A real field on a :class:`Grid2D`, held in one of two representations.

    ``data`` is the physical array of shape ``(Nx, Ny)`` when ``spectral`` is
    False, otherwise the normalized complex Fourier coefficients in FFT order.
    The array is made read-only on construction.
    """

    grid: Grid2D
    data: np.ndarray
    spectral: bool = False
    time: float = 0.0
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        arr = np.array(self.data, dtype=complex if self.spectral else float, copy=True)
        if arr.shape != self.grid.shape:
            raise ValueError(f"data shape {arr.shape} does not match grid {self.grid.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_function(cls, grid: Grid2D, func, time: float = 0.0) -> "Field2D":
        X, Y = grid.mesh()
        return cls(grid, np.broadcast_to(func(X, Y), grid.shape), time=time)

    @classmethod
    def from_profile(cls, grid: Grid2D, profile: np.ndarray, time: float = 0.0) -> "Field2D":
        """Extend a 1D x-profile constantly in y."""
        return cls(grid, np.repeat(np.asarray(profile, float)[:, None], grid.Ny, axis=1), time=time)

    @property
    def values(self) -> np.ndarray:
        if not self.spectral:
            return self.data
        return np.real(np.fft.ifft2(self.data * (self.grid.Nx * self.grid.Ny)))

    @property
    def coefficients(self) -> np.ndarray:
        if self.spectral:
            return self.data
        return np.fft.fft2(self.data) / (self.grid.Nx * self.grid.Ny)

    def with_data(self, data, spectral=None, time=None) -> "Field2D":
        return Field2D(
            self.grid,
            data,
            self.spectral if spectral is None else spectral,
            self.time if time is None else time,
            dict(self.meta),
        )

    def physical(self) -> "Field2D":
        return self if not self.spectral else self.with_data(self.values, spectral=False)

    def to_spectral(self) -> "Field2D":
        return self if self.spectral else self.with_data(self.coefficients, spectral=True)

    def __add__(self, other):
        if isinstance(other, Field2D):
            _same_grid(self, other)
            return self.with_data(self.values + other.values, spectral=False)
        return self.with_data(self.values + other, spectral=False)

    def __sub__(self, other):
        if isinstance(other, Field2D):
            _same_grid(self, other)
            return self.with_data(self.values - other.values, spectral=False)
        return self.with_data(self.values - other, spectral=False)

    def __mul__(self, scalar):
        return self.with_data(self.data * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_data(-self.data)


def _same_grid(a: Field2D, b: Field2D):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


@dataclass(frozen=True)
class NormReport:
    l2: float
    hs: float
    zs: float
    s: float
    energy: float
    hamiltonian: float
    c: float


def transform(field: Field2D) -> Field2D:
    """Toggle between physical values and Fourier coefficients."""
    if field.spectral:
        return field.physical()
    return field.to_spectral()


def dealias_mask(grid: Grid2D) -> np.ndarray:
    """Boolean mask of modes kept by the 2/3 truncation rule."""
    jx = np.abs(np.fft.fftfreq(grid.Nx, 1.0 / grid.Nx))
    jy = np.abs(grid.n)
    return (jx[:, None] <= grid.Nx / 3) & (jy[None, :] <= grid.Ny / 3)


def check_zero_mean(coeffs: np.ndarray, rtol: float = ZERO_MEAN_RTOL) -> None:
    """Raise unless every n != 0 harmonic has (numerically) zero x-mean."""
    scale = np.sqrt(np.sum(np.abs(coeffs) ** 2))
    bad = np.abs(coeffs[0, 1:])
    if bad.size and bad.max() > rtol * max(scale, np.finfo(float).tiny):
        raise AntiderivativeUndefined(
            f"x-mean of a transverse harmonic is {bad.max():.3e}, exceeds {rtol:g} relative"
        )


def project_zero_mean(coeffs: np.ndarray) -> np.ndarray:
    out = np.array(coeffs, dtype=complex, copy=True)
    out[0, 1:] = 0.0
    return out


def _symbol_power(k: np.ndarray, order: int, nyquist_index=None) -> np.ndarray:
    """(i k)**order with the singular k=0 entry set to 0 for negative order."""
    ik = 1j * k
    if order >= 0:
        sym = ik**order
    else:
        sym = np.zeros_like(ik)
        nz = k != 0
        sym[nz] = ik[nz] ** order
    if nyquist_index is not None and order % 2:
        sym[nyquist_index] = 0.0
    return sym


def dx(field: Field2D, order: int = 1) -> Field2D:
    """Spectral x-derivative of integer ``order``; negative order is the antiderivative.

    Odd orders zero the Nyquist mode so that the output stays real. Negative
    orders require every n != 0 harmonic to have zero x-mean and drop the
    (0, 0) coefficient.
    """
    c = field.coefficients
    if order < 0:
        check_zero_mean(c)
    g = field.grid
    sym = _symbol_power(g.xi, order, g.Nx // 2)
    out = c * sym[:, None]
    res = field.with_data(out, spectral=True)
    return res if field.spectral else res.physical()


def dy(field: Field2D, order: int = 1) -> Field2D:
    g = field.grid
    sym = _symbol_power(g.q, order, g.Ny // 2)
    res = field.with_data(field.coefficients * sym[None, :], spectral=True)
    return res if field.spectral else res.physical()


def _spectral_sq_integral(coeffs, weight, grid: Grid2D) -> float:
    return float(grid.measure * np.sum(weight * np.abs(coeffs) ** 2))


def l2_norm(field: Field2D) -> float:
    if field.spectral:
        return np.sqrt(_spectral_sq_integral(field.data, 1.0, field.grid))
    g = field.grid
    return float(np.sqrt(g.hx * g.hy * np.sum(field.data**2)))


def _inverse_xi(grid: Grid2D) -> np.ndarray:
    xi = grid.xi
    inv = np.zeros_like(xi)
    inv[xi != 0] = 1.0 / xi[xi != 0]
    return inv


def norm_hs(field: Field2D, s: float) -> float:
    """Isotropic-weight H^s norm with weight 1 + |xi|^s + |n/L|^s."""
    if s == 0:
        return l2_norm(field)
    g = field.grid
    XI, Q = g.wavenumber_mesh()
    w = 1 + np.abs(XI) ** s + np.abs(Q) ** s
    return np.sqrt(_spectral_sq_integral(field.coefficients, w**2, g))


def norm_zs(field: Field2D, s: float) -> float:
    """Discrete Z^s norm with per-mode weight ``1 + |xi|^s + |n / (L xi)|^s``.

    ``s = 0`` returns the plain L2 norm. The (xi = 0, n != 0) modes must vanish;
    the (0, 0) mode carries weight 1.
    """
    if s < 0:
        raise ValueError("s must be nonnegative")
    if s == 0:
        return l2_norm(field)
    g = field.grid
    c = field.coefficients
    check_zero_mean(c)
    inv = _inverse_xi(g)
    w = 1 + np.abs(g.xi[:, None]) ** s + np.abs(inv[:, None] * g.q[None, :]) ** s
    return np.sqrt(_spectral_sq_integral(c, w**2, g))


def _pad(coeffs: np.ndarray, Mx: int, My: int) -> np.ndarray:
    """Zero-pad normalized coefficients to a finer (Mx, My) grid."""
    Nx, Ny = coeffs.shape
    out = np.zeros((Mx, My), dtype=complex)
    hx, hy = Nx // 2, Ny // 2
    c = np.array(coeffs, copy=True)
    # Split the Nyquist entries symmetrically so the padded field stays real.
    cx = np.concatenate([c[:hx], 0.5 * c[hx : hx + 1], 0.5 * c[hx : hx + 1], c[hx + 1 :]], axis=0)
    cxy = np.concatenate(
        [cx[:, :hy], 0.5 * cx[:, hy : hy + 1], 0.5 * cx[:, hy : hy + 1], cx[:, hy + 1 :]], axis=1
    )
    # cxy has shape (Nx+1, Ny+1) in the order [0..hx, -hx..-1]
    rows = np.r_[0 : hx + 1, Mx - hx : Mx]
    cols = np.r_[0 : hy + 1, My - hy : My]
    out[np.ix_(rows, cols)] = cxy
    return out


def integrate_power(field: Field2D, m: int) -> float:
    """Exact box integral of u**m for a band-limited field, via zero padding."""
    g = field.grid
    f = (m + 1) // 2 + 1
    Mx, My = f * g.Nx, f * g.Ny
    fine = _pad(field.coefficients, Mx, My)
    u = np.real(np.fft.ifft2(fine * (Mx * My)))
    return float(g.measure / (Mx * My) * np.sum(u**m))


def _quadratic_parts(field: Field2D):
    g = field.grid
    c = field.coefficients
    check_zero_mean(c)
    inv = _inverse_xi(g)
    grad = _spectral_sq_integral(c, (g.xi**2)[:, None] * np.ones(g.Ny), g)
    transverse = _spectral_sq_integral(c, (inv[:, None] * g.q[None, :]) ** 2, g)
    mass = _spectral_sq_integral(c, 1.0, g)
    return grad, transverse, mass


def energy(field: Field2D, p: int = 1) -> float:
    """Conserved energy 1/2 int(u_x^2 + (dx^-1 dy u)^2) - int u^(p+2) / ((p+1)(p+2))."""
    grad, transverse, _ = _quadratic_parts(field)
    return 0.5 * (grad + transverse) - integrate_power(field, p + 2) / ((p + 1) * (p + 2))


def hamiltonian(field: Field2D, c: float, p: int = 1) -> float:
    """Moving-frame Hamiltonian int[v_x^2 + (dx^-1 dy v)^2 + c v^2 - 2 v^(p+2)/((p+1)(p+2))]."""
    grad, transverse, mass = _quadratic_parts(field)
    return grad + transverse + c * mass - 2 * integrate_power(field, p + 2) / ((p + 1) * (p + 2))


def norm_report(field: Field2D, c: float, s: float = 1.0, p: int = 1) -> NormReport:
    return NormReport(
        l2=l2_norm(field),
        hs=norm_hs(field, s),
        zs=norm_zs(field, s),
        s=s,
        energy=energy(field, p),
        hamiltonian=hamiltonian(field, c, p),
        c=c,
    )


def sobolev_ratio(field: Field2D, p: float) -> float:
    """Ratio of the L^p norm to the anisotropic Gagliardo-Nirenberg right-hand side."""
    if not 2 <= p <= 6:
        raise ValueError("p must lie in [2, 6]")
    g = field.grid
    u = field.values
    lp = (g.hx * g.hy * np.sum(np.abs(u) ** p)) ** (1.0 / p)
    grad, transverse, mass = _quadratic_parts(field)
    factors = [
        (np.sqrt(mass), (6 - p) / (2 * p)),
        (np.sqrt(grad), (p - 2) / p),
        (np.sqrt(transverse), (p - 2) / (2 * p)),
    ]
    rhs = 1.0
    for value, exponent in factors:
        if exponent == 0:
            continue
        if value <= 1e-300:
            raise DegenerateField("a factor of the Sobolev right-hand side vanishes")
        rhs *= value**exponent
    return float(lp / rhs)


def harmonic(field: Field2D, n: int, both_signs: bool = True) -> Field2D:
    """Part of the field carried by transverse harmonics +n (and -n)."""
    c = field.coefficients
    keep = np.zeros(field.grid.Ny, bool)
    idx = field.grid.n
    keep |= idx == n
    if both_signs:
        keep |= idx == -n
    out = np.where(keep[None, :], c, 0.0)
    return field.with_data(out, spectral=True).physical()


def harmonic_l2(field: Field2D, n: int) -> float:
    """L2 norm of the +-n transverse harmonic content."""
    g = field.grid
    c = field.coefficients
    sel = np.abs(g.n) == abs(n)
    return np.sqrt(_spectral_sq_integral(c[:, sel], 1.0, g))
