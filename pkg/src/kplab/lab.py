"""End-to-end experiments: orbital stability, transverse instability and the stable manifold.

All runs work in the frame moving with the soliton, on a :class:`Grid2D`
whose transverse period is ``2 pi L``. Each run returns a
:class:`~kplab.report.RunReport` with its time series, fitted quantities and
named checks; ``report.passed`` is the conjunction of the checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb
from typing import Callable

import numpy as np

from .errors import FloorTooHigh, KPLabError, NewtonDiverged, WindowTooShort
from .evolve import (
    EvolveConfig,
    SnapshotSeries,
    default_dt,
    evolve,
    evolve_linearized,
    linearized_time_derivative,
    time_derivative,
)
from .linops import build_An, find_k0, growth_mode, reflect, resolvent_solve
from .profiles import gkdv_soliton
from .report import RunReport, fit_exponential
from .spectral import (
    Field2D,
    Grid1D,
    Grid2D,
    hamiltonian,
    harmonic_l2,
    l2_norm,
    norm_hs,
    norm_zs,
    project_zero_mean,
)

R2_MIN = 0.99
MIN_FIT_SAMPLES = 20
NEWTON_MAX_ITER = 50


# -- modulation ---------------------------------------------------------------


def shift_x(u: Field2D, beta: float) -> Field2D:
    """u(x + beta, y) by a spectral phase shift."""
    g = u.grid
    ph = np.exp(1j * g.xi * beta)[:, None]
    vals = np.real(np.fft.ifft(np.fft.fft(u.values, axis=0) * ph, axis=0))
    return Field2D(g, vals, time=u.time, meta=dict(u.meta))


def _mean_profile_hat(u: Field2D) -> np.ndarray:
    """Coefficients of the y-average in x (fft / Nx)."""
    return np.fft.fft(u.values.mean(axis=1)) / u.grid.Nx


def _correlation(a_hat, b_hat, weight, xi, scale):
    """beta -> scale * Re sum weight a conj(b) e^{i xi beta} and its first two derivatives."""
    coef = weight * a_hat * np.conj(b_hat)

    def f(beta, order=0):
        return scale * float(np.real(np.sum((1j * xi) ** order * coef * np.exp(1j * xi * beta))))

    def grid_values(Nx):
        # values at beta_j = j h, j = 0..Nx-1
        return scale * np.real(np.fft.ifft(coef) * Nx)

    return f, grid_values


def _wrap(beta: float, Lx: float) -> float:
    return (beta + Lx / 2) % Lx - Lx / 2


@dataclass
class ModulationState:
    gamma: float
    residual: float
    iterations: int
    remainder: Field2D | None = None


def modulation_fit(u: Field2D, c: float, p: int = 1, tol: float = 1e-10) -> ModulationState:
    """Shift gamma with int int u(x + gamma, y) R'(x) dx dy = 0, by Newton from the correlation peak.

    The remainder is w = u(. + gamma, .) - R.
    """
    g = u.grid
    R = gkdv_soliton(p, c, g)
    dR = gkdv_soliton(p, c, g, order=1)
    xi = g.xi
    scale = g.Lx * g.Ly
    a = _mean_profile_hat(u)
    C, C_grid = _correlation(a, np.fft.fft(R) / g.Nx, 1.0, xi, scale)
    F, _ = _correlation(a, np.fft.fft(dR) / g.Nx, 1.0, xi, scale)
    j = int(np.argmax(C_grid(g.Nx)))
    beta = _wrap(j * g.hx, g.Lx)
    target = tol * l2_norm(u) * math.sqrt(g.Ly * g.hx * np.sum(dR**2))
    for it in range(1, NEWTON_MAX_ITER + 1):
        val = F(beta)
        der = F(beta, 1)
        if der == 0 or not np.isfinite(der):
            raise NewtonDiverged("vanishing derivative of the orthogonality functional")
        beta = beta - val / der
        res = abs(F(beta))
        if res <= target:
            w = shift_x(u, beta) - R[:, None]
            return ModulationState(float(beta), float(res), it, w)
    raise NewtonDiverged(f"no convergence in {NEWTON_MAX_ITER} iterations (|F| = {res:.3e})")


def _distance_weight(g: Grid2D, norm: str) -> np.ndarray:
    if norm == "L2":
        return np.ones(g.Nx)
    if norm == "Z1":
        return (1 + np.abs(g.xi)) ** 2
    raise ValueError("norm must be 'Z1' or 'L2'")


def _projected(f: Field2D) -> Field2D:
    """Drop roundoff in the (xi = 0, n != 0) modes, which differences of O(1) fields pick up."""
    return f.with_data(project_zero_mean(f.coefficients), spectral=True)


def _norm(f: Field2D, norm: str) -> float:
    return norm_zs(_projected(f), 1) if norm == "Z1" else l2_norm(f)


def orbital_distance(u: Field2D, c: float, norm: str = "Z1", p: int = 1, with_shift: bool = False):
    """inf over a of ||u(x + a, y) - R(x)|| by a grid scan of the cross term and a Newton polish.

    The soliton is y-independent, so only the n = 0 harmonic enters the cross
    term; the infimum is attained where that weighted correlation peaks.
    """
    g = u.grid
    R = gkdv_soliton(p, c, g)
    W = _distance_weight(g, norm)
    f, grid_vals = _correlation(_mean_profile_hat(u), np.fft.fft(R) / g.Nx, W, g.xi, g.Lx * g.Ly)
    j = int(np.argmax(grid_vals(g.Nx)))
    coarse = _wrap(j * g.hx, g.Lx)
    beta = coarse
    for _ in range(NEWTON_MAX_ITER):
        d2 = f(beta, 2)
        if d2 >= 0:
            beta = coarse
            break
        step = f(beta, 1) / d2
        beta -= step
        if abs(step) < 1e-14 * g.Lx:
            break
    if abs(beta - coarse) > g.hx:
        beta = coarse
    dist = _norm(shift_x(u, beta) - R[:, None], norm)
    return (dist, beta) if with_shift else dist


# -- helpers ------------------------------------------------------------------


def _grid1d(grid: Grid2D) -> Grid1D:
    return grid.x_grid


def transverse_field(grid: Grid2D, profile: np.ndarray, n: int) -> Field2D:
    """profile(x) cos(n y / L)."""
    return Field2D(grid, np.asarray(profile)[:, None] * np.cos(n * grid.y / grid.L)[None, :])


def _unit(f: Field2D) -> Field2D:
    return f * (1.0 / l2_norm(f))


def choose_n0(c: float, p: int, grid: Grid2D, refine: bool = True):
    """Most unstable transverse harmonic (ties to the smaller n) and its growth mode."""
    g1 = _grid1d(grid)
    best = (0, None)
    for n in range(1, grid.Ny // 3 + 1):
        mode = growth_mode(c, p, n, grid.L, g1, refine)
        if mode.sigma > 0 and (best[1] is None or mode.sigma > best[1].sigma * (1 + 1e-9)):
            best = (n, mode)
        if mode.sigma == 0 and best[1] is not None:
            break
    if best[1] is None:
        raise KPLabError(f"no unstable transverse harmonic at c={c}, p={p}, L={grid.L}")
    return best


def _monitor_cadence(dt: float, every: float) -> int:
    return max(1, int(round(every / dt)))


def _fit_check(report: RunReport, key: str, fit: dict, target: float, rtol: float, sign: float = 1.0):
    rate = sign * fit["rate"]
    report.fits[key] = dict(fit, rate=rate, target=target)
    ok_r2 = report.check(f"{key}_r2", fit["r2"] >= R2_MIN, r2=fit["r2"])
    report.check(
        f"{key}_matches", ok_r2 and abs(rate - target) <= rtol * abs(target), rate=rate, target=target, rtol=rtol
    )
    if not ok_r2:
        report.meta.setdefault("inconclusive", []).append(key)


# -- orbital stability --------------------------------------------------------


def stability_perturbation(c: float, p: int, grid: Grid2D, kind: str = "transverse", n: int = 1) -> Field2D:
    """Unit-L2 perturbation: R'(x) cos(n y/L) ("transverse") or the growing mode ("eigenmode")."""
    if kind == "transverse":
        prof = gkdv_soliton(p, c, grid, order=1)
    elif kind == "eigenmode":
        mode = growth_mode(c, p, n, grid.L, _grid1d(grid))
        if mode.growing is None:
            raise KPLabError(f"harmonic {n} is stable at c={c}")
        prof = mode.growing
    else:
        raise ValueError("kind must be 'transverse' or 'eigenmode'")
    return _unit(transverse_field(grid, prof, n))


def run_stability(
    c: float,
    delta: float,
    T: float,
    grid: Grid2D,
    p: int = 1,
    kind: str = "transverse",
    n: int = 1,
    l2_match: bool = False,
    dt: float | None = None,
    sample_every: float = 0.25,
    tube: float = 5.0,
) -> RunReport:
    """Evolve R + delta P and track the orbital distance to the soliton family.

    Checks that sup_t dist_Z1 <= tube * ||delta P||_Z1. With ``l2_match`` the
    data is rescaled to the L2 norm of R and the ratio |alpha| / ||w||^2 of
    the decomposition w = alpha R + w1 is recorded.
    """
    R = gkdv_soliton(p, c, grid)
    Rf = Field2D.from_profile(grid, R)
    P = stability_perturbation(c, p, grid, kind, n)
    u0 = Rf + P * delta
    if l2_match:
        u0 = u0 * (l2_norm(Rf) / l2_norm(u0))
    pert_z1 = norm_zs(u0 - Rf, 1)
    H0 = hamiltonian(Rf, c, p)
    R_sq = l2_norm(Rf) ** 2
    step = dt or default_dt(u0, p)
    cfg = EvolveConfig(p=p, c=c, dt=step, T_final=T, monitor_every=_monitor_cadence(step, sample_every))

    def monitor(t, u):
        out = {
            "distance_z1": orbital_distance(u, c, "Z1", p),
            "distance_l2": orbital_distance(u, c, "L2", p),
            "hamiltonian_gap": hamiltonian(u, c, p) - H0,
        }
        try:
            mod = modulation_fit(u, c, p)
            w = mod.remainder
            w_sq = l2_norm(w) ** 2
            alpha = float(np.sum(w.values * R[:, None]) * grid.hx * grid.hy) / R_sq
            out.update(gamma=mod.gamma, alpha=alpha, w_l2=math.sqrt(w_sq), alpha_ratio=abs(alpha) / w_sq if w_sq else 0.0)
        except NewtonDiverged:
            out.update(gamma=np.nan, alpha=np.nan, w_l2=np.nan, alpha_ratio=np.nan)
        return out

    _, rep = evolve(u0, cfg, [monitor], name="stability")
    rep.config.update({"delta": delta, "kind": kind, "n": n, "l2_match": l2_match, "tube": tube})
    rep.meta["config_hash"] = _hash(rep.config, grid)
    d = rep.column("distance_z1")
    sup = float(np.max(d))
    exit_idx = np.flatnonzero(d > tube * pert_z1)
    rep.fits.update(
        sup_distance_z1=sup,
        initial_perturbation_z1=pert_z1,
        sup_ratio=sup / pert_z1 if pert_z1 else np.nan,
        tube_exit_time=float(rep.t[exit_idx[0]]) if exit_idx.size else None,
    )
    rep.check("tube", sup <= tube * pert_z1, sup=sup, bound=tube * pert_z1)
    if l2_match:
        ratios = rep.column("alpha_ratio")
        ratios = ratios[np.isfinite(ratios) & (rep.column("w_l2") > 0)]
        if ratios.size:
            rep.fits["alpha_K"] = float(np.max(ratios))
            rep.fits["alpha_K_spread"] = float(np.max(ratios) / max(np.min(ratios), 1e-300))
    return rep


def _hash(config: dict, grid: Grid2D) -> str:
    from .report import content_hash

    return content_hash({"config": config, "grid": grid.as_dict()})


# -- instability --------------------------------------------------------------


def _escape_time(t, a, eta):
    idx = np.flatnonzero(a >= eta)
    if not idx.size:
        return None
    i = idx[0]
    if i == 0:
        return float(t[0])
    la, lb = math.log(a[i - 1]), math.log(a[i])
    w = (math.log(eta) - la) / (lb - la)
    return float(t[i - 1] + w * (t[i] - t[i - 1]))


def run_instability(
    c: float,
    delta: float,
    T: float,
    grid: Grid2D,
    p: int = 1,
    eta: float = 1.0,
    n0: int | None = None,
    backward: bool = False,
    dt: float | None = None,
    sample_every: float = 0.05,
    window=(2.0, 0.1),
    rtol: float = 0.05,
) -> RunReport:
    """Evolve R + delta psi cos(n0 y/L) and fit the growth of the n0 harmonic.

    The perturbation has unit L2 norm, so the monitored n0-harmonic L2
    amplitude starts at delta. The rate is fitted on log amplitude over the
    window ``[window[0] * delta, window[1]]``; the escape time is when the
    amplitude first reaches ``eta``. With ``backward`` the reflected data
    R + delta psi(-x) cos(n0 y/L) is integrated towards negative times.
    """
    g1 = _grid1d(grid)
    if n0 is None:
        n0, mode = choose_n0(c, p, grid)
    else:
        mode = growth_mode(c, p, n0, grid.L, g1)
    sigma = mode.sigma
    R = gkdv_soliton(p, c, grid)
    prof = reflect(mode.growing) if backward else mode.growing
    P = _unit(transverse_field(grid, prof, n0))
    u0 = Field2D.from_profile(grid, R) + P * delta
    step = dt or default_dt(u0, p)
    cfg = EvolveConfig(p=p, c=c, dt=step, T_final=T, monitor_every=_monitor_cadence(step, sample_every))
    others = [m for m in range(1, grid.Ny // 2 + 1) if m != n0]

    def monitor(t, u):
        a = harmonic_l2(u, n0)
        rest = sum(harmonic_l2(u, m) ** 2 for m in others)
        return {"amplitude": a, "share": a**2 / (a**2 + rest) if a > 0 else 0.0}

    def stop(rep):
        return rep.series["amplitude"][-1] >= 1.5 * eta

    _, rep = evolve(u0, cfg, [monitor], name="instability", backward=backward, stop=stop)
    rep.config.update({"delta": delta, "eta": eta, "n0": n0, "sigma": sigma, "window": list(window)})
    rep.meta["config_hash"] = _hash(rep.config, grid)
    t = np.abs(rep.t)
    a = rep.column("amplitude")
    # fit only up to the first exit from the window's upper edge
    first_top = np.flatnonzero(a > window[1])
    limit = first_top[0] if first_top.size else len(a)
    sel = np.zeros(len(a), bool)
    sel[:limit] = a[:limit] >= window[0] * delta
    if sel.sum() < MIN_FIT_SAMPLES:
        raise WindowTooShort(f"fit window has {int(sel.sum())} samples, need {MIN_FIT_SAMPLES}")
    fit = fit_exponential(t, a, sel)
    _fit_check(rep, "growth", fit, sigma, rtol)
    share = rep.column("share")[sel]
    rep.fits["min_share"] = float(share.min())
    rep.check("harmonic_share", share.min() >= 0.9, min_share=float(share.min()))
    rep.fits["escape_time"] = _escape_time(t, a, eta)
    rep.check("escaped", rep.fits["escape_time"] is not None)
    return rep


# -- approximate solution -----------------------------------------------------


def _poly_power_coeffs(terms: dict[int, np.ndarray], power: int, order: int) -> dict[int, np.ndarray]:
    """Coefficients of delta^k, k <= order, in (sum_j delta^j terms[j])^power (terms[0] included)."""
    result = {0: np.ones_like(terms[0])}
    for _ in range(power):
        nxt = {}
        for i, a in result.items():
            for j, b in terms.items():
                if i + j <= order:
                    nxt[i + j] = nxt.get(i + j, 0) + a * b
        result = nxt
    return result


@dataclass
class ApproxSolution:
    """u_ap(t) = R + sum_{k=1}^M delta^k e^{-k sigma t} w_k on a 2D grid."""

    c: float
    p: int
    M: int
    delta: float
    sigma: float
    n0: int
    grid: Grid2D
    R: np.ndarray
    w: dict = field(default_factory=dict)
    psi: np.ndarray | None = None
    dealias: bool = True

    def field(self, t: float = 0.0) -> Field2D:
        vals = np.repeat(self.R[:, None], self.grid.Ny, axis=1).astype(float)
        for k, wk in self.w.items():
            vals = vals + self.delta**k * math.exp(-k * self.sigma * t) * wk
        return Field2D(self.grid, vals, time=t)

    def time_derivative(self, t: float = 0.0) -> Field2D:
        vals = np.zeros(self.grid.shape)
        for k, wk in self.w.items():
            vals = vals - k * self.sigma * self.delta**k * math.exp(-k * self.sigma * t) * wk
        return Field2D(self.grid, vals, time=t)

    def residual(self, t: float = 0.0) -> Field2D:
        """Full-equation residual u_t + A u + dx(u^(p+1))/(p+1) of u_ap at time t."""
        u = self.field(t)
        return self.time_derivative(t) - time_derivative(u, self.c, self.p, self.dealias)

    def harmonics(self, k: int, rtol: float = 1e-12) -> set[int]:
        coeff = np.fft.fft(self.w[k], axis=1)
        mass = np.sum(np.abs(coeff) ** 2, axis=0)
        n = self.grid.n
        return {int(n[j]) for j in np.flatnonzero(mass > rtol * mass.max())}

    @property
    def w1_field(self) -> Field2D:
        return Field2D(self.grid, self.w[1])


def build_uap(
    c: float, p: int, M: int, delta: float, grid: Grid2D, n0: int | None = None, dealias: bool = True
) -> ApproxSolution:
    """Approximate solution converging to R at rate sigma, built order by order.

    w_1 = phi(x) cos(n0 y/L) with A(n0) phi = sigma phi (the decaying mode,
    unit L2 norm on the line). For k >= 2, per transverse harmonic m,
    w_k = -(A(m) - k sigma)^-1 dx F_k with F_k the delta^k coefficient of
    the nonlinearity evaluated on the lower orders.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    g1 = _grid1d(grid)
    if n0 is None:
        n0, mode = choose_n0(c, p, grid)
    else:
        mode = growth_mode(c, p, n0, grid.L, g1)
    sigma = mode.sigma
    R = gkdv_soliton(p, c, grid)
    ap = ApproxSolution(c, p, M, delta, sigma, n0, grid, R, psi=mode.growing, dealias=dealias)
    ap.w[1] = transverse_field(grid, mode.decaying, n0).values
    xi = g1.xi.copy()
    xi[g1.Nx // 2] = 0.0
    ops: dict[int, object] = {}
    for k in range(2, M + 1):
        terms = {0: np.repeat(R[:, None], grid.Ny, axis=1)}
        terms.update({j: ap.w[j] for j in range(1, k)})
        Fk = _poly_power_coeffs(terms, p + 1, k).get(k, 0) / (p + 1)
        dF = np.real(np.fft.ifft(1j * xi[:, None] * np.fft.fft(Fk, axis=0), axis=0))
        dF_y = np.fft.fft(dF, axis=1)
        wk_y = np.zeros_like(dF_y)
        scale = np.max(np.abs(dF_y))
        for j, m in enumerate(grid.n):
            if np.max(np.abs(dF_y[:, j])) <= 1e-14 * scale:
                continue
            am = abs(int(m))
            if am not in ops:
                ops[am] = build_An(c, p, am, grid.L, g1)
            rhs = -dF_y[:, j]
            rhs = rhs - rhs.mean()
            wk_y[:, j] = resolvent_solve(ops[am], k * sigma, rhs)
        ap.w[k] = np.real(np.fft.ifft(wk_y, axis=1))
    return ap


# -- Picard refinement ----------------------------------------------------------


@dataclass
class PicardResult:
    """Corrected data v(0) and the t = 0 residual norms (v = 0 first, then per iteration)."""

    v0: Field2D
    residuals: list
    residuals_h2: list
    horizon: float
    dt: float


def _combined_residual(ap: ApproxSolution, v0: Field2D, v_t: Field2D) -> Field2D:
    """Full-equation residual at t=0 of u_ap + v given v and v_t."""
    u = ap.field(0.0) + v0
    ut = ap.time_derivative(0.0) + v_t
    return ut - time_derivative(u, ap.c, ap.p, ap.dealias)


def _effective_coefficient(uap_vals: np.ndarray, v_vals: np.ndarray, p: int) -> np.ndarray:
    """a with ((u+v)^(p+1) - u^(p+1)) / (p+1) = a v."""
    return sum(comb(p + 1, j + 1) * uap_vals ** (p - j) * v_vals**j for j in range(p + 1)) / (p + 1)


def picard_refine(
    ap: ApproxSolution,
    T_horizon: float | None = None,
    iterations: int = 1,
    dt: float | None = None,
    store_every: int = 2,
) -> PicardResult:
    """Correction v(0) so that u_ap + v solves the equation, by backward linear solves.

    Iteration n+1 integrates v_t + A v + dx(u_ap^p v) + (transport by v_n) + R = 0
    from v(T_horizon) = 0 down to t = 0, R being the residual of u_ap. For
    p = 1 the transport term is v_n v_x; for p > 1 the exact nonlinearity is
    written as dx(a(u_ap, v_n) v). Residuals (H2 norm at t = 0) are returned
    for v = 0 and after every iteration, in L2 and H2; v_t(0) is taken from the linear
    equation, since the backward solve is converged in dt far below the
    residual while a finite difference in time cannot resolve the dispersive
    phases.
    """
    g = ap.grid
    if T_horizon is None:
        T_horizon = 6.0 / ap.sigma
    if T_horizon < 3.0 / ap.sigma:
        raise ValueError("T_horizon must be at least 3 / sigma")
    step = dt or default_dt(ap.field(0.0), ap.p)
    n_steps = max(1, int(math.ceil(T_horizon / step - 1e-9)))
    n_steps += -n_steps % store_every
    step = T_horizon / n_steps
    cfg = EvolveConfig(p=ap.p, c=ap.c, dt=step, T_final=T_horizon, monitor_every=0, dealias=ap.dealias)
    r0 = ap.residual(0.0)
    residuals, residuals_h2 = [l2_norm(r0)], [norm_hs(r0, 2)]
    forcing = lambda t: ap.residual(t).values  # noqa: E731
    uap_vals = lambda t: ap.field(t).values  # noqa: E731
    zero = Field2D(g, np.zeros(g.shape), time=T_horizon)
    v_series = None
    states = []
    for _ in range(iterations):
        if v_series is None:
            kw = {"background": uap_vals, "transport": None, "coefficient": False}
        elif ap.p == 1:
            kw = {"background": uap_vals, "transport": v_series, "coefficient": False}
        else:
            vs = v_series
            kw = {
                "background": lambda t, vs=vs: _effective_coefficient(uap_vals(t), vs(t), ap.p),
                "transport": None,
                "coefficient": True,
            }
        _, _, hist = evolve_linearized(
            zero, config=cfg, forcing=forcing, backward=True, store_every=store_every, **kw
        )
        states = sorted(hist, key=lambda s: s[0])
        v_t = linearized_time_derivative(states[0][1], 0.0, config=cfg, forcing=forcing, **kw)
        res = _combined_residual(ap, states[0][1], v_t)
        residuals.append(l2_norm(res))
        residuals_h2.append(norm_hs(res, 2))
        v_series = SnapshotSeries([s[0] for s in states], [s[1].values for s in states])
    v0 = states[0][1] if states else Field2D(g, np.zeros(g.shape))
    return PicardResult(Field2D(g, v0.values), residuals, residuals_h2, T_horizon, step)


# -- stable manifold ------------------------------------------------------------


def _decay_window(t, d, floor_factor: float = 10.0):
    j = int(np.argmin(d))
    floor = float(d[j])
    sel = (d >= floor_factor * floor) & (np.arange(len(d)) <= j)
    return floor, j, sel


def run_stable_manifold(
    c: float,
    p: int,
    M: int,
    delta: float,
    T: float,
    grid: Grid2D,
    picard_iterations: int = 1,
    T_horizon: float | None = None,
    dt: float | None = None,
    sample_every: float = 0.1,
    rtol: float = 0.10,
    reverse_check: bool = False,
    n0: int | None = None,
) -> RunReport:
    """Evolve u_ap(0) + v(0) and fit the exponential approach to R.

    d(t) = ||u(t) - R|| is recorded in H2 and Z1. The floor is min_t d; the
    fit window is d >= 10 floor before the minimum, and never below three
    times the L2 drift of the solver observed before the floor. With ``reverse_check``
    the reflected initial data is also evolved forward, which follows the
    solution backwards in time and must grow at rate sigma.
    """
    ap = build_uap(c, p, M, delta, grid, n0)
    pic = None
    v0 = Field2D(grid, np.zeros(grid.shape))
    if picard_iterations > 0:
        pic = picard_refine(ap, T_horizon, picard_iterations, dt)
        v0 = pic.v0
    u0 = ap.field(0.0) + v0
    Rf = Field2D.from_profile(grid, ap.R)
    step = dt or default_dt(u0, p)
    cfg = EvolveConfig(p=p, c=c, dt=step, T_final=T, monitor_every=_monitor_cadence(step, sample_every))

    def monitor(t, u):
        diff = _projected(u - Rf)
        return {
            "d_h2": norm_hs(diff, 2),
            "d_z1": norm_zs(diff, 1),
            "harmonic": harmonic_l2(u, ap.n0),
            "l2": l2_norm(u),
        }

    _, rep = evolve(u0, cfg, [monitor], name="stable_manifold")
    rep.config.update(
        {"M": M, "delta": delta, "n0": ap.n0, "sigma": ap.sigma, "picard_iterations": picard_iterations}
    )
    rep.meta["config_hash"] = _hash(rep.config, grid)
    rep.fits["uap_residual_l2"] = l2_norm(ap.residual(0.0))
    rep.fits["uap_residual_h2"] = norm_hs(ap.residual(0.0), 2)
    if pic is not None:
        rep.fits["picard_residuals_l2"] = [float(r) for r in pic.residuals]
        rep.fits["picard_residuals_h2"] = [float(r) for r in pic.residuals_h2]
        rep.fits["picard_horizon"] = pic.horizon
    mass = harmonic_l2(u0, ap.n0)
    psi_norm = l2_norm(ap.w1_field)
    rep.fits["dy_mass"] = mass
    rep.check("transverse_mass", mass >= 0.5 * delta * psi_norm, mass=mass, bound=0.5 * delta * psi_norm)
    t, d = rep.t, rep.column("d_h2")
    floor, j, sel = _decay_window(t, d)
    l2 = rep.column("l2")
    # drift only up to the floor; after it the solution leaves along the unstable direction
    drift = float(np.max(np.abs(l2[: j + 1] - l2[0])))
    sel &= d >= 3 * drift
    rep.fits.update(floor=floor, floor_time=float(t[j]), d0=float(d[0]), l2_drift=drift)
    if floor > 0.3 * d[0]:
        raise FloorTooHigh(f"distance floor {floor:.3e} exceeds 0.3 d(0) = {0.3 * d[0]:.3e}")
    if rep.check("decay_window", sel.sum() >= MIN_FIT_SAMPLES, samples=int(sel.sum()), required=MIN_FIT_SAMPLES):
        fit = fit_exponential(t, d, sel)
        _fit_check(rep, "decay", fit, ap.sigma, rtol, sign=-1.0)
    else:
        rep.meta.setdefault("inconclusive", []).append("decay")
    sel_z = _decay_window(t, rep.column("d_z1"))[2]
    if sel_z.sum() >= MIN_FIT_SAMPLES:
        rep.fits["decay_z1"] = dict(fit_exponential(t, rep.column("d_z1"), sel_z))
        rep.fits["decay_z1"]["rate"] *= -1
    if reverse_check:
        rev = Field2D(grid, np.roll(u0.values[::-1], 1, axis=0))
        T_rev = min(T, math.log(10.0) / ap.sigma + 1.0)
        cfg_r = EvolveConfig(p=p, c=c, dt=step, T_final=T_rev, monitor_every=cfg.monitor_every)
        _, rrep = evolve(rev, cfg_r, [monitor], name="reversed")
        dr = rrep.column("d_h2")
        above = np.flatnonzero(dr > 10 * dr[0])
        sel_r = np.arange(len(dr)) < (above[0] if above.size else len(dr))
        fit_r = fit_exponential(rrep.t, dr, sel_r) if sel_r.sum() >= 2 else {"rate": np.nan, "r2": 0.0}
        rep.fits["reversed_growth"] = fit_r
        rep.check("reversed_grows", bool(np.isfinite(fit_r["rate"]) and fit_r["rate"] > 0.5 * ap.sigma), rate=fit_r["rate"])
    rep.approx = ap
    return rep


# -- sweeps -----------------------------------------------------------------------


def _grid_from(cell: dict) -> Grid2D:
    return Grid2D(cell["Lx"], cell["Nx"], cell.get("L", 1.0), cell.get("Ny", 16))


def _cell_threshold(cell):
    from .linops import min_eig_Mc

    return {"min_eig_Mc": min_eig_Mc(cell["c"], Grid1D(cell["Lx"], cell["Nx"]))}


def _cell_growth(cell):
    mode = growth_mode(cell["c"], cell.get("p", 1), cell.get("n", 1), cell.get("L", 1.0), Grid1D(cell["Lx"], cell["Nx"]))
    return {"sigma": mode.sigma}


def _cell_k0(cell):
    return {"k0": find_k0(cell.get("p", 1), Grid1D(cell["Lx"], cell["Nx"]))}


def _cell_coercivity(cell):
    from .quadforms import coercivity_B0, coercivity_Bk

    g = Grid1D(cell["Lx"], cell["Nx"])
    k = cell.get("k", 1.0)
    p = cell.get("p", 1)
    val = coercivity_B0(cell["c"], g, p) if k == 0 else coercivity_Bk(cell["c"], k, g, p)
    return {"constant": val}


def _summarize(rep: RunReport) -> dict:
    out = {"passed": rep.passed}
    for key, val in rep.fits.items():
        if isinstance(val, dict):
            if "rate" in val:
                out[f"{key}_rate"] = val["rate"]
                out[f"{key}_r2"] = val.get("r2")
        elif isinstance(val, (int, float)) or val is None:
            out[key] = val
    return out


def _cell_instability(cell):
    rep = run_instability(cell["c"], cell["delta"], cell["T"], _grid_from(cell), p=cell.get("p", 1))
    return _summarize(rep)


def _cell_stability(cell):
    rep = run_stability(cell["c"], cell["delta"], cell["T"], _grid_from(cell), p=cell.get("p", 1))
    return _summarize(rep)


def _cell_manifold(cell):
    rep = run_stable_manifold(
        cell["c"], cell.get("p", 1), cell["M"], cell["delta"], cell["T"], _grid_from(cell),
        picard_iterations=cell.get("picard_iterations", 1),
    )
    return _summarize(rep)


SWEEP_KINDS: dict[str, Callable[[dict], dict]] = {
    "threshold": _cell_threshold,
    "growth": _cell_growth,
    "k0": _cell_k0,
    "coercivity": _cell_coercivity,
    "instability": _cell_instability,
    "stability": _cell_stability,
    "manifold": _cell_manifold,
}


def _run_cell(kind: str, cell: dict) -> dict:
    try:
        result = SWEEP_KINDS[kind](cell)
        return {**cell, **result, "error": ""}
    except Exception as exc:  # per-cell isolation: failures are data
        return {**cell, "error": f"{type(exc).__name__}: {exc}"}


def _cell_key(cell: dict):
    return tuple(sorted((k, repr(v)) for k, v in cell.items()))


def sweep(kind: str, cells: list[dict], workers: int = 1, path=None) -> list[dict]:
    """Run ``kind`` over parameter cells; rows come back sorted by their parameters.

    With ``workers > 1`` cells run in separate processes. A failing cell is
    recorded with its error message instead of aborting the sweep.
    """
    if kind not in SWEEP_KINDS:
        raise ValueError(f"unknown sweep kind {kind!r}; choose from {sorted(SWEEP_KINDS)}")
    ordered = sorted((dict(c) for c in cells), key=_cell_key)
    if workers > 1 and len(ordered) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, [kind] * len(ordered), ordered))
    else:
        rows = [_run_cell(kind, c) for c in ordered]
    if path is not None:
        from .io import write_rows

        write_rows(path, rows)
    return rows
