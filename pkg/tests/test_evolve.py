import numpy as np
import pytest

from kplab.errors import BlowupDetected, InterpolationGap
from kplab.evolve import (
    EvolveConfig,
    SnapshotSeries,
    default_dt,
    equation_residual,
    evolve,
    evolve_linearized,
    linear_phase,
    phi_functions,
    step,
    time_derivative,
)
from kplab.linops import growth_mode
from kplab.profiles import gkdv_soliton, soliton_field
from kplab.spectral import Field2D, Grid2D, l2_norm

G = Grid2D(40.0, 128, 1.0, 8)


def test_config_strict_round_trip():
    cfg = EvolveConfig(p=2, c=1.5, dt=0.01, T_final=2.0)
    assert EvolveConfig.from_dict(cfg.as_dict()) == cfg
    d = cfg.as_dict()
    d.pop("dealias")
    with pytest.raises(ValueError):
        EvolveConfig.from_dict(d)
    with pytest.raises(ValueError):
        EvolveConfig.from_dict(cfg.as_dict() | {"extra": 1})
    with pytest.raises(ValueError):
        EvolveConfig(p=4)
    with pytest.raises(ValueError):
        EvolveConfig(dt=-1.0)


def test_linear_phase():
    om = linear_phase(G, 1.3)
    xi = G.xi
    assert np.allclose(om[:, 0], 1.3 * xi + xi**3)
    q = G.q[1]
    nz = xi != 0
    assert np.allclose(om[nz, 1], 1.3 * xi[nz] + xi[nz] ** 3 + q**2 / xi[nz])
    assert np.all(om[0, :] == 0)


def test_phi_functions_series_matches_closed_form():
    z = np.array([0.3 + 0.4j, -0.9, 1e-8j])
    p1, p2, p3 = phi_functions(z)
    with np.errstate(all="ignore"):
        zz = z.astype(complex)
        e1 = (np.exp(zz) - 1) / zz
        e2 = (np.exp(zz) - 1 - zz) / zz**2
    assert np.allclose(p1[:2], e1[:2], rtol=1e-13)
    assert np.allclose(p2[:2], e2[:2], rtol=1e-12)
    assert np.isclose(p3[2], 1 / 6)
    # continuity across the series switch
    a = phi_functions(np.array([0.999999999]))
    b = phi_functions(np.array([1.000000001]))
    for x, y in zip(a, b):
        assert np.isclose(x[0], y[0], rtol=1e-8)


def test_zero_field_stays_zero():
    u = Field2D(G, np.zeros(G.shape))
    out, rep = evolve(u, EvolveConfig(dt=0.01, T_final=0.5))
    assert np.all(out.values == 0)


def test_linear_substep_is_unitary(rng):
    # tiny amplitude: the flow is the linear dispersive group
    u = Field2D(G, 1e-14 * rng.standard_normal(G.shape))
    c = u.coefficients.copy()
    c[0, G.n != 0] = 0
    c[G.Nx // 2, :] = 0
    c[:, G.Ny // 2] = 0
    u = u.with_data(c, spectral=True).physical()
    out, _ = evolve(u, EvolveConfig(dt=0.01, T_final=1.0, monitor_every=0))
    assert abs(l2_norm(out) / l2_norm(u) - 1) < 1e-12


def test_small_wave_matches_linear_prediction():
    xi0 = 4 * 2 * np.pi / G.Lx
    c = 1.0
    amp = 1e-6
    u = Field2D.from_function(G, lambda x, y: amp * np.cos(xi0 * x + y))
    out, _ = evolve(u, EvolveConfig(c=c, dt=1e-3, T_final=1.0, monitor_every=0))
    om = c * xi0 + xi0**3 + 1.0 / xi0
    X, Y = G.mesh()
    exact = amp * np.cos(xi0 * X + Y + om * 1.0)
    assert np.max(np.abs(out.values - exact)) <= 1e-8 * amp * 100


def test_y_independent_stays_y_independent():
    g = Grid2D(60.0, 256, 1.0, 8)
    u = Field2D.from_profile(g, 1.2 * gkdv_soliton(1, 1.0, g))
    out, _ = evolve(u, EvolveConfig(c=1.0, T_final=2.0))
    spread = np.max(np.abs(out.values - out.values[:, :1]))
    assert spread < 1e-12 * np.max(np.abs(out.values))


def test_stationary_soliton_short():
    g = Grid2D(80.0, 512, 1.0, 4)
    R = soliton_field(1, 1.0, g)
    out, _ = evolve(R, EvolveConfig(c=1.0, dt=1e-3, T_final=1.0, monitor_every=0))
    assert l2_norm(out - R) / l2_norm(R) <= 1e-6


@pytest.mark.slow
def test_stationary_soliton_reference():
    g = Grid2D(80.0, 512, 1.0, 4)
    R = soliton_field(1, 1.0, g)
    out, _ = evolve(R, EvolveConfig(c=1.0, dt=1e-3, T_final=10.0, monitor_every=0))
    assert l2_norm(out - R) / l2_norm(R) <= 1e-6


@pytest.mark.parametrize("p,c", [(2, 1.0), (3, 1.0)])
def test_gkdv_solitons_stationary(p, c):
    g = Grid2D(60.0, 512, 1.0, 4)
    R = soliton_field(p, c, g)
    out, _ = evolve(R, EvolveConfig(p=p, c=c, dt=2e-3, T_final=1.0, monitor_every=0))
    assert l2_norm(out - R) / l2_norm(R) <= 1e-6
    fine = Grid2D(60.0, 1024, 1.0, 4)
    Rf = soliton_field(p, c, fine)
    assert l2_norm(equation_residual(Rf, Field2D(fine, np.zeros(fine.shape)), c, p)) / l2_norm(Rf) < 1e-7


def test_default_dt_cfl():
    g = Grid2D(40.0, 128, 1.0, 4)
    u = Field2D(g, np.full(g.shape, 2.0))
    assert np.isclose(default_dt(u, 1) * 2.0 * np.max(np.abs(g.xi)), 0.5)
    assert np.isclose(default_dt(u, 2) * 4.0 * np.max(np.abs(g.xi)), 0.5)


def test_step_matches_evolve():
    g = Grid2D(60.0, 128, 1.0, 8)
    u = soliton_field(1, 1.0, g) + Field2D.from_function(g, lambda x, y: 0.01 * np.exp(-x**2) * x * np.cos(y))
    cfg = EvolveConfig(c=1.0, dt=0.01, T_final=0.03, monitor_every=0)
    v = u
    for _ in range(3):
        v = step(v, cfg)
    w, _ = evolve(u, cfg)
    assert np.allclose(v.values, w.values, atol=1e-14)
    assert np.isclose(v.time, 0.03)


def test_blowup_detected():
    g = Grid2D(40.0, 64, 1.0, 4)
    u = Field2D.from_function(g, lambda x, y: 10 * np.exp(-x**2))
    with pytest.raises(BlowupDetected) as err:
        evolve(u, EvolveConfig(p=2, c=1.0, dt=0.05, T_final=5.0, monitor_every=1, blowup_factor=2.0))
    assert err.value.time is not None


def test_monitor_and_snapshots():
    g = Grid2D(60.0, 128, 1.0, 4)
    u = soliton_field(1, 1.0, g)
    _, rep = evolve(u, EvolveConfig(c=1.0, dt=0.01, T_final=0.1, monitor_every=5, snapshot_every=5))
    assert len(rep.times) == 3 and len(rep.snapshots) == 3
    assert set(rep.series) == {"l2", "hamiltonian"}


def test_time_derivative_zero_on_soliton():
    g = Grid2D(80.0, 512, 1.0, 4)
    R = soliton_field(1, 1.0, g)
    assert l2_norm(time_derivative(R, 1.0)) < 1e-9


def test_snapshot_series_interpolation():
    s = SnapshotSeries([0.0, 1.0], [np.zeros(2), np.ones(2)])
    assert np.allclose(s(0.25), 0.25)
    with pytest.raises(InterpolationGap):
        s(1.5)


def test_coarse_background_rejected():
    g = Grid2D(40.0, 64, 1.0, 4)
    bg = SnapshotSeries([0.0, 1.0], [np.zeros(g.shape)] * 2)
    with pytest.raises(InterpolationGap):
        evolve_linearized(Field2D(g, np.zeros(g.shape)), bg, EvolveConfig(dt=0.01, T_final=0.5))


def test_linearized_free_flow_matches_phase():
    xi0 = 4 * 2 * np.pi / G.Lx
    u = Field2D.from_function(G, lambda x, y: np.cos(xi0 * x))
    out, _, _ = evolve_linearized(u, None, EvolveConfig(c=1.0, dt=0.01, T_final=1.0, monitor_every=0))
    exact = np.cos(xi0 * G.mesh()[0] + (xi0 + xi0**3))
    assert np.max(np.abs(out.values - exact)) < 1e-12


def test_linearized_decaying_mode_tracks_rate():
    g = Grid2D(40.0, 256, 1.0, 8)
    c = 3.0
    mode = growth_mode(c, 1, 1, 1.0, g.x_grid)
    u = Field2D(g, mode.decaying[:, None] * np.cos(g.y)[None, :])
    R = soliton_field(1, c, g)
    T = 3 / mode.sigma
    out, rep, _ = evolve_linearized(u, R, EvolveConfig(c=c, dt=2e-3, T_final=T, monitor_every=50))
    ratio = rep.column("l2") / (l2_norm(u) * np.exp(-mode.sigma * rep.t))
    assert np.max(np.abs(ratio - 1)) < 0.01


def test_linearized_reversibility():
    g = Grid2D(60.0, 128, 1.0, 8)
    R = soliton_field(1, 1.0, g)
    u = Field2D.from_function(g, lambda x, y: np.exp(-x**2) * x * np.cos(y))
    cfg = EvolveConfig(c=1.0, dt=5e-3, T_final=1.0, monitor_every=0)
    mid, _, _ = evolve_linearized(u, R, cfg)
    back, _, _ = evolve_linearized(mid, R, cfg, backward=True)
    assert l2_norm(back - u) <= 1e-6 * l2_norm(u)
    assert np.isclose(back.time, 0.0)
