import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from kplab.errors import BoxTooSmall, IncompatibleGrid
from kplab.profiles import (
    SolitonSpec,
    gkdv_soliton,
    kdv_soliton,
    rescale_to_speed_one,
    scale_solution,
    scaled_grid,
    soliton_field,
    soliton_residual,
    spectral_derivative,
)
from kplab.spectral import Grid1D, Grid2D, l2_norm

LINE = Grid1D(80.0, 512)


def test_spec_validation():
    with pytest.raises(ValueError):
        SolitonSpec(4, 1.0)
    with pytest.raises(ValueError):
        SolitonSpec(1, 0.0)
    assert np.isclose(SolitonSpec(2, 1.0).amplitude, np.sqrt(6))


def test_kdv_values():
    Q = kdv_soliton(1.0, LINE)
    assert Q[256] == 3.0
    assert np.allclose(Q[1:], Q[1:][::-1])
    assert np.isclose(kdv_soliton(2.0, LINE)[256], 6.0)


def test_quadrature_constants():
    Q = lambda x: 3 / np.cosh(x / 2) ** 2
    dQ = lambda x: -3 * np.tanh(x / 2) / np.cosh(x / 2) ** 2
    assert np.isclose(quad(lambda x: Q(x) ** 2, -60, 60)[0], 24.0)
    assert np.isclose(quad(lambda x: dQ(x) ** 2, -60, 60)[0], 4.8)
    assert np.isclose(quad(lambda x: Q(x) ** 3, -60, 60)[0], 57.6)
    for c in (0.5, 1.0, 2.0):
        q = kdv_soliton(c, Grid1D(120.0, 1024))
        assert np.isclose(120 / 1024 * np.sum(q**2), 24 * c**1.5, rtol=1e-10)


def test_gkdv_matches_kdv():
    assert np.max(np.abs(gkdv_soliton(1, 1.0, LINE) - kdv_soliton(1.0, LINE))) < 1e-12


def test_residual_oracle_reference():
    assert soliton_residual(kdv_soliton(1.0, LINE), 1, 1.0, LINE) <= 1e-8


@pytest.mark.parametrize("p,c", [(1, 3.0), (2, 1.0), (2, 1.5), (3, 4.0), (3, 1.0)])
def test_residual_oracle(p, c):
    # narrower profiles need the finer grid
    g = Grid1D(80.0, 2048)
    R = gkdv_soliton(p, c, g)
    assert soliton_residual(R, p, c, g) <= 1e-8


def test_gkdv_amplitudes():
    assert np.isclose(gkdv_soliton(2, 1.0, LINE)[256], np.sqrt(6))
    assert np.isclose(gkdv_soliton(3, 4.0, Grid1D(80.0, 2048))[1024], (4 * 10) ** (1 / 3))


def test_residual_detects_wrong_profile():
    Q = kdv_soliton(1.0, LINE)
    d1, d2 = kdv_soliton(1.0, LINE, 1), kdv_soliton(1.0, LINE, 2)
    assert soliton_residual(Q + 0.01 * d2, 1, 1.0, LINE) > 1e-4
    # Q + eps Q' is a translate to first order, so its residual is quadratic in eps
    r1 = soliton_residual(Q + 0.01 * d1, 1, 1.0, LINE)
    r2 = soliton_residual(Q + 0.005 * d1, 1, 1.0, LINE)
    assert r1 > 1e-5 and np.isclose(r1 / r2, 4.0, rtol=0.02)
    assert soliton_residual(np.zeros(LINE.Nx), 1, 1.0, LINE) == 0.0


@pytest.mark.parametrize("p", [1, 2, 3])
@pytest.mark.parametrize("order", [1, 2, 3])
def test_analytic_derivatives(p, order):
    g = Grid1D(80.0, 1024)
    R = gkdv_soliton(p, 1.0, g)
    exact = gkdv_soliton(p, 1.0, g, order)
    assert np.max(np.abs(spectral_derivative(R, g, order) - exact)) < 1e-8


def test_box_too_small():
    with pytest.raises(BoxTooSmall):
        kdv_soliton(1.0, Grid1D(20.0, 64))


def test_scale_identity_and_composition(rng):
    g = Grid2D(80.0, 64, 1.0, 8)
    u = soliton_field(1, 1.0, g, time=2.0)
    same = scale_solution(u, 1.0)
    assert same.grid == g and np.array_equal(same.values, u.values)
    back = scale_solution(scale_solution(u, 1.7), 1 / 1.7)
    assert np.max(np.abs(back.values - u.values)) < 1e-12 * 3
    assert np.isclose(back.time, 2.0, rtol=1e-12)
    assert np.isclose(back.grid.Lx, g.Lx) and np.isclose(back.grid.L, g.L)


def test_speed_c_soliton_maps_to_speed_one():
    c = 3.0
    g = Grid2D(80.0, 512, 1.0, 4)
    u = soliton_field(1, c, g, time=1.0)
    v = rescale_to_speed_one(u, c)
    assert np.isclose(v.grid.L, c) and np.isclose(v.grid.Lx, 80 * np.sqrt(c))
    assert np.isclose(v.time, 1.0 * c**1.5)
    assert np.max(np.abs(v.values[:, 0] - kdv_soliton(1.0, v.grid))) < 1e-12
    with pytest.raises(IncompatibleGrid):
        rescale_to_speed_one(u, c, target=g)
    assert rescale_to_speed_one(u, c, target=scaled_grid(g, c**-0.5)).grid.Nx == 512


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 3.0), st.sampled_from([1, 2, 3]))
def test_property_scaling_maps_solitons(lam, p):
    g = Grid2D(200.0, 256, 1.0, 2)
    c = 1.0
    u = soliton_field(p, c, g)
    v = scale_solution(u, lam, p)
    R = gkdv_soliton(p, c * lam**2, v.grid)
    assert np.max(np.abs(v.values[:, 0] - R)) <= 1e-11 * max(1.0, R.max())
    # L2 norm scales like lam^(2/p - 3/2)
    assert np.isclose(l2_norm(v), lam ** (2 / p - 1.5) * l2_norm(u), rtol=1e-10)
