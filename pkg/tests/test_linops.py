import numpy as np
import pytest

from kplab.errors import NearSingular, NoSignChange, NotACharacteristicRoot, OutOfRange, InsufficientSamples
from kplab.linops import (
    LinOp1D,
    build_An,
    build_Lk,
    build_Mc,
    characteristic_roots,
    decay_coefficient,
    derivative_matrix,
    find_k0,
    fit_kappa,
    g_mu,
    g_mu_residual,
    growth_mode,
    growth_rate,
    growth_rate_pencil,
    kernel_vector,
    min_eig_Mc,
    nu_lambda_map,
    reflect,
    resolvent_solve,
    sigma_curve,
    spectrum,
)
from kplab.profiles import kdv_soliton
from kplab.quadforms import Q_form
from kplab.spectral import Grid1D

G = Grid1D(60.0, 256)


def classical_sigma(k):
    """Closed-form KP-I line-soliton growth rate at speed 1."""
    return np.sqrt(max(4 * k**2 / 3 * (1 - 4 * k / np.sqrt(3)), 0.0))


def test_Mc_basic_properties(rng):
    op = build_Mc(1.0, G)
    assert np.allclose(op.apply(np.ones(G.Nx)), 1.0)
    u = np.exp(-G.x**2 / 8) * (1 + 0.3 * G.x)
    direct = G.h * u @ op.matrix @ u
    assert np.isclose(direct, Q_form(u, 1.0, G), rtol=1e-10)
    assert np.allclose(op.matrix, op.matrix.T)


def test_Mc_essential_spectrum_proxy():
    from kplab.linops import gram_matrix

    c = 1.0
    M = gram_matrix(G, G.xi**4) + gram_matrix(G, c * G.xi**2) + np.eye(G.Nx)
    lam = np.linalg.eigvalsh(0.5 * (M + M.T))
    assert lam.min() >= 1 - 1e-10
    assert np.isclose(lam.min(), np.min(G.xi**4 + c * G.xi**2 + 1))


def test_Mc_sign_on_both_sides():
    g = Grid1D(80.0, 512)
    assert min_eig_Mc(1.0, g) > 0
    assert min_eig_Mc(3.0, g) <= 0


def test_find_cstar_no_sign_change():
    from kplab.linops import find_cstar

    with pytest.raises(NoSignChange):
        find_cstar(Grid1D(80.0, 256), bracket=(0.5, 1.0))


def test_characteristic_roots():
    r = characteristic_roots(1.0)
    assert np.allclose(sorted(r.roots.real), [-np.sqrt(3), -1, 1, np.sqrt(3)], atol=1e-12)
    assert not r.double
    d = characteristic_roots(2 / np.sqrt(3))
    assert d.double and np.allclose(np.abs(d.roots), np.sqrt(2), atol=1e-6)
    z = characteristic_roots(0.0)
    assert np.allclose(sorted(z.roots.real), [-2, 0, 0, 2], atol=1e-12)
    with pytest.raises(ValueError):
        characteristic_roots(-1.0)


def test_g_mu_exact_solution():
    assert g_mu_residual(1.0, 1.0) <= 1e-9
    y = np.linspace(-3, 3, 7)
    assert np.allclose(g_mu(1.0, y), 3 * np.exp(y) * (1 - np.tanh(y)))
    for mu in (0.0, 1.0, 2.0):
        assert decay_coefficient(mu) == 0.0
    mu = np.sqrt(3)
    assert np.isclose(decay_coefficient(mu), 5 * np.sqrt(3) - 9)
    assert g_mu_residual(mu, 1.0) <= 1e-9
    assert np.isclose(g_mu(mu, 20.0) * np.exp(-mu * 20.0), decay_coefficient(mu), rtol=1e-9)
    with pytest.raises(NotACharacteristicRoot):
        g_mu_residual(1.5, 1.0)


def test_nu_lambda_map():
    assert np.isclose(nu_lambda_map(4 / np.sqrt(3), 0.0), 1.0)
    assert nu_lambda_map(2.0, 1.0) == 0.0
    assert np.isclose(nu_lambda_map(4.0, 0.0), 1 / np.sqrt(3))
    with pytest.raises(OutOfRange):
        nu_lambda_map(1.0, 2.0)


def test_Lk_shift_structure():
    a = build_Lk(1, 0.2, G).min_eigenvalue()
    b = build_Lk(1, 0.5, G).min_eigenvalue()
    assert np.isclose(b - a, 0.5**2 - 0.2**2, atol=1e-10)


def test_find_k0_and_kernel():
    g = Grid1D(80.0, 512)
    k0 = find_k0(1, g)
    assert np.isclose(k0, np.sqrt(3) / 4, rtol=0.01)
    chi = kernel_vector(1, k0, g)
    op = build_Lk(1, k0, g)
    assert np.linalg.norm(op.apply(chi)) <= 1e-6 * np.linalg.norm(chi) + abs(op.min_eigenvalue()) * np.linalg.norm(chi)
    # bisection tolerance bounds the eigenvalue at the returned k0
    assert abs(op.min_eigenvalue()) < 1e-3


def test_growth_rate_stable_and_unstable():
    g = Grid1D(80.0, 256)
    sigma, psi = growth_rate(1.0, 1, 1.0, 1 / 0.5, g)
    assert sigma == 0.0 and psi is None
    s, psi = growth_rate(1.0, 1, 1.0, 1 / 0.3, g)
    assert s > 0
    assert np.isclose(s, classical_sigma(0.3), rtol=1e-6)


def test_growth_mode_eigen_relations():
    g = Grid1D(40.0, 256)
    m = growth_mode(3.0, 1, 1, 1.0, g)
    A = build_An(3.0, 1, 1, 1.0, g)
    assert np.linalg.norm(A.apply(m.growing) + m.sigma * m.growing) < 1e-6
    assert np.linalg.norm(A.apply(m.decaying) - m.sigma * m.decaying) < 1e-6
    # the decaying mode is the reflected growing mode up to sign
    assert min(np.linalg.norm(reflect(m.growing) - s * m.decaying) for s in (1, -1)) < 1e-6


def test_scaling_consistency_of_growth_rates():
    c, n = 3.0, 1
    g = Grid1D(40.0, 256)
    s_c = growth_rate(c, 1, n, 1.0, g)[0]
    g1 = Grid1D(40.0 * np.sqrt(c), 256)
    s_1 = growth_rate(1.0, 1, 1.0, 1 / (n / np.sqrt(c)), g1)[0]
    # speed c, wavenumber n <-> speed 1, wavenumber n / c with k = q / c^(1/2) ... via exact law
    assert np.isclose(s_c, c**1.5 * classical_sigma(n / c), rtol=1e-3)
    assert np.isclose(s_1, classical_sigma(n / np.sqrt(c)), rtol=1e-3)


def test_pencil_cross_check():
    g = Grid1D(60.0, 256)
    for k in (0.2, 0.35):
        assert np.isclose(growth_rate_pencil(1, k, g), growth_rate(1.0, 1, 1.0, 1 / k, g)[0], rtol=1e-4)


def test_spectrum_csv(tmp_path):
    rep = spectrum(build_An(3.0, 1, 1, 1.0, Grid1D(40.0, 128)))
    rep.to_csv(tmp_path / "s.csv")
    head = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert head.startswith("re,im,verdict")
    # spectrum symmetric under lam -> -lam
    lam = rep.eigenvalues
    assert np.max(np.min(np.abs(lam[:, None] + lam[None, :]), axis=1)) < 1e-6 * np.abs(lam).max()


def test_sigma_curve_positive_and_fit():
    g = Grid1D(80.0, 256)
    k0 = find_k0(1, g)
    ks = np.linspace(0.05, k0 - 0.02, 8)
    assert all(s > 0 for _, s in sigma_curve(1, g, ks))
    with pytest.raises(InsufficientSamples):
        fit_kappa([(0.1, 0.2), (0.2, 0.1)])


def test_fit_kappa_recovers_synthetic():
    s = np.linspace(0.01, 0.2, 12)
    k = 0.4 - 1.5 * s**2 - 0.3 * s**4
    fit = fit_kappa(list(zip(k, s)))
    assert np.isclose(fit.k0, 0.4) and np.isclose(fit.kappa, 1.5) and abs(fit.linear) < 1e-10


def test_resolvent_solve(rng):
    g = Grid1D(40.0, 128)
    op = build_An(3.0, 1, 1, 1.0, g)
    rhs = kdv_soliton(3.0, g, 1)
    w = resolvent_solve(op, 5.0, rhs)
    assert np.linalg.norm(op.apply(w) - 5.0 * w - rhs) <= 1e-10 * np.linalg.norm(rhs) * 10
    v = rng.standard_normal(g.Nx)
    v -= v.mean()
    back = resolvent_solve(op, 2.0 + 1.0j, op.apply(v) - (2.0 + 1.0j) * v)
    assert np.allclose(back, v, atol=1e-10 * np.abs(v).max() * 10)
    sigma = growth_mode(3.0, 1, 1, 1.0, g).sigma
    with pytest.raises(NearSingular):
        resolvent_solve(op, sigma, rhs)
    with pytest.raises(ValueError):
        resolvent_solve(op, 5.0, np.ones(g.Nx))


def test_resolvent_plain_solve_at_zero():
    g = Grid1D(40.0, 64)
    op = LinOp1D(g, 2.0 * np.eye(g.Nx), "diag")
    assert np.allclose(resolvent_solve(op, 0.0, np.ones(g.Nx)), 0.5)


def test_derivative_matrix_matches_fft():
    g = Grid1D(20.0, 64)
    f = np.exp(-g.x**2)
    assert np.allclose(derivative_matrix(g, 1) @ f, -2 * g.x * f, atol=1e-10)
