"""Perturbed radiation moments: ray oracle, symmetries, dense equivalence."""
import numpy as np
import pytest
from scipy.integrate import cumulative_simpson, solve_ivp
from scipy.interpolate import CubicSpline, make_interp_spline

from photoconv.numerics import Grid1D
from photoconv.perturb import (
    EigenFunctionInput,
    angular_quadrature,
    basic_diffuse_intensity,
    g1_collimated,
    gamma_coefficients,
    moment_operators,
    solve_perturbed_diffuse,
)

from conftest import make_base_state


def _grid(bs):
    return Grid1D(float(bs.z[0]), float(bs.z[-1]), bs.z.size)


def _sin_mode(bs, l=2.2, m=0.0):
    # theta = sin(pi z) carries an exact antiderivative from the top
    z = bs.z
    theta = np.sin(np.pi * z).astype(complex)
    ttilde = (-(1.0 + np.cos(np.pi * z)) / np.pi).astype(complex)
    return EigenFunctionInput(z_grid=_grid(bs), theta=theta,
                              theta_tilde=ttilde, l=l, m=m)


def test_eigenfunction_input():
    g = Grid1D(0.0, 1.0, 129)
    z = g.points
    efi = EigenFunctionInput.from_theta(g, np.cos(0.5 * np.pi * z), 1.5, 2.0)
    assert efi.k == pytest.approx(2.5)
    assert abs(efi.theta_tilde[-1]) == 0.0
    # integral built from the top: ttilde(0) = -int_0^1 theta
    assert efi.theta_tilde[0] == pytest.approx(-2.0 / np.pi, abs=1e-8)
    with pytest.raises(ValueError):
        EigenFunctionInput(z_grid=g, theta=z * 0.0, theta_tilde=z * 0.0 + 1.0,
                           l=1.0, m=0.0)
    with pytest.raises(ValueError):
        EigenFunctionInput(z_grid=g, theta=np.zeros(5), theta_tilde=np.zeros(5),
                           l=1.0, m=0.0)


def test_g1_collimated_trivial(bs_default):
    bs = bs_default
    z = bs.z
    efi = EigenFunctionInput(z_grid=_grid(bs), theta=np.zeros_like(z, dtype=complex),
                             theta_tilde=np.zeros_like(z, dtype=complex), l=2.0, m=0.0)
    assert np.all(g1_collimated(efi, bs) == 0.0)
    g1 = g1_collimated(_sin_mode(bs), bs)
    assert g1[-1] == 0.0


def test_g1_collimated_ray_oracle(bs_oblique):
    # independent route: integrate the attenuated-ray equation
    #   psi' = (tauH/mu0) (n_s psi + theta G_s^c),  psi(1) = 0
    # downward from the top; its solution is (tauH/mu0) ttilde G_s^c
    bs = bs_oblique
    p = bs.params
    beam = p.tauH / np.cos(p.theta0)
    n_sp = CubicSpline(bs.z, bs.n_s)
    gc_sp = CubicSpline(bs.z, bs.G_s_coll)

    def rhs(zv, y):
        return beam * (n_sp(zv) * y + np.sin(np.pi * zv) * gc_sp(zv))

    sol = solve_ivp(rhs, (1.0, 0.0), [0.0], t_eval=bs.z[::-1],
                    rtol=1e-12, atol=1e-14, method="DOP853")
    psi = sol.y[0][::-1]
    g1 = g1_collimated(_sin_mode(bs), bs)
    assert np.max(np.abs(g1.real - psi)) < 1e-8
    assert np.max(np.abs(g1.imag)) == 0.0


def test_trivial_perturbation_moments(bs_default, quad_default):
    bs = bs_default
    z = bs.z
    efi = EigenFunctionInput(z_grid=_grid(bs), theta=np.zeros_like(z, dtype=complex),
                             theta_tilde=np.zeros_like(z, dtype=complex), l=2.0, m=1.0)
    pf = solve_perturbed_diffuse(efi, bs, bs.radiation, quad_default)
    for arr in (pf.G1c, pf.G1d, pf.P, pf.Q, pf.S):
        assert np.max(np.abs(arr)) == 0.0


def test_axisymmetric_mode_has_no_horizontal_flux(bs_default, quad_default):
    bs = bs_default
    pf = solve_perturbed_diffuse(_sin_mode(bs, l=0.0, m=0.0), bs, bs.radiation,
                                 quad_default)
    assert np.max(np.abs(pf.P)) < 1e-12
    assert np.max(np.abs(pf.Q)) < 1e-12
    assert np.max(np.abs(pf.G1d)) > 1e-3


def test_rotational_invariance(bs_oblique, quad_default):
    bs = bs_oblique
    k = 2.86
    runs = {}
    for (l, m) in [(k, 0.0), (0.0, k), (k / np.sqrt(2.0), k / np.sqrt(2.0))]:
        pf = solve_perturbed_diffuse(_sin_mode(bs, l=l, m=m), bs, bs.radiation,
                                     quad_default)
        runs[(l, m)] = (pf.G1d, pf.S, l * pf.P + m * pf.Q)
    base = runs[(k, 0.0)]
    for key, (G1d, S, flux) in runs.items():
        assert np.max(np.abs(G1d - base[0])) < 1e-8, key
        assert np.max(np.abs(S - base[1])) < 1e-8, key
        assert np.max(np.abs(flux - base[2])) < 1e-8, key


def test_linearity(bs_default, quad_default, rng):
    bs = bs_default
    g = _grid(bs)
    z = bs.z
    th1 = np.sin(np.pi * z) + 0.3j * z * (1.0 - z)
    th2 = np.sin(2.0 * np.pi * z) * np.exp(-z)
    a, b = 0.7 - 0.2j, -1.3 + 0.5j
    efis = [EigenFunctionInput.from_theta(g, th, 2.0, 1.0)
            for th in (th1, th2, a * th1 + b * th2)]
    pfs = [solve_perturbed_diffuse(e, bs, bs.radiation, quad_default)
           for e in efis]
    for field in ("G1c", "G1d", "P", "Q", "S"):
        combo = a * getattr(pfs[0], field) + b * getattr(pfs[1], field)
        got = getattr(pfs[2], field)
        assert np.max(np.abs(got - combo)) < 1e-9, field


def test_hermitian_symmetry(bs_default, quad_default):
    # real theta: flipping (l, m) conjugates the horizontal fluxes and
    # keeps the scalar moments
    bs = bs_default
    pf_p = solve_perturbed_diffuse(_sin_mode(bs, l=1.7, m=0.9), bs,
                                   bs.radiation, quad_default)
    pf_n = solve_perturbed_diffuse(_sin_mode(bs, l=-1.7, m=-0.9), bs,
                                   bs.radiation, quad_default)
    assert np.max(np.abs(pf_n.G1d - pf_p.G1d)) < 1e-9
    assert np.max(np.abs(pf_n.S - pf_p.S)) < 1e-9
    assert np.max(np.abs(pf_n.P - np.conj(pf_p.P))) < 1e-9
    assert np.max(np.abs(pf_n.Q - np.conj(pf_p.Q))) < 1e-9


def test_dense_operators_match_iterative(bs_oblique, quad_default):
    # the column-assembled linear operators and the fixed-point solve are
    # two routes to the same discrete solution
    bs = bs_oblique
    efi = _sin_mode(bs, l=2.0, m=1.2)
    pf = solve_perturbed_diffuse(efi, bs, bs.radiation, quad_default)
    ops = moment_operators(bs, quad_default, 2.0, 1.2)
    G1d, Sd, P, Q = ops.apply(efi.theta, efi.theta_tilde)
    assert np.max(np.abs(G1d - pf.G1d)) < 1e-8
    assert np.max(np.abs(P - pf.P)) < 1e-8
    assert np.max(np.abs(Q - pf.Q)) < 1e-8
    # S decomposition: S = (nu moment of the diffuse rays) - G1c
    assert np.max(np.abs(Sd - pf.G1c - pf.S)) < 1e-8


def test_angular_resolution_convergence(bs_default):
    # default ordinate set against doubled and quadrupled sets
    bs = bs_default
    efi = _sin_mode(bs, l=2.86, m=0.0)
    fields = {}
    for np_, na in ((24, 16), (48, 32), (96, 64)):
        pf = solve_perturbed_diffuse(efi, bs, bs.radiation,
                                     angular_quadrature(np_, na))
        fields[(np_, na)] = np.stack([pf.G1d, pf.S, pf.P, pf.Q])
    d1 = np.max(np.abs(fields[(24, 16)] - fields[(48, 32)]))
    d2 = np.max(np.abs(fields[(48, 32)] - fields[(96, 64)]))
    assert d1 < 5e-4
    assert d2 < 5e-5
    assert d2 < 0.25 * d1


def test_diffuse_reconstruction(bs_default, quad_default):
    # the basic-state diffuse intensity must reproduce G_s and q_s when
    # its moments are reassembled
    bs = bs_default
    quad = quad_default
    Lsd = basic_diffuse_intensity(bs, quad)
    G_rec = quad.weight @ Lsd + bs.G_s_coll
    q_rec = -(quad.weight * quad.nu) @ Lsd + np.cos(bs.params.theta0) * bs.G_s_coll
    assert np.max(np.abs(G_rec - bs.G_s)) < 2e-4
    assert np.max(np.abs(q_rec - bs.q_s)) < 5e-5


def test_gamma_trivial_cases(bs_default, quad_default):
    bs = bs_default
    z = bs.z
    zero = EigenFunctionInput(z_grid=_grid(bs), theta=np.zeros_like(z, dtype=complex),
                              theta_tilde=np.zeros_like(z, dtype=complex), l=2.0, m=0.0)
    pf0 = solve_perturbed_diffuse(zero, bs, bs.radiation, quad_default)
    g0, g1, g2 = gamma_coefficients(zero, bs, pf0)
    assert np.max(np.abs(g0)) == 0.0
    assert np.max(np.abs(g1)) > 0.0
    assert np.max(np.abs(g2)) > 0.0
    # base-only profiles do not depend on theta
    efi = _sin_mode(bs)
    pf = solve_perturbed_diffuse(efi, bs, bs.radiation, quad_default)
    _, g1b, g2b = gamma_coefficients(efi, bs, pf)
    assert np.array_equal(g1, g1b)
    assert np.array_equal(g2, g2b)


def test_gamma_vanishes_without_swimming(quad_default):
    bs = make_base_state(Vc=0.0)
    efi = _sin_mode(bs)
    pf = solve_perturbed_diffuse(efi, bs, bs.radiation, quad_default)
    g0, g1, g2 = gamma_coefficients(efi, bs, pf)
    assert np.max(np.abs(g0)) == 0.0
    assert np.max(np.abs(g1)) == 0.0
    assert np.max(np.abs(g2)) == 0.0


def _gamma1_independent(bs):
    # re-derive Gamma1 via cumulative-quadrature depth, analytic taxis
    # slope, and a quintic-spline derivative
    p = bs.params
    z = bs.z
    mass_above = cumulative_simpson(bs.n_s[::-1], x=z, initial=0.0)[::-1]
    tau = p.tauH * mass_above
    beam_att = np.exp(-tau / np.cos(p.theta0))
    core = bs.n_s * beam_att * p.curve.dMdG(np.asarray(bs.radiation.G_at(tau)))
    sp = make_interp_spline(z, core, k=5)
    return (p.tauH / np.cos(p.theta0)) * p.Vc * sp.derivative()(0.5)


def test_gamma1_spot_oracle():
    from photoconv.perturb import _gamma_base_profiles

    for kw in (dict(), dict(A1=0.4, theta_i_deg=40.0)):
        bs = make_base_state(n_z=257, **kw)
        g1, _ = _gamma_base_profiles(bs)
        mid = bs.z.size // 2
        assert bs.z[mid] == 0.5
        ref = _gamma1_independent(bs)
        assert abs(g1[mid] - ref) / abs(ref) < 1e-6, kw
