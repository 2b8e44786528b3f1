"""Radiation response to a concentration perturbation of the equilibrium.

A normal-mode perturbation of the cell concentration, with vertical
amplitude Theta(z) and horizontal wavevector (l, m), disturbs the radiation
field.  The disturbance splits into

* a collimated part, obtained in closed form from the attenuated beam
  (``g1_collimated``), and
* a diffuse part, governed along every straight-line ray direction by a
  first-order equation whose source contains the angular moments of the
  diffuse disturbance itself (``solve_perturbed_diffuse``).

The self-consistent moments are the total-intensity disturbance G1d, the
horizontal flux components P and Q, and the vertical flux S.  They feed the
stability equations through the coefficient profiles Gamma0/1/2
(``gamma_coefficients``) and through the flux boundary conditions.

Two equivalent solution routes are provided.  The public solver iterates
ray sweeps and moment updates to a fixed point for one concrete Theta.  For
the eigenvalue problem, ``moment_operators`` instead assembles the dense
matrices that map nodal values of (Theta, ThetaTilde) straight to the
moment profiles, by folding the per-ray propagation matrices and solving
one linear system for the moment self-consistency.  Both routes discretise
identically, so they agree to solver tolerance.

Ray discretisation: within each grid segment the attenuation uses the exact
optical thickness accumulated by the equilibrium concentration (available
from the base state's tau profile), while the ray source is interpolated
linearly; the resulting one-segment update is integrated exactly.  Rays
with downward direction start from the top with zero (or prescribed)
inflow, upward rays start from the bottom with zero inflow.
"""

from dataclasses import dataclass, field
from math import cos

import numpy as np
from scipy.integrate import cumulative_simpson

from ._backend import fold_propagation, ray_sweep
from .basestate import BaseState
from .numerics import Grid1D, fd_matrix, gauss_nodes

__all__ = [
    "AngularQuadrature",
    "EigenFunctionInput",
    "PerturbationField",
    "MomentOperators",
    "angular_quadrature",
    "g1_collimated",
    "basic_diffuse_intensity",
    "solve_perturbed_diffuse",
    "moment_operators",
    "gamma_coefficients",
]


# ---------------------------------------------------------------------------
# angular quadrature

@dataclass(frozen=True)
class AngularQuadrature:
    """Direction set for moments over the unit sphere.

    Directions are ordered upward hemisphere first (vertical cosine nu > 0),
    then downward, each block polar-major with the same uniform azimuths.
    ``weight`` contains solid-angle weights, summing to 4 pi.
    """

    nu: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    weight: np.ndarray
    n_polar: int
    n_azimuth: int

    @property
    def n_rays(self):
        return self.nu.size

    @property
    def n_up(self):
        return self.nu.size // 2


def angular_quadrature(n_polar=24, n_azimuth=16):
    """Gauss-Legendre polar nodes per hemisphere x uniform azimuths.

    ``n_polar`` Gauss points in |nu| on (0, 1) per hemisphere and
    ``n_azimuth`` midpoint azimuths on [0, 2 pi).  The uniform azimuth rule
    integrates trigonometric polynomials up to degree n_azimuth - 1 exactly
    and is invariant under rotations by multiples of its spacing.
    """
    if n_polar < 2 or n_azimuth < 4:
        raise ValueError("need n_polar >= 2 and n_azimuth >= 4")
    rule = gauss_nodes(n_polar, 0.0, 1.0)
    mu, w_mu = rule.nodes, rule.weights
    phi = (np.arange(n_azimuth) + 0.5) * (2.0 * np.pi / n_azimuth)
    w_phi = 2.0 * np.pi / n_azimuth

    sin_th = np.sqrt(1.0 - mu**2)
    nu_up = np.repeat(mu, n_azimuth)
    xi_half = np.repeat(sin_th, n_azimuth) * np.tile(np.cos(phi), n_polar)
    eta_half = np.repeat(sin_th, n_azimuth) * np.tile(np.sin(phi), n_polar)
    w_half = np.repeat(w_mu, n_azimuth) * w_phi

    nu = np.concatenate([nu_up, -nu_up])
    xi = np.concatenate([xi_half, xi_half])
    eta = np.concatenate([eta_half, eta_half])
    weight = np.concatenate([w_half, w_half])

    total = weight.sum()
    if abs(total - 4.0 * np.pi) > 1e-12 * 4.0 * np.pi:
        raise AssertionError(f"solid angle quadrature sums to {total!r}")
    return AngularQuadrature(nu=nu, xi=xi, eta=eta, weight=weight,
                             n_polar=n_polar, n_azimuth=n_azimuth)


# ---------------------------------------------------------------------------
# inputs and outputs

@dataclass(frozen=True)
class EigenFunctionInput:
    """Concentration-perturbation amplitude and its vertical integral.

    ``theta_tilde`` is the integral of theta from the top boundary,
    theta_tilde(z) = int_1^z theta dz', so theta_tilde(1) = 0 and
    d(theta_tilde)/dz = theta.
    """

    z_grid: Grid1D
    theta: np.ndarray
    theta_tilde: np.ndarray
    l: float
    m: float

    def __post_init__(self):
        n = self.z_grid.n
        theta = np.asarray(self.theta, dtype=complex)
        ttilde = np.asarray(self.theta_tilde, dtype=complex)
        if theta.shape != (n,) or ttilde.shape != (n,):
            raise ValueError("theta/theta_tilde must match the z grid size")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "theta_tilde", ttilde)
        scale = 1.0 + np.abs(ttilde).max()
        if abs(ttilde[-1]) > 1e-10 * scale:
            raise ValueError("theta_tilde must vanish at the top boundary")

    @property
    def k(self):
        return float(np.hypot(self.l, self.m))

    @classmethod
    def from_theta(cls, z_grid, theta, l, m):
        """Build the pair (theta, theta_tilde) from theta alone."""
        theta = np.asarray(theta, dtype=complex)
        z = z_grid.points
        cum_re = cumulative_simpson(theta.real, x=z, initial=0.0)
        cum_im = cumulative_simpson(theta.imag, x=z, initial=0.0)
        cum = cum_re + 1j * cum_im
        ttilde = cum - cum[-1]
        ttilde[-1] = 0.0
        return cls(z_grid=z_grid, theta=theta, theta_tilde=ttilde, l=l, m=m)


@dataclass
class PerturbationField:
    """Angular moments of the radiation disturbance, plus the stability
    coefficient profiles once ``gamma_coefficients`` has been applied."""

    G1c: np.ndarray
    G1d: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    S: np.ndarray
    Gamma0: np.ndarray = None
    Gamma1: np.ndarray = None
    Gamma2: np.ndarray = None
    iterations: int = 0
    residual: float = 0.0


def _require_same_grid(efi, bs):
    z = efi.z_grid.points
    if bs.z.size != z.size or not np.allclose(bs.z, z, rtol=0.0, atol=1e-12):
        raise ValueError("eigenfunction input and base state use different "
                         "z grids")


# ---------------------------------------------------------------------------
# collimated part (closed form)

def g1_collimated(efi, bs):
    """Total-intensity disturbance carried by the attenuated beam.

    The beam sees the perturbed optical thickness of the column above each
    level; linearising the attenuation gives
    (tau_H / cos(theta0)) * theta_tilde(z) * G_s_coll(z).
    """
    _require_same_grid(efi, bs)
    p = bs.params
    return (p.tauH / cos(p.theta0)) * efi.theta_tilde * bs.G_s_coll


# ---------------------------------------------------------------------------
# ray tables shared by every solve on one base state

def _expo_weights(a, decay):
    """Endpoint weights of the exact one-segment update.

    For d(psi)/ds + c*psi = f with f linear on a segment of length h and
    a = c*h, the update is psi_next = e^-a psi + h*(alpha f_start +
    beta f_end).  Series evaluation below |a| = 0.1 avoids cancellation.
    """
    a = np.asarray(a)
    small = np.abs(a) < 0.1
    a_safe = np.where(small, 1.0, a)
    alpha = (1.0 - (1.0 + a_safe) * decay) / a_safe**2
    beta = (a_safe - 1.0 + decay) / a_safe**2
    if np.any(small):
        acc_a = np.zeros_like(a)
        acc_b = np.zeros_like(a)
        # alpha: sum (-a)^j (j+1)/(j+2)!,  beta: sum (-a)^j / (j+2)!
        pw = np.ones_like(a)
        fact = 2.0
        for j in range(8):
            acc_a = acc_a + pw * ((j + 1) / fact)
            acc_b = acc_b + pw / fact
            pw = pw * (-a)
            fact *= j + 3
        alpha = np.where(small, acc_a, alpha)
        beta = np.where(small, acc_b, beta)
    return alpha, beta


def _march_tables(bs, quad, l, m):
    """Per-ray, per-segment decay factors and endpoint weights.

    The attenuation within each segment uses the exact slab optical
    thickness from the equilibrium tau profile; the horizontal structure
    adds the phase rate i (l xi + m eta).
    """
    h = bs.z[1] - bs.z[0]
    seg_tau = bs.tau_of_z[:-1] - bs.tau_of_z[1:]   # >= 0, tau decreases up
    mu = np.abs(quad.nu)
    horiz = l * quad.xi + m * quad.eta
    a = (seg_tau[None, :] + 1j * h * horiz[:, None]) / mu[:, None]
    decay = np.exp(-a)
    alpha, beta = _expo_weights(a, decay)
    return decay, h * alpha, h * beta


def basic_diffuse_intensity(bs, quad):
    """Equilibrium diffuse intensity along each quadrature direction.

    Reconstructed by the same ray march from the equilibrium moments: the
    scattering source along a ray with vertical cosine nu is
    (omega tau_H / 4 pi) n_s (G_s - A1 nu q_s), the top supplies the
    isotropic diffuse inflow B / pi downward, and the bottom reflects
    nothing.  Row r corresponds to quad direction r; columns follow bs.z.
    """
    p = bs.params
    decay, w_start, w_end = _march_tables(bs, quad, 0.0, 0.0)
    mu = np.abs(quad.nu)
    pref = p.omega * p.tauH / (4.0 * np.pi)
    f = (pref / mu[:, None]) * bs.n_s[None, :] * (
        bs.G_s[None, :] - p.A1 * quad.nu[:, None] * bs.q_s[None, :])
    n_down = quad.n_rays - quad.n_up
    init_down = np.full(n_down, p.B / np.pi)
    psi = ray_sweep(f.astype(complex), decay, w_start, w_end, quad.n_up,
                    init_down=init_down)
    return psi.real


def _forcing_coefficients(bs, quad, Lsd):
    """Coefficients of the diffuse-ray source, per ray and level.

    The marching source along ray r is
        cA * G1d + cB * S_d + cC * theta + cD * theta_tilde,
    with signs already adjusted for the marching direction of each
    hemisphere (downward rays march in -z).
    """
    p = bs.params
    mu = np.abs(quad.nu)
    sgn = np.sign(quad.nu)
    inv = 1.0 / mu
    pref = p.omega * p.tauH / (4.0 * np.pi)

    cA = pref * inv[:, None] * bs.n_s[None, :]
    cB = (sgn * pref * p.A1)[:, None] * bs.n_s[None, :]
    cC = (pref * inv[:, None] * bs.G_s[None, :]
          - (sgn * pref * p.A1)[:, None] * bs.q_s[None, :]
          - p.tauH * inv[:, None] * Lsd)
    beam = p.tauH / cos(p.theta0)
    cD = beam * bs.G_s_coll[None, :] * (cA - cB)
    return cA, cB, cC, cD


# ---------------------------------------------------------------------------
# fixed-point solver (public route)

def solve_perturbed_diffuse(efi, bs, rad, quad, tol=1e-9, max_iter=5000):
    """Self-consistent diffuse moments for one concentration amplitude.

    Iterates ray sweeps with the current moment estimates in the source
    until the relative max-norm update falls below ``tol``; the damping
    factor drops to 0.5 if the residual ever grows.  Returns the moments;
    the Gamma profiles stay unset (see ``gamma_coefficients``).
    """
    _require_same_grid(efi, bs)
    if rad is not None and abs(rad.tau_total - bs.params.tauH) > 1e-9:
        raise ValueError("radiation field and base state disagree on the "
                         "layer optical thickness")

    Lsd = basic_diffuse_intensity(bs, quad)
    decay, w_start, w_end = _march_tables(bs, quad, efi.l, efi.m)
    cA, cB, cC, cD = _forcing_coefficients(bs, quad, Lsd)

    fixed = cC * efi.theta[None, :] + cD * efi.theta_tilde[None, :]
    w = quad.weight
    w_nu = quad.weight * quad.nu

    n_z = bs.z.size
    G1d = np.zeros(n_z, dtype=complex)
    Sd = np.zeros(n_z, dtype=complex)
    damping = 1.0
    prev_res = np.inf
    history = []
    psi = None
    for it in range(1, max_iter + 1):
        f = fixed + cA * G1d[None, :] + cB * Sd[None, :]
        psi = ray_sweep(f, decay, w_start, w_end, quad.n_up)
        G1d_new = w @ psi
        Sd_new = w_nu @ psi
        res = max(np.abs(G1d_new - G1d).max(), np.abs(Sd_new - Sd).max())
        scale = 1.0 + max(np.abs(G1d_new).max(), np.abs(Sd_new).max())
        res /= scale
        history.append(res)
        if res > prev_res and damping > 0.5:
            damping = 0.5
        G1d = G1d + damping * (G1d_new - G1d)
        Sd = Sd + damping * (Sd_new - Sd)
        prev_res = res
        if res < tol:
            break
    else:
        raise RuntimeError(
            "perturbed-radiation iteration did not converge; residual "
            f"history tail: {[f'{r:.3e}' for r in history[-6:]]}")

    P = (w * quad.xi) @ psi
    Q = (w * quad.eta) @ psi
    G1c = g1_collimated(efi, bs)
    return PerturbationField(G1c=G1c, G1d=G1d, P=P, Q=Q, S=Sd - G1c,
                             iterations=it, residual=float(res))


# ---------------------------------------------------------------------------
# dense operator route (for the eigenproblem)

@dataclass(frozen=True)
class MomentOperators:
    """Dense maps from nodal (theta, theta_tilde) to the moment profiles.

    Each moment X has X = X_theta @ theta + X_ttilde @ theta_tilde.  ``Sd``
    is the nu-moment of the diffuse disturbance alone; the total vertical
    flux disturbance subtracts the collimated part.
    """

    z_grid: Grid1D
    l: float
    m: float
    G1d_theta: np.ndarray
    G1d_ttilde: np.ndarray
    Sd_theta: np.ndarray
    Sd_ttilde: np.ndarray
    P_theta: np.ndarray
    P_ttilde: np.ndarray
    Q_theta: np.ndarray
    Q_ttilde: np.ndarray

    def apply(self, theta, theta_tilde):
        """Evaluate (G1d, Sd, P, Q) for one concrete input pair."""
        out = []
        for name in ("G1d", "Sd", "P", "Q"):
            A = getattr(self, name + "_theta")
            Bm = getattr(self, name + "_ttilde")
            out.append(A @ theta + Bm @ theta_tilde)
        return tuple(out)


def moment_operators(bs, quad, l, m):
    """Assemble the dense moment operators for one wavevector.

    Folds every ray's propagation matrix with the four source-coefficient
    families and the four angular weights, then solves the 2 n_z moment
    self-consistency system once for all right-hand-side columns.  The
    result is equivalent to applying ``solve_perturbed_diffuse`` to every
    unit basis vector, at a fraction of the cost.
    """
    Lsd = basic_diffuse_intensity(bs, quad)
    decay, w_start, w_end = _march_tables(bs, quad, l, m)
    cA, cB, cC, cD = _forcing_coefficients(bs, quad, Lsd)

    coefs = np.stack([cA.astype(complex), cB.astype(complex),
                      cC.astype(complex), cD.astype(complex)])
    left = np.stack([quad.weight,
                     quad.weight * quad.nu,
                     quad.weight * quad.xi,
                     quad.weight * quad.eta])
    M = fold_propagation(decay, w_start, w_end, left, coefs, quad.n_up)

    n_z = bs.z.size
    eye = np.eye(n_z)
    lhs = np.block([[eye - M[0, 0], -M[0, 1]],
                    [-M[1, 0], eye - M[1, 1]]])
    rhs = np.block([[M[0, 2], M[0, 3]],
                    [M[1, 2], M[1, 3]]])
    sol = np.linalg.solve(lhs, rhs)
    Gd_t, Gd_tt = sol[:n_z, :n_z], sol[:n_z, n_z:]
    Sd_t, Sd_tt = sol[n_z:, :n_z], sol[n_z:, n_z:]

    P_t = M[2, 0] @ Gd_t + M[2, 1] @ Sd_t + M[2, 2]
    P_tt = M[2, 0] @ Gd_tt + M[2, 1] @ Sd_tt + M[2, 3]
    Q_t = M[3, 0] @ Gd_t + M[3, 1] @ Sd_t + M[3, 2]
    Q_tt = M[3, 0] @ Gd_tt + M[3, 1] @ Sd_tt + M[3, 3]

    grid = Grid1D(lo=float(bs.z[0]), hi=float(bs.z[-1]), n=n_z)
    return MomentOperators(z_grid=grid, l=float(l), m=float(m),
                           G1d_theta=Gd_t, G1d_ttilde=Gd_tt,
                           Sd_theta=Sd_t, Sd_ttilde=Sd_tt,
                           P_theta=P_t, P_ttilde=P_tt,
                           Q_theta=Q_t, Q_ttilde=Q_tt)


# ---------------------------------------------------------------------------
# stability coefficient profiles

def _gamma_base_profiles(bs, D1=None):
    """Gamma1 and Gamma2, which depend on the base state only."""
    p = bs.params
    if D1 is None:
        D1 = fd_matrix(Grid1D(lo=float(bs.z[0]), hi=float(bs.z[-1]),
                              n=bs.z.size), 1)
    beam = p.tauH / cos(p.theta0)
    core = bs.n_s * bs.G_s_coll * bs.dMdG
    Gamma1 = beam * p.Vc * (D1 @ core)
    G_diff = bs.G_s - bs.G_s_coll
    Gamma2 = 2.0 * beam * p.Vc * core + p.Vc * bs.dMdG * (D1 @ G_diff)
    return Gamma1, Gamma2


def gamma_coefficients(efi, bs, pf):
    """Coefficient profiles of the concentration stability equation.

    Gamma0 collects the nonlocal radiation feedback (diffuse intensity and
    horizontal flux), Gamma1/Gamma2 the local beam and diffuse gradients.
    Derivatives are 4th-order finite differences on the shared grid.
    """
    _require_same_grid(efi, bs)
    p = bs.params
    if np.abs(bs.q_s).min() <= 1e-12:
        raise ValueError("vanishing radiative flux; swimming response "
                         "undefined")
    D1 = fd_matrix(efi.z_grid, 1)
    Gamma1, Gamma2 = _gamma_base_profiles(bs, D1)
    Gamma0 = (p.Vc * (D1 @ (bs.n_s * bs.dMdG * pf.G1d))
              - 1j * (p.Vc * bs.n_s * bs.M_s / bs.q_s)
              * (efi.l * pf.P + efi.m * pf.Q))
    return Gamma0, Gamma1, Gamma2
