"""Equilibrium (no-flow) state of the suspension.

Cells swim along the light gradient with a response that flips sign at a
critical intensity, so in the absence of flow they pile up where the
total intensity G crosses that critical value (the sublayer).  This
module provides Snell refraction of the incident beam, the taxis
response curve M(G), the shooting solve for the equilibrium
concentration profile n_s(z), and the sublayer diagnostics used to
discuss stability trends.

The profile satisfies  dn_s/dz = V_c M(G_s) n_s  with unit average
concentration; optical depth accumulates from the illuminated top
surface, tau(z) = tau_H * int_z^1 n_s dz', which couples the profile to
the radiation field solved (once, in tau coordinates) by the radiative
module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import brent_root

__all__ = [
    "PhototaxisCurve",
    "SuspensionParams",
    "BaseState",
    "SublayerDiagnostics",
    "refraction_angle",
    "phototaxis_M",
    "phototaxis_dMdG",
    "solve_base_state",
    "sublayer_diagnostics",
]

MAX_INCIDENCE_DEG = 89.9


def refraction_angle(theta_i_deg, n0=1.333):
    """In-medium beam angle from the incidence angle, via Snell's law.

    Returns theta0 in radians with sin(theta0) = sin(theta_i)/n0, so the
    refracted angle is capped at arcsin(1/n0) (~48.6 deg for water).
    """
    if not 0.0 <= theta_i_deg <= MAX_INCIDENCE_DEG:
        raise ValueError(
            f"incidence angle {theta_i_deg} deg outside [0, {MAX_INCIDENCE_DEG}]"
        )
    if n0 < 1.0:
        raise ValueError(f"refractive index n0={n0} must be >= 1")
    return float(np.arcsin(np.sin(np.deg2rad(theta_i_deg)) / n0))


@dataclass(frozen=True)
class PhototaxisCurve:
    """Taxis response M(G): positive (upward swimming) below the critical
    intensity, negative above it.

    M(G) = a1 sin(f1 chi) - a2 sin(f2 chi),  chi(G) = (G/pivot) e^(ups (pivot - G))

    with the standard two-lobe shape a=(0.8, 0.1), f=(3pi/2, pi/2).  The
    decay parameter ``upsilon`` positions the zero crossing: 0.252 puts
    it near G = 1.3, 0.135 near G = 1.9.
    """

    upsilon: float = 0.252
    amplitudes: tuple = (0.8, 0.1)
    frequencies: tuple = (1.5 * np.pi, 0.5 * np.pi)
    pivot: float = 3.8

    def chi(self, G):
        G = np.asarray(G, dtype=float)
        return (G / self.pivot) * np.exp(self.upsilon * (self.pivot - G))

    def M(self, G):
        a1, a2 = self.amplitudes
        f1, f2 = self.frequencies
        c = self.chi(G)
        return a1 * np.sin(f1 * c) - a2 * np.sin(f2 * c)

    def dMdG(self, G):
        G = np.asarray(G, dtype=float)
        a1, a2 = self.amplitudes
        f1, f2 = self.frequencies
        c = self.chi(G)
        dchi = np.exp(self.upsilon * (self.pivot - G)) / self.pivot \
            * (1.0 - self.upsilon * G)
        return (a1 * f1 * np.cos(f1 * c) - a2 * f2 * np.cos(f2 * c)) * dchi

    @property
    def Gc(self):
        """Critical intensity: the sign change of M on (0, pivot]."""
        gs = np.linspace(1e-6, self.pivot, 400)
        ms = self.M(gs)
        sgn = np.sign(ms)
        flips = np.flatnonzero(sgn[:-1] * sgn[1:] < 0)
        if len(flips) == 0:
            raise ValueError("taxis curve has no sign change on (0, pivot]")
        k = flips[0]
        return brent_root(lambda g: float(self.M(g)), gs[k], gs[k + 1])


def phototaxis_M(G, curve):
    """Taxis response at intensity G (module-level convenience)."""
    return curve.M(G)


def phototaxis_dMdG(G, curve):
    """Analytic dM/dG at intensity G."""
    return curve.dMdG(G)


@dataclass(frozen=True)
class SuspensionParams:
    """Nondimensional groups of the suspension and its illumination."""

    Sc: float = 20.0           # Schmidt number
    Vc: float = 15.0           # scaled swimming speed
    tauH: float = 0.5          # optical depth of the layer
    omega: float = 0.4         # single-scattering albedo
    A1: float = 0.0            # forward-scattering anisotropy
    B: float = 0.26            # diffuse irradiation
    theta_i_deg: float = 0.0   # incidence angle, degrees
    n0: float = 1.333          # refractive index of the medium
    curve: PhototaxisCurve = field(default_factory=PhototaxisCurve)

    def __post_init__(self):
        if self.Sc <= 0:
            raise ValueError(f"Schmidt number Sc={self.Sc} must be positive")
        if self.Vc < 0:
            raise ValueError(f"swimming speed Vc={self.Vc} must be nonnegative")
        if self.tauH <= 0:
            raise ValueError(f"optical depth tauH={self.tauH} must be positive")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"albedo omega={self.omega} outside [0, 1]")
        if not -1.0 < self.A1 <= 1.0:
            raise ValueError(f"anisotropy A1={self.A1} outside (-1, 1]")
        if self.B < 0:
            raise ValueError(f"diffuse irradiation B={self.B} must be nonnegative")
        if not 0.0 <= self.theta_i_deg <= MAX_INCIDENCE_DEG:
            raise ValueError(
                f"incidence angle {self.theta_i_deg} outside [0, {MAX_INCIDENCE_DEG}]"
            )
        if self.n0 < 1.0:
            raise ValueError(f"refractive index n0={self.n0} must be >= 1")

    @property
    def theta0(self):
        """Refracted (in-medium) beam angle, radians."""
        return refraction_angle(self.theta_i_deg, self.n0)


@dataclass
class BaseState:
    """Equilibrium profile and the fields the stability problem needs.

    All arrays live on the ascending uniform z grid (0 = bottom,
    1 = illuminated top).  ``tau_of_z`` is the optical depth accumulated
    from the top; ``Dn_s`` is the analytic derivative V_c M_s n_s.
    """

    params: SuspensionParams
    z: np.ndarray
    n_s: np.ndarray
    tau_of_z: np.ndarray
    G_s: np.ndarray
    q_s: np.ndarray
    G_s_coll: np.ndarray
    M_s: np.ndarray
    dMdG: np.ndarray
    n_top: float          # shooting parameter n_s(z=1)
    radiation: object = field(repr=False, default=None)

    @property
    def Dn_s(self):
        return self.params.Vc * self.M_s * self.n_s

    def mass(self):
        """Layer-average concentration (should be 1)."""
        from scipy.integrate import simpson

        return float(simpson(self.n_s, x=self.z))


def _integrate_profile(a, p, rad, n_z):
    """RK4 sweep of (n, m) from the top down; m(z) = int_z^1 n dz'.

    Returns node values on the descending grid.  The intensity is looked
    up at tau = tauH * m, which is exact in the sense that the radiation
    field depends on depth only through tau.
    """
    h = 1.0 / (n_z - 1)
    Vc, tauH = p.Vc, p.tauH
    curve = p.curve

    def rhs(y):
        n, m = y
        G = float(rad.G_at(tauH * m))
        return np.array([-(Vc * curve.M(G) * n), n])  # d/dz flipped: step is -h

    # integrate in the downward variable s = 1 - z so the step is +h
    y = np.array([a, 0.0])
    ns = np.empty(n_z)
    ms = np.empty(n_z)
    ns[0], ms[0] = y
    for k in range(1, n_z):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ns[k], ms[k] = y
    return ns, ms


def solve_base_state(p, rad, n_z=129):
    """Shooting solve of the equilibrium concentration profile.

    ``rad`` must be the RadiationField for the same (tauH, omega, A1, B,
    theta0) parameter set.  The unknown top concentration n_s(1) is
    bracketed and refined until the layer average of n_s is 1.
    """
    if n_z < 65:
        raise ValueError("base state grid needs n_z >= 65")
    if abs(rad.tau_total - p.tauH) > 1e-9 * max(1.0, p.tauH):
        raise ValueError(
            f"radiation field solved for tau_total={rad.tau_total}, "
            f"but params have tauH={p.tauH}"
        )

    if p.Vc == 0.0:
        # no swimming: normalization forces the uniform profile, with the
        # optical depth exactly linear in height -- skip the shooting solve
        # so the uniform state is exact rather than root-finder-accurate
        z = np.linspace(0.0, 1.0, n_z)
        n_s = np.ones(n_z)
        tau = p.tauH * (1.0 - z)
        tau[-1] = 0.0
        G_s = np.asarray(rad.G_at(tau))
        return BaseState(
            params=p, z=z, n_s=n_s, tau_of_z=tau,
            G_s=G_s, q_s=np.asarray(rad.q_at(tau)),
            G_s_coll=np.asarray(rad.collimated_at(tau)),
            M_s=np.asarray(p.curve.M(G_s)), dMdG=np.asarray(p.curve.dMdG(G_s)),
            n_top=1.0, radiation=rad,
        )

    def residual(a):
        _, ms = _integrate_profile(a, p, rad, n_z)
        return ms[-1] - 1.0

    lo, hi = 1e-3, 1.0
    flo, fhi = residual(lo), residual(hi)
    tries = 0
    while flo * fhi > 0.0:
        if fhi < 0.0:
            hi *= 2.0
            fhi = residual(hi)
        else:
            lo *= 0.5
            flo = residual(lo)
        tries += 1
        if tries > 60:
            raise RuntimeError(
                f"no shooting bracket: residual({lo:g})={flo:g}, "
                f"residual({hi:g})={fhi:g}"
            )
    a = brent_root(residual, lo, hi, xtol=1e-14)
    ns_desc, ms_desc = _integrate_profile(a, p, rad, n_z)
    if np.any(ns_desc <= 0.0):
        raise RuntimeError("negative concentration in shooting solve; refine n_z")

    z = np.linspace(0.0, 1.0, n_z)
    n_s = ns_desc[::-1].copy()
    tau = p.tauH * ms_desc[::-1].copy()
    tau[-1] = 0.0
    G_s = np.asarray(rad.G_at(tau))
    q_s = np.asarray(rad.q_at(tau))
    return BaseState(
        params=p, z=z, n_s=n_s, tau_of_z=tau,
        G_s=G_s, q_s=q_s, G_s_coll=np.asarray(rad.collimated_at(tau)),
        M_s=np.asarray(p.curve.M(G_s)), dMdG=np.asarray(p.curve.dMdG(G_s)),
        n_top=float(a), radiation=rad,
    )


@dataclass
class SublayerDiagnostics:
    """Where the sublayer sits and how sharp it is."""

    roots: list               # z locations with G_s = Gc, ascending
    HUZ: float                # height of the unstable zone (from the bottom)
    CDUZ: float               # concentration difference across it
    whole_layer: bool         # True when G_s never crosses Gc


def sublayer_diagnostics(bs, Gc=None):
    """Sublayer location(s) and the unstable-zone measures.

    The unstable zone spans from the bottom up to the (uppermost)
    sublayer; if the critical intensity is never attained the whole
    layer is unstable and HUZ = 1 with the flag set.
    """
    if Gc is None:
        Gc = bs.params.curve.Gc
    f = bs.G_s - Gc
    sgn = np.sign(f)
    roots = []
    from scipy.interpolate import CubicSpline

    spl = CubicSpline(bs.z, f)
    for k in np.flatnonzero(sgn[:-1] * sgn[1:] < 0):
        roots.append(brent_root(spl, bs.z[k], bs.z[k + 1]))
    for k in np.flatnonzero(f == 0.0):
        roots.append(float(bs.z[k]))
    roots = sorted(roots)
    whole = len(roots) == 0
    huz = 1.0 if whole else max(roots)
    cduz = float(np.max(bs.n_s) - bs.n_s[0])
    return SublayerDiagnostics(roots=roots, HUZ=float(huz), CDUZ=cduz,
                               whole_layer=whole)
