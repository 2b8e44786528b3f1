"""Linear-stability eigenproblem: growth rates, neutral curves, critical mode.

The disturbance equations couple the vertical velocity amplitude W(z) and
the integrated concentration amplitude ThetaTilde(z) (whose derivative is
the concentration amplitude itself):

    (gamma/Sc + k^2 - D^2)(D^2 - k^2) W = R k^2 D ThetaTilde,
    Gamma0 + Gamma1 ThetaTilde + (gamma + k^2 + Gamma2) D ThetaTilde
        + Vc Ms D^2 ThetaTilde - D^3 ThetaTilde = -(Dn_s) W,

with a rigid no-slip bottom (W = DW = 0), a stress-free top (W = D^2 W = 0),
zero net cell flux through both boundaries, and ThetaTilde(1) = 0.  The
nonlocal radiation feedback enters through Gamma0 and the flux boundary
rows via the dense moment operators of the perturb module.

Everything is discretised with 4th-order finite differences on the base
state's uniform grid and posed as a generalised matrix pencil
A(R) x = gamma B x with boundary rows replacing the outermost collocation
rows.  Two complementary solvers are built on the pencil:

* ``growth_rate`` extracts the leading eigenvalue gamma for given (k, R);
* for stationary neutral points, setting gamma = 0 turns the same pencil
  into an eigenproblem *in R*, so one decomposition per wavenumber yields
  every stationary threshold directly; oscillatory crossings are then
  located by root-finding on the real part of the leading complex mode
  below the stationary threshold.
"""

import warnings
from collections import OrderedDict
from dataclasses import dataclass
from math import cos, pi

import numpy as np
from scipy.optimize import minimize_scalar

from .numerics import Grid1D, brent_root, eigenvalues, fd_matrix, leading_eigenpair
from .perturb import _gamma_base_profiles, angular_quadrature, moment_operators

__all__ = [
    "ModeParams",
    "GrowthRateResult",
    "NeutralBranch",
    "CriticalMode",
    "growth_rate",
    "growth_curve",
    "neutral_point",
    "trace_neutral_curve",
    "critical_mode",
    "find_critical_mode",
]

SIGMA_FLOOR = 1e-3          # |Im gamma| below this counts as stationary
_EIG_CUTOFF = 1e7           # reject QZ output beyond this magnitude


@dataclass(frozen=True)
class ModeParams:
    """Horizontal wavevector, Rayleigh number and Schmidt number."""

    l: float
    m: float
    R: float
    Sc: float = None

    def __post_init__(self):
        if not np.isfinite(self.R):
            raise ValueError("R must be finite")

    @property
    def k(self):
        return float(np.hypot(self.l, self.m))


@dataclass
class GrowthRateResult:
    gamma: complex
    W: np.ndarray
    ThetaTilde: np.ndarray
    mode_number: int


@dataclass
class NeutralBranch:
    """Points (k, R, sigma) of one neutral branch, sorted by k."""

    points: np.ndarray           # shape (n, 3): k, R, sigma = Im(gamma)
    kind: str                    # "stationary" or "oscillatory"
    k_b: float = None            # merge wavenumber with the other branch

    def min_point(self):
        i = int(np.argmin(self.points[:, 1]))
        return self.points[i]


@dataclass
class CriticalMode:
    k_c: float
    R_c: float
    lambda_c: float
    sigma_c: float
    overstable: bool
    mode_number: int = None


# ---------------------------------------------------------------------------
# pencil assembly (cached per base state and wavevector)

@dataclass
class _PencilBlocks:
    k: float
    A_base: np.ndarray
    A_R: np.ndarray
    B_theta: np.ndarray
    B_w: np.ndarray      # to be scaled by 1/Sc


_CACHE = OrderedDict()
_CACHE_CAP = 8


def _build_blocks(bs, quad, l, m):
    n = bs.z.size
    grid = Grid1D(lo=float(bs.z[0]), hi=float(bs.z[-1]), n=n)
    D1 = fd_matrix(grid, 1)
    D2 = fd_matrix(grid, 2)
    D3 = fd_matrix(grid, 3)
    D4 = fd_matrix(grid, 4)
    p = bs.params
    if np.abs(bs.q_s).min() <= 1e-12:
        raise ValueError("vanishing radiative flux in the base state")

    ops = moment_operators(bs, quad, l, m)
    OG = ops.G1d_theta @ D1 + ops.G1d_ttilde
    OP = ops.P_theta @ D1 + ops.P_ttilde
    OQ = ops.Q_theta @ D1 + ops.Q_ttilde

    Gamma1, Gamma2 = _gamma_base_profiles(bs, D1)
    swim = p.Vc * bs.n_s * bs.M_s / bs.q_s
    OGamma0 = (p.Vc * (D1 @ ((bs.n_s * bs.dMdG)[:, None] * OG))
               - 1j * swim[:, None] * (l * OP + m * OQ))

    k2 = float(l * l + m * m)
    eye = np.eye(n)
    A_base = np.zeros((2 * n, 2 * n), dtype=complex)
    A_R = np.zeros_like(A_base)
    B_theta = np.zeros_like(A_base)
    B_w = np.zeros_like(A_base)

    A_base[:n, :n] = D4 - 2.0 * k2 * D2 + k2 * k2 * eye
    A_R[:n, n:] = k2 * D1
    B_w[:n, :n] = D2 - k2 * eye

    A_base[n:, :n] = np.diag(bs.Dn_s)
    A_base[n:, n:] = (OGamma0 + np.diag(Gamma1)
                      + (k2 * eye + np.diag(Gamma2)) @ D1
                      + (p.Vc * bs.M_s)[:, None] * D2 - D3)
    B_theta[n:, n:] = -D1

    # boundary rows: W = DW = 0 at the bottom, W = D2 W = 0 at the top,
    # zero net cell flux at both walls, ThetaTilde(1) = 0
    beam = p.tauH / cos(p.theta0)

    def flux_row(r):
        row = D2[r, :].astype(complex) - p.Vc * bs.M_s[r] * D1[r, :]
        coupling = p.Vc * bs.n_s[r] * bs.dMdG[r]
        row -= coupling * OG[r, :]
        row[r] -= coupling * beam * bs.G_s_coll[r]
        return row

    for idx in (0, 1, n - 2, n - 1):
        A_base[idx, :] = 0.0
        A_R[idx, :] = 0.0
        B_w[idx, :] = 0.0
    A_base[0, 0] = 1.0                    # W(0) = 0
    A_base[1, :n] = D1[0, :]              # DW(0) = 0
    A_base[n - 2, :n] = D2[n - 1, :]      # D2 W(1) = 0
    A_base[n - 1, n - 1] = 1.0            # W(1) = 0

    for idx in (n, 2 * n - 2, 2 * n - 1):
        A_base[idx, :] = 0.0
        A_R[idx, :] = 0.0
        B_theta[idx, :] = 0.0
    A_base[n, n:] = flux_row(0)
    A_base[2 * n - 2, n:] = flux_row(n - 1)
    A_base[2 * n - 1, 2 * n - 1] = 1.0    # ThetaTilde(1) = 0

    return _PencilBlocks(k=float(np.sqrt(k2)), A_base=A_base, A_R=A_R,
                         B_theta=B_theta, B_w=B_w)


def _blocks_for(bs, quad, l, m):
    key = (id(bs), float(l), float(m), quad.n_polar, quad.n_azimuth)
    hit = _CACHE.get(key)
    if hit is not None and hit[0] is bs:
        _CACHE.move_to_end(key)
        return hit[1]
    blocks = _build_blocks(bs, quad, l, m)
    _CACHE[key] = (bs, blocks)
    while len(_CACHE) > _CACHE_CAP:
        _CACHE.popitem(last=False)
    return blocks


def _gamma_pencil(bl, R, Sc):
    A = bl.A_base + R * bl.A_R
    B = bl.B_theta + bl.B_w / Sc
    # row equilibration: eigenvalues are invariant under left scaling
    s = np.maximum(np.abs(A).max(axis=1), np.abs(B).max(axis=1))
    s[s == 0.0] = 1.0
    return A / s[:, None], B / s[:, None]


def _resolve(bs, quad, Sc):
    if quad is None:
        quad = angular_quadrature()
    if Sc is None:
        Sc = bs.params.Sc
    return quad, float(Sc)


# ---------------------------------------------------------------------------
# growth rates

def _mode_count(W):
    """Interior sign changes of Re W, ignoring near-zero samples."""
    w = np.real(W[1:-1])
    w = w[np.abs(w) > 1e-8 * (np.abs(w).max() + 1e-300)]
    if w.size < 2:
        return 1
    return int(np.count_nonzero(np.sign(w[:-1]) != np.sign(w[1:]))) + 1


def growth_rate(bs, mp, n_z=None, quad=None):
    """Leading eigenvalue and eigenfunctions at one (k, R) point."""
    if n_z is not None and n_z != bs.z.size:
        raise ValueError("n_z must match the base-state grid; rebuild the "
                         "base state at the desired resolution")
    quad, Sc = _resolve(bs, quad, mp.Sc)
    bl = _blocks_for(bs, quad, mp.l, mp.m)
    A, B = _gamma_pencil(bl, mp.R, Sc)
    gamma, vec = leading_eigenpair(A, B, finite_cutoff=_EIG_CUTOFF)
    n = bs.z.size
    W = vec[:n]
    T = vec[n:]
    return GrowthRateResult(gamma=complex(gamma), W=W, ThetaTilde=T,
                            mode_number=_mode_count(W))


def growth_curve(bs, k, R_values, quad=None, Sc=None):
    """Leading gamma at each R in order, for one wavenumber."""
    out = []
    for R in R_values:
        res = growth_rate(bs, ModeParams(l=float(k), m=0.0, R=float(R),
                                         Sc=Sc), quad=quad)
        out.append((float(R), res.gamma))
    return out


def _spectrum(bl, R, Sc):
    A, B = _gamma_pencil(bl, R, Sc)
    return eigenvalues(A, B)


def _leading_re(vals, oscillatory=None):
    """Max real part, optionally restricted by |Im| against the floor."""
    vals = vals[np.abs(vals) < _EIG_CUTOFF]
    if oscillatory is True:
        vals = vals[np.abs(vals.imag) > SIGMA_FLOOR]
    elif oscillatory is False:
        vals = vals[np.abs(vals.imag) <= SIGMA_FLOOR]
    if vals.size == 0:
        return None, 0.0
    i = int(np.argmax(vals.real))
    return float(vals[i].real), float(vals[i].imag)


# ---------------------------------------------------------------------------
# neutral points

def _stationary_thresholds(bl):
    """All Rayleigh numbers with a stationary neutral mode at this k.

    With gamma = 0 the pencil reads A_base x = R (-A_R) x; the finite,
    essentially-real, positive eigenvalues R are the stationary neutral
    thresholds, smallest first.
    """
    vals = eigenvalues(bl.A_base, -bl.A_R)
    vals = vals[np.abs(vals) < _EIG_CUTOFF]
    real = vals[np.abs(vals.imag) <= 1e-6 * np.abs(vals.real)]
    pos = np.sort(real.real[real.real > 0.0])
    return pos


def neutral_point(bs, k, branch_hint="stationary", R_bracket=None,
                  quad=None, Sc=None, rtol=1e-10):
    """Neutral Rayleigh number at one wavenumber.

    Root of Re(gamma_leading)(R) = 0 restricted to the requested branch:
    ``stationary`` tracks the essentially-real leading mode, ``oscillatory``
    the leading mode with |Im gamma| above the floor.  Returns (R, sigma).
    """
    if branch_hint not in ("stationary", "oscillatory"):
        raise ValueError("branch_hint must be 'stationary' or 'oscillatory'")
    quad, Sc = _resolve(bs, quad, Sc)
    bl = _blocks_for(bs, quad, float(k), 0.0)
    oscillatory = branch_hint == "oscillatory"

    def f(R):
        re, _ = _leading_re(_spectrum(bl, R, Sc), oscillatory=oscillatory)
        if re is None:
            # no mode of the requested kind in the spectrum at this R
            return -1.0
        return re

    if R_bracket is None:
        thresholds = _stationary_thresholds(bl)
        if thresholds.size == 0:
            raise ValueError(f"no stationary threshold found at k={k:g}")
        R_s = thresholds[0]
        if oscillatory:
            found = _oscillatory_point(bl, Sc, R_s)
            if found is None:
                raise ValueError(f"no oscillatory crossing below the "
                                 f"stationary threshold at k={k:g}")
            return found
        R_bracket = (R_s * 0.99, R_s * 1.01)
    lo, hi = R_bracket
    flo, fhi = f(lo), f(hi)
    grow = 0
    while flo * fhi > 0.0 and grow < 8:
        span = hi - lo
        if abs(flo) < abs(fhi):
            lo = max(lo - span, 1e-8)
            flo = f(lo)
        else:
            hi += span
            fhi = f(hi)
        grow += 1
    R_root = brent_root(f, lo, hi, rtol=rtol)
    _, sigma = _leading_re(_spectrum(bl, R_root, Sc), oscillatory=oscillatory)
    return float(R_root), float(sigma)


def _oscillatory_point(bl, Sc, R_stat, probe_factor=0.82, floor_ratio=1e6):
    """Oscillatory crossing below a stationary threshold, if any.

    The complex-pair growth rate need not stay complex all the way up to
    the stationary threshold: the pair can collide onto the real axis well
    below it, and the collided (real) modes may then stay unstable over a
    wide range of Rayleigh numbers without ever crossing zero — in which
    case the first real threshold sits far above the physical onset.  So
    descend through a geometric ladder of Rayleigh numbers, note where the
    leading oscillatory mode is unstable, and bracket its zero crossing.
    The descent stops early once *every* mode is stable, since below the
    lowest neutral point no branch of any kind is left to cross.
    """
    def f(R):
        re, _ = _leading_re(_spectrum(bl, R, Sc), oscillatory=True)
        return -1.0 if re is None else re

    def probe(R):
        vals = _spectrum(bl, R, Sc)
        re_osc, _ = _leading_re(vals, oscillatory=True)
        re_all, _ = _leading_re(vals)
        return (-1.0 if re_osc is None else re_osc), re_all

    R = R_stat * (1.0 - 1e-3)
    f_R, f_all = probe(R)
    R_above = R if f_R > 0.0 else None
    if R_above is None and f_all < 0.0:
        return None
    bracket = None
    while R > R_stat / floor_ratio:
        R_new = R * probe_factor
        f_new, f_all = probe(R_new)
        if R_above is None:
            if f_new > 0.0:
                R_above = R_new
            elif f_all < 0.0:
                return None
        elif f_new < 0.0:
            bracket = (R_new, R_above)
            break
        else:
            R_above = R_new
        R = R_new
    if bracket is None:
        return None
    R_root = brent_root(f, bracket[0], bracket[1], rtol=1e-10)
    _, sigma = _leading_re(_spectrum(bl, R_root, Sc), oscillatory=True)
    if abs(sigma) <= SIGMA_FLOOR:
        return None
    return float(R_root), float(abs(sigma))


# ---------------------------------------------------------------------------
# neutral curves and the critical mode

def trace_neutral_curve(bs, k_range, n_k, quad=None, Sc=None):
    """Neutral branches over a wavenumber scan.

    Returns the first stationary branch and, if present, the oscillatory
    branch that exists for k up to its merge point k_b.  Wavenumbers where
    the solve fails are skipped with a warning.
    """
    k_min, k_max = k_range
    if k_min <= 0.0:
        raise ValueError("k_min must be positive")
    quad, Sc = _resolve(bs, quad, Sc)
    ks = np.linspace(k_min, k_max, int(n_k))

    stat_pts, osc_pts = [], []
    for k in ks:
        try:
            bl = _blocks_for(bs, quad, float(k), 0.0)
            thresholds = _stationary_thresholds(bl)
            if thresholds.size == 0:
                warnings.warn(f"no stationary threshold at k={k:g}; skipped")
                continue
            R_s = float(thresholds[0])
            stat_pts.append((float(k), R_s, 0.0))
            osc = _oscillatory_point(bl, Sc, R_s)
            if osc is not None:
                osc_pts.append((float(k), osc[0], osc[1]))
        except Exception as exc:  # keep scanning, report the hole
            warnings.warn(f"neutral point failed at k={k:g}: {exc}")

    branches = []
    if stat_pts:
        branches.append(NeutralBranch(points=np.array(stat_pts),
                                      kind="stationary"))
    if osc_pts:
        k_b = _refine_merge(bs, quad, Sc, np.array(osc_pts), ks)
        branches.append(NeutralBranch(points=np.array(osc_pts),
                                      kind="oscillatory", k_b=k_b))
    return branches


def _refine_merge(bs, quad, Sc, osc_pts, ks):
    """Bisect the wavenumber where the oscillatory branch disappears."""
    k_last = osc_pts[-1, 0]
    later = ks[ks > k_last]
    if later.size == 0:
        return float(k_last)
    k_lo, k_hi = float(k_last), float(later[0])
    for _ in range(8):
        k_mid = 0.5 * (k_lo + k_hi)
        bl = _blocks_for(bs, quad, k_mid, 0.0)
        thresholds = _stationary_thresholds(bl)
        osc = None
        if thresholds.size:
            osc = _oscillatory_point(bl, Sc, float(thresholds[0]))
        if osc is None:
            k_hi = k_mid
        else:
            k_lo = k_mid
    return 0.5 * (k_lo + k_hi)


def _branch_R_of_k(bs, quad, Sc, kind, R_seed):
    """Callable R(k) on one branch, for the golden-section refinement."""
    big = 1e12

    def f(k):
        try:
            bl = _blocks_for(bs, quad, float(k), 0.0)
            thresholds = _stationary_thresholds(bl)
            if thresholds.size == 0:
                return big
            R_s = float(thresholds[0])
            if kind == "stationary":
                return R_s
            osc = _oscillatory_point(bl, Sc, R_s)
            return big if osc is None else osc[0]
        except Exception:
            return big

    return f


def critical_mode(branches, bs=None, quad=None, Sc=None, k_rtol=1e-4):
    """Most unstable neutral point over all branches.

    The discrete minimum over the branch points is refined by a
    golden-section search in k when the base state is supplied; the
    eigenfunction at the refined point then provides the mode number.
    """
    best = None
    best_kind = None
    for br in branches:
        pt = br.min_point()
        if best is None or pt[1] < best[1]:
            best, best_kind = pt, br.kind
    if best is None:
        raise ValueError("no neutral branch points supplied")
    k_c, R_c, sigma_c = (float(best[0]), float(best[1]), float(best[2]))

    mode = None
    if bs is not None:
        quad, Sc = _resolve(bs, quad, Sc)
        src = next(br for br in branches if br.kind == best_kind)
        pts = src.points
        i = int(np.argmin(pts[:, 1]))
        lo = pts[i - 1, 0] if i > 0 else max(pts[0, 0] * 0.5, 1e-3)
        hi = pts[i + 1, 0] if i + 1 < len(pts) else pts[-1, 0] * 1.5
        f = _branch_R_of_k(bs, quad, Sc, best_kind, R_c)
        res = minimize_scalar(f, bracket=None, bounds=(lo, hi),
                              method="bounded",
                              options={"xatol": k_rtol * max(k_c, 1.0)})
        if np.isfinite(res.fun) and res.fun < R_c * (1.0 + 1e-12):
            k_c, R_c = float(res.x), float(res.fun)
        bl = _blocks_for(bs, quad, k_c, 0.0)
        if best_kind == "oscillatory":
            osc = _oscillatory_point(bl, Sc, float(
                _stationary_thresholds(bl)[0]))
            if osc is not None:
                R_c, sigma_c = osc
        gr = growth_rate(bs, ModeParams(l=k_c, m=0.0, R=R_c, Sc=Sc),
                         quad=quad)
        mode = gr.mode_number
        sigma_val = gr.gamma.imag
        if best_kind == "oscillatory" and abs(sigma_val) > SIGMA_FLOOR:
            sigma_c = abs(sigma_val)

    overstable = best_kind == "oscillatory" and abs(sigma_c) > SIGMA_FLOOR
    return CriticalMode(k_c=k_c, R_c=R_c, lambda_c=2.0 * pi / k_c,
                        sigma_c=abs(sigma_c) if overstable else 0.0,
                        overstable=overstable, mode_number=mode)


def find_critical_mode(bs, k_min=0.4, k_max=8.0, n_k=20, quad=None, Sc=None):
    """Scan, trace, and refine: the critical mode of one base state."""
    branches = trace_neutral_curve(bs, (k_min, k_max), n_k, quad=quad, Sc=Sc)
    return critical_mode(branches, bs=bs, quad=quad, Sc=Sc)
