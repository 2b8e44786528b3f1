"""Shared numerical building blocks.

Exponential integrals, Gauss-Legendre quadrature, bracketed root finding,
dense generalized eigensolves and finite-difference matrices.  Everything
here is problem-agnostic; the physics lives in the other modules.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eig
from scipy.optimize import brentq

EULER_GAMMA = 0.5772156649015328606


@dataclass(frozen=True)
class Grid1D:
    """Uniform grid of ``n`` points spanning ``[lo, hi]`` inclusive."""

    lo: float
    hi: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("Grid1D needs at least 2 points")
        if not self.hi > self.lo:
            raise ValueError("Grid1D needs hi > lo")

    @property
    def h(self):
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def points(self):
        return np.linspace(self.lo, self.hi, self.n)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights for integration over ``[lo, hi]``."""

    nodes: np.ndarray
    weights: np.ndarray
    lo: float
    hi: float

    def integrate(self, f_vals):
        return np.asarray(f_vals) @ self.weights


def gauss_nodes(n, lo=-1.0, hi=1.0):
    """Gauss-Legendre rule with ``n`` nodes mapped onto ``[lo, hi]``.

    Exact for polynomials of degree <= 2n - 1.
    """
    if n < 1:
        raise ValueError("need at least one quadrature node")
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ValueError("quadrature interval must be finite")
    if not hi > lo:
        raise ValueError("quadrature interval must have hi > lo")
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    return QuadratureRule(lo + half * (x + 1.0), half * w, lo, hi)


# ----------------------------------------------------------------------
# Exponential integrals E_n(x) = int_1^inf exp(-x t) / t^n dt
# ----------------------------------------------------------------------

def _e1_series(x):
    # E1(x) = -gamma - ln x + sum_{k>=1} (-1)^{k+1} x^k / (k k!),  good for x < 1
    out = -EULER_GAMMA - np.log(x)
    term = np.ones_like(x)
    for k in range(1, 40):
        term = term * (-x) / k
        contrib = -term / k
        out += contrib
        if np.all(np.abs(contrib) < 1e-18):
            break
    return out

def _e1_contfrac_lentz(x):
    """Modified Lentz on E1(x) = e^-x / (x+1 - 1/(x+3 - 4/(x+5 - ...))), x >= 1."""
    tiny = 1e-300
    f = x + 1.0  # b0, never zero for x >= 1
    c = f.copy()
    d = np.zeros_like(x)
    for i in range(1, 200):
        a = -float(i * i)
        b = x + 2.0 * i + 1.0
        d = b + a * d
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = b + a / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        delta = c * d
        f = f * delta
        if np.all(np.abs(delta - 1.0) < 5e-17):
            break
    return np.exp(-x) / f


def expint(n, x):
    """Exponential integral E_n(x) for integer n >= 1 and x >= 0.

    Vectorized in ``x``.  E1 uses a power series below x = 1 and a
    continued fraction above; higher orders follow from the upward
    recurrence n E_{n+1}(x) = exp(-x) - x E_n(x).
    """
    if n < 1 or n != int(n):
        raise ValueError("expint order must be an integer >= 1")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if np.any(x < 0):
        raise ValueError("expint argument must be nonnegative")
    if n == 1 and np.any(x == 0.0):
        raise ValueError("E1 diverges at x = 0")

    zero = x == 0.0
    small = (~zero) & (x < 1.0)
    large = x >= 1.0

    e1 = np.empty_like(x)
    if np.any(small):
        e1[small] = _e1_series(x[small])
    if np.any(large):
        e1[large] = _e1_contfrac_lentz(x[large])
    e1[zero] = np.inf

    if n == 1:
        res = e1
    else:
        en = e1
        ex = np.exp(-x)
        with np.errstate(invalid="ignore"):
            for m in range(1, n):
                en = (ex - x * en) / m
            # recurrence is 0*inf at x=0; the limit is 1/(n-1)
            en = np.where(zero, 1.0 / (n - 1), en)
        res = en
    return float(res[0]) if scalar else res


def expint_all(nmax, x):
    """Stack [E_1(x), ..., E_nmax(x)] sharing one E1 evaluation.

    Unlike ``expint``, zeros in ``x`` are allowed: the E1 row carries the
    limit value +inf there (the kernel tables rely on this when source
    and evaluation nodes coincide).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((nmax,) + x.shape)
    zero = x == 0.0
    if np.any(zero):
        out[0] = np.where(zero, np.inf, expint(1, np.where(zero, 1.0, x)))
    else:
        out[0] = expint(1, x)
    if nmax > 1:
        ex = np.exp(-x)
        with np.errstate(invalid="ignore"):
            for m in range(1, nmax):
                out[m] = np.where(zero, 1.0 / m, (ex - x * out[m - 1]) / m)
    return out


# ----------------------------------------------------------------------
# Root finding
# ----------------------------------------------------------------------

def brent_root(f, lo, hi, xtol=1e-12, rtol=8.9e-16, maxiter=200):
    """Root of ``f`` in ``[lo, hi]``; raises if the bracket has no sign change."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise ValueError(
            f"no sign change over bracket [{lo:g}, {hi:g}]: f(lo)={flo:g}, f(hi)={fhi:g}"
        )
    return brentq(f, lo, hi, xtol=xtol, rtol=rtol, maxiter=maxiter)


# ----------------------------------------------------------------------
# Generalized eigenproblems
# ----------------------------------------------------------------------

def leading_eigenpair(A, B=None, finite_cutoff=1e8):
    """Rightmost finite eigenpair of A x = gamma B x (B=None means B=I).

    Returns ``(gamma, x)`` where gamma has the largest real part among
    finite eigenvalues, ties broken toward nonnegative imaginary part,
    and ``x`` is scaled so its largest-modulus component equals +1.
    """
    A = np.asarray(A)
    if B is not None and np.asarray(B).shape != A.shape:
        raise ValueError("A and B must have the same shape")
    vals, vecs = eig(A, B) if B is not None else eig(A)
    finite = np.isfinite(vals) & (np.abs(vals) < finite_cutoff)
    if not np.any(finite):
        raise np.linalg.LinAlgError("no finite eigenvalues in pencil")
    idx = np.flatnonzero(finite)
    re = vals[idx].real
    best_re = re.max()
    near = idx[re >= best_re - 1e-9 * max(1.0, abs(best_re))]
    pick = near[np.argmax(vals[near].imag)]
    if vals[pick].imag < 0:
        nonneg = near[vals[near].imag >= 0]
        if nonneg.size:
            pick = nonneg[np.argmax(vals[nonneg].real)]
    gamma = vals[pick]
    x = vecs[:, pick]
    j = np.argmax(np.abs(x))
    x = x / x[j]
    return gamma, x


def eigenvalues(A, B=None, finite_cutoff=1e8):
    """All finite eigenvalues of the pencil, sorted by descending real part."""
    A = np.asarray(A)
    vals = eig(A, B, right=False) if B is not None else eig(A, right=False)
    vals = vals[np.isfinite(vals) & (np.abs(vals) < finite_cutoff)]
    return vals[np.argsort(-vals.real)]


# ----------------------------------------------------------------------
# Finite differences (Fornberg weights)
# ----------------------------------------------------------------------

def fd_weights(xs, x0, m):
    """Weights w s.t. sum_j w[j] f(xs[j]) approximates f^(m)(x0).

    Classic Fornberg recursion; exact for polynomials of degree
    len(xs) - 1.
    """
    xs = np.asarray(xs, dtype=float)
    nn = len(xs)
    if m >= nn:
        raise ValueError("need more nodes than the derivative order")
    c = np.zeros((nn, m + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = xs[0] - x0
    for i in range(1, nn):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = xs[i] - x0
        for j in range(i):
            c3 = xs[i] - xs[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def fd_matrix(grid, deriv, min_order=4):
    """Dense differentiation matrix on a uniform grid.

    Interior rows use centered stencils, rows near the boundary shift to
    one-sided ones with the same width; every row is accurate to at least
    ``min_order``.
    """
    if isinstance(grid, Grid1D):
        z = grid.points
    else:
        z = np.asarray(grid, dtype=float)
    n = len(z)
    # stencil width giving >= min_order accuracy also for one-sided rows
    w = deriv + min_order
    if (deriv % 2) == 0:
        w += 1
    w = min(w, n)
    D = np.zeros((n, n))
    half = w // 2
    for i in range(n):
        j0 = min(max(i - half, 0), n - w)
        D[i, j0:j0 + w] = fd_weights(z[j0:j0 + w], z[i], deriv)
    return D
