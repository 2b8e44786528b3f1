"""Pure-python reference implementation of the ray-propagation kernels.

The compiled extension (``photoconv._kernels``) provides the same two
functions with identical signatures; ``photoconv._backend`` picks whichever
is available.  Everything here is plain vectorised numpy so the package
works without a C toolchain.

Both kernels operate on a bundle of straight-line rays through a plane
layer, discretised on a common grid of levels.  Per ray and per segment the
caller supplies the complex attenuation factor ``decay = exp(-a)`` and the
two endpoint quadrature weights ``w_start``, ``w_end`` of the exact
single-segment update

    psi_next = decay * psi + w_start * f_start + w_end * f_end,

where ``f`` is the ray source sampled at the segment endpoints.  Rays in
the first ``n_up`` rows march from the first level upward; the remaining
rows march from the last level downward.
"""

import numpy as np

__all__ = ["ray_sweep", "fold_propagation"]


def ray_sweep(f, decay, w_start, w_end, n_up, init_down=None):
    """March every ray through the layer for a concrete source field.

    Parameters
    ----------
    f : (n_rays, n_z) complex array
        Source values along each ray.
    decay, w_start, w_end : (n_rays, n_z - 1) arrays
        Per-segment update coefficients.
    n_up : int
        Rays ``[0:n_up]`` start from level 0 with zero inflow and march up;
        rays ``[n_up:]`` start from the last level and march down.
    init_down : (n_rays - n_up,) array or None
        Optional inflow value at the top for the downward rays.

    Returns
    -------
    (n_rays, n_z) array of ray intensities.
    """
    f = np.asarray(f)
    n_rays, n_z = f.shape
    out = np.zeros((n_rays, n_z), dtype=np.result_type(f, decay))
    if init_down is not None:
        out[n_up:, n_z - 1] = init_down
    for j in range(n_z - 1):
        out[:n_up, j + 1] = (decay[:n_up, j] * out[:n_up, j]
                             + w_start[:n_up, j] * f[:n_up, j]
                             + w_end[:n_up, j] * f[:n_up, j + 1])
    for j in range(n_z - 2, -1, -1):
        out[n_up:, j] = (decay[n_up:, j] * out[n_up:, j + 1]
                         + w_start[n_up:, j] * f[n_up:, j + 1]
                         + w_end[n_up:, j] * f[n_up:, j])
    return out


def _propagation_chunk(decay, w_start, w_end, upward):
    """Dense propagation matrices for a chunk of rays.

    Returns T with ``T[r, i, j]`` = response of ray ``r`` at level ``i`` to a
    unit source value at level ``j`` (zero inflow).
    """
    n_rays, n_seg = decay.shape
    n_z = n_seg + 1
    T = np.zeros((n_rays, n_z, n_z), dtype=complex)
    if upward:
        for j in range(n_seg):
            T[:, j + 1, :] = decay[:, j, None] * T[:, j, :]
            T[:, j + 1, j] += w_start[:, j]
            T[:, j + 1, j + 1] += w_end[:, j]
    else:
        for j in range(n_seg - 1, -1, -1):
            T[:, j, :] = decay[:, j, None] * T[:, j + 1, :]
            T[:, j, j + 1] += w_start[:, j]
            T[:, j, j] += w_end[:, j]
    return T


def fold_propagation(decay, w_start, w_end, left_weights, coefs, n_up,
                     chunk=64):
    """Accumulate angular moments of the ray propagation operators.

    For each left weight family ``g`` (row of ``left_weights``, one scalar
    per ray) and each source-coefficient family ``c`` (``coefs[c, r, :]``,
    one profile per ray) this computes the dense matrix

        M[g, c] = sum_r  left_weights[g, r] * T_r @ diag(coefs[c, r, :]),

    where ``T_r`` is the ray-r propagation matrix.  The result maps nodal
    values of a shared scalar field (multiplying the per-ray coefficient
    profile) to the weighted angular sum of ray intensities at every level.

    Returns an array of shape (n_g, n_c, n_z, n_z), complex.
    """
    decay = np.asarray(decay)
    n_rays, n_seg = decay.shape
    n_z = n_seg + 1
    left_weights = np.asarray(left_weights, dtype=float)
    coefs = np.asarray(coefs)
    n_g = left_weights.shape[0]
    n_c = coefs.shape[0]
    out = np.zeros((n_g, n_c, n_z, n_z), dtype=complex)
    for lo in range(0, n_rays, chunk):
        hi = min(lo + chunk, n_rays)
        if hi <= n_up:
            blocks = [(lo, hi, True)]
        elif lo >= n_up:
            blocks = [(lo, hi, False)]
        else:
            blocks = [(lo, n_up, True), (n_up, hi, False)]
        for b_lo, b_hi, upward in blocks:
            T = _propagation_chunk(decay[b_lo:b_hi], w_start[b_lo:b_hi],
                                   w_end[b_lo:b_hi], upward)
            for g in range(n_g):
                for c in range(n_c):
                    out[g, c] += np.einsum("r,rij,rj->ij",
                                           left_weights[g, b_lo:b_hi], T,
                                           coefs[c, b_lo:b_hi, :],
                                           optimize=True)
    return out
