"""Uniform Ising model on a rectangular grid: energies, Gibbs sampling, enumeration.

Spins live in {-1, +1}.  The model places weight exp(theta * sum x_i x_j) on a
configuration, summing over horizontally and vertically adjacent site pairs of
an M x W lattice with free (non-wrapping) boundaries.

Sampling is reproducible: all randomness comes from ``numpy.random.Generator``
seeded with PCG64, and the sweep schedule is a fixed raster scan, so a given
seed yields the same corpus on any platform.
"""

from __future__ import annotations

import numpy as np

MAX_ENUM_SITES = 20

# Sweeps per batch of pre-drawn uniforms; bounds memory at ~20 MB for 200x200.
_SWEEP_CHUNK = 64


class EnumerationCapError(ValueError):
    """Grid too large for exhaustive enumeration (more than MAX_ENUM_SITES sites)."""


def validate_dims(height, width):
    if height < 1 or width < 1:
        raise ValueError(f"grid dims must be positive, got {height}x{width}")
    return int(height), int(width)


def validate_theta(theta):
    theta = float(theta)
    if not np.isfinite(theta) or theta < 0.0:
        raise ValueError(f"edge correlation parameter must be finite and >= 0, got {theta}")
    return theta


def validate_image(pixels):
    """Coerce to an int8 (M, W) array of spins and check every entry is -1 or +1."""
    arr = np.asarray(pixels)
    if arr.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {arr.shape}")
    arr = arr.astype(np.int8, copy=False)
    if not np.all(np.abs(arr) == 1):
        raise ValueError("image entries must all be -1 or +1")
    return arr


def grid_edges(height, width):
    """All unordered adjacent site pairs, as (i, j) flat row-major indices, i < j."""
    height, width = validate_dims(height, width)
    edges = []
    for r in range(height):
        for c in range(width):
            i = r * width + c
            if c + 1 < width:
                edges.append((i, i + 1))
            if r + 1 < height:
                edges.append((i, i + width))
    return edges


def log_unnormalized_prob(pixels, theta):
    """theta * sum of adjacent-pair agreements (natural-log domain, unnormalized)."""
    arr = validate_image(pixels)
    theta = validate_theta(theta)
    horiz = np.sum(arr[:, :-1] * arr[:, 1:], dtype=np.int64)
    vert = np.sum(arr[:-1, :] * arr[1:, :], dtype=np.int64)
    return theta * float(horiz + vert)


def _raster_sweep_py(pix, u, p_up, height, width, n_sweeps):
    # One full systematic raster scan per sweep; each site is drawn from its
    # exact full conditional sigma(2 theta * neighbor_sum), table-indexed by
    # the integer neighbor sum in [-4, 4].
    k = 0
    for _ in range(n_sweeps):
        for r in range(height):
            for c in range(width):
                s = 0
                if r > 0:
                    s += pix[r - 1, c]
                if r + 1 < height:
                    s += pix[r + 1, c]
                if c > 0:
                    s += pix[r, c - 1]
                if c + 1 < width:
                    s += pix[r, c + 1]
                pix[r, c] = 1 if u[k] < p_up[s + 4] else -1
                k += 1


_sweep_kernel = None


def _get_sweep_kernel():
    global _sweep_kernel
    if _sweep_kernel is None:
        try:
            from numba import njit

            _sweep_kernel = njit(cache=True)(_raster_sweep_py)
        except ImportError:
            _sweep_kernel = _raster_sweep_py
    return _sweep_kernel


def gibbs_sample(height, width, theta, count, *, burn_in_sweeps=2000,
                 sweeps_between_samples=100, rng_seed=0):
    """Draw ``count`` images from one Gibbs chain.

    The chain starts from an i.i.d. uniform configuration, runs
    ``burn_in_sweeps`` raster sweeps, records a sample, then records another
    every ``sweeps_between_samples`` sweeps.  Deterministic per ``rng_seed``.
    """
    height, width = validate_dims(height, width)
    theta = validate_theta(theta)
    if count < 1:
        raise ValueError("count must be >= 1")
    if burn_in_sweeps < 0 or sweeps_between_samples < 0:
        raise ValueError("sweep counts must be nonnegative")

    rng = np.random.default_rng(rng_seed)
    pix = (rng.integers(0, 2, size=(height, width), dtype=np.int8) * 2 - 1)

    # p_up[s + 4] = P(x = +1 | neighbor sum s) = 1 / (1 + exp(-2 theta s))
    sums = np.arange(-4, 5, dtype=np.float64)
    p_up = 1.0 / (1.0 + np.exp(-2.0 * theta * sums))

    kernel = _get_sweep_kernel()
    n_sites = height * width

    def run(n_sweeps):
        done = 0
        while done < n_sweeps:
            chunk = min(_SWEEP_CHUNK, n_sweeps - done)
            u = rng.random(chunk * n_sites)
            kernel(pix, u, p_up, height, width, chunk)
            done += chunk

    samples = []
    run(burn_in_sweeps)
    samples.append(pix.copy())
    for _ in range(count - 1):
        run(sweeps_between_samples)
        samples.append(pix.copy())
    return samples


def _config_spins(n_sites):
    """(2^n, n) int8 matrix of spins; bit k of the row index is site k's spin."""
    configs = np.arange(1 << n_sites, dtype=np.uint32)
    bits = (configs[:, None] >> np.arange(n_sites, dtype=np.uint32)[None, :]) & 1
    return (bits.astype(np.int8) * 2 - 1)


def enumerate_exact(height, width, theta):
    """Exact probability table over all 2^(M*W) configurations.

    Index bit k (least significant first) is the spin of flat site k in
    row-major order, with bit 1 meaning +1.  Raises EnumerationCapError above
    MAX_ENUM_SITES sites.
    """
    height, width = validate_dims(height, width)
    theta = validate_theta(theta)
    n_sites = height * width
    if n_sites > MAX_ENUM_SITES:
        raise EnumerationCapError(
            f"{height}x{width} grid has {n_sites} sites; enumeration capped at {MAX_ENUM_SITES}")
    spins = _config_spins(n_sites)
    energy = np.zeros(1 << n_sites, dtype=np.float64)
    for i, j in grid_edges(height, width):
        energy += spins[:, i] * spins[:, j]
    energy *= theta
    energy -= energy.max()
    p = np.exp(energy)
    p /= p.sum()
    return p


def config_to_image(index, height, width):
    """Inverse of image_to_config for the enumeration bit convention."""
    n_sites = height * width
    bits = (int(index) >> np.arange(n_sites)) & 1
    return (bits.astype(np.int8) * 2 - 1).reshape(height, width)


def image_to_config(pixels):
    """Flat enumeration index of an image (bit k = row-major site k, 1 means +1)."""
    arr = validate_image(pixels)
    bits = (arr.ravel() > 0).astype(np.uint64)
    return int(bits @ (np.uint64(1) << np.arange(arr.size, dtype=np.uint64)))
