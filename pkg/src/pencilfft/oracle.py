"""Direct-summation reference transforms.

These build dense transform matrices from closed-form entries and apply
them one dimension at a time.  They share no code with :mod:`kernels` and
are meant only for small grids.
"""

from __future__ import annotations

import numpy as np

__all__ = ["dft_matrix", "cheb_matrix", "dft", "forward3d", "backward3d"]


def dft_matrix(n: int, sign: int = -1) -> np.ndarray:
    jk = np.outer(np.arange(n), np.arange(n)) % n
    return np.exp(sign * 2j * np.pi * jk / n)


def cheb_matrix(n: int) -> np.ndarray:
    """Samples at z_j = cos(pi j/(n-1)) -> Chebyshev coefficients, via T_k(z_j)."""
    z = np.cos(np.pi * np.arange(n) / (n - 1))
    # T_k(z_j) evaluated by the three-term recurrence
    t = np.empty((n, n))
    t[:, 0] = 1.0
    if n > 1:
        t[:, 1] = z
    for k in range(2, n):
        t[:, k] = 2 * z * t[:, k - 1] - t[:, k - 2]
    return np.linalg.inv(t)


def dft(x: np.ndarray, sign: int = -1) -> np.ndarray:
    """Naive O(n^2) DFT along the last axis."""
    return np.asarray(x) @ dft_matrix(x.shape[-1], sign).T


def _apply(mat, arr, axis):
    return np.moveaxis(np.tensordot(mat, arr, axes=([1], [axis])), 0, axis)


def forward3d(field: np.ndarray, third: str = "fft") -> np.ndarray:
    """Half spectrum (nx//2+1, ny, nz) of a real (nx, ny, nz) field."""
    nx, ny, nz = field.shape
    out = _apply(dft_matrix(nx)[: nx // 2 + 1], field.astype(complex), 0)
    out = _apply(dft_matrix(ny), out, 1)
    if third == "fft":
        out = _apply(dft_matrix(nz), out, 2)
    elif third == "cheb":
        out = _apply(cheb_matrix(nz), out, 2)
    elif third != "empty":
        raise ValueError(f"unknown third transform {third!r}")
    return out


def backward3d(spectrum: np.ndarray, nx: int, third: str = "fft") -> np.ndarray:
    """Unnormalized inverse of :func:`forward3d` for a Hermitian half spectrum."""
    nc, ny, nz = spectrum.shape
    out = spectrum.astype(complex)
    if third == "fft":
        out = _apply(dft_matrix(nz, +1), out, 2)
    elif third == "cheb":
        out = _apply(np.linalg.inv(cheb_matrix(nz)), out, 2)
    out = _apply(dft_matrix(ny, +1), out, 1)
    # rebuild the full X spectrum from conjugate symmetry
    full = np.empty((nx, ny, nz), dtype=complex)
    full[:nc] = out
    full[nc:] = np.conj(out[1:nx - nc + 1][::-1])
    return _apply(dft_matrix(nx, +1), full, 0).real
