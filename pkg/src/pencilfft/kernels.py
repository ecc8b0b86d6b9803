"""Serial 1D transform kernels applied to batches of lines.

All transforms are unnormalized: ``c2c(backward) o c2c(forward) = n`` and
``c2r o r2c = n``.  The FFT is a self-sorting mixed-radix (2, 3, 5)
Stockham iteration written with elementwise numpy operations on separate
real and imaginary float64 arrays.  Each output element is therefore the
result of the same sequence of correctly rounded operations no matter how
many lines are batched together or how they were laid out in memory, which
makes every parallel configuration bit-identical to the serial one.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "Kind",
    "KernelSetup",
    "setup",
    "c2c",
    "r2c",
    "c2r",
    "cosine",
    "icosine",
    "empty",
    "batched",
    "apply_along",
    "factorize",
]


class Kind(str, enum.Enum):
    C2C_FORWARD = "c2c_forward"
    C2C_BACKWARD = "c2c_backward"
    R2C = "r2c"
    C2R = "c2r"
    COS = "cos"
    ICOS = "icos"
    EMPTY = "empty"


def factorize(n: int) -> tuple[int, ...]:
    """Radix sequence for ``n``; raises if ``n`` is not 5-smooth."""
    if n < 1:
        raise ValueError(f"transform length must be positive, got {n}")
    radices = []
    m = n
    for r in (5, 3, 2):
        while m % r == 0:
            radices.append(r)
            m //= r
    if m != 1:
        raise ValueError(f"length {n} has prime factors other than 2, 3, 5")
    return tuple(radices)


def _unit_root(k: np.ndarray, n: int, sign: int):
    """cos and sin parts of exp(sign * 2*pi*i*k/n) with k reduced mod n."""
    k = np.asarray(k) % n
    theta = 2.0 * np.pi * k / n
    return np.cos(theta), sign * np.sin(theta)


@dataclass(frozen=True, eq=False)
class _FFTPlan:
    n: int
    sign: int
    radices: tuple[int, ...]
    # per stage: (radix, m, twiddle_re, twiddle_im) with twiddles shaped (r-1, 1, m)
    stages: tuple = field(repr=False)


@lru_cache(maxsize=None)
def _fft_plan(n: int, sign: int) -> _FFTPlan:
    radices = factorize(n)
    stages = []
    m = 1
    # combine from the innermost recursion level outwards
    for r in reversed(radices):
        mm = m * r
        j = np.arange(1, r)[:, None, None]
        k = np.arange(m)[None, None, :]
        wr, wi = _unit_root(j * k, mm, sign)
        stages.append((r, m, wr, wi))
        m = mm
    return _FFTPlan(n, sign, radices, tuple(stages))


def _butterfly(r, xr, xi, sign):
    """Radix-r DFT across axis 1 of (batch, r, S, m) arrays; returns lists."""
    if r == 2:
        ar, ai = xr[:, 0], xi[:, 0]
        br, bi = xr[:, 1], xi[:, 1]
        return [ar + br, ar - br], [ai + bi, ai - bi]
    if r == 3:
        s = sign * 0.86602540378443864676
        ar, ai = xr[:, 0], xi[:, 0]
        pr = xr[:, 1] + xr[:, 2]
        pi = xi[:, 1] + xi[:, 2]
        mr = xr[:, 1] - xr[:, 2]
        mi = xi[:, 1] - xi[:, 2]
        tr = ar - 0.5 * pr
        ti = ai - 0.5 * pi
        # i*s*(m) = -s*mi + i*s*mr
        ur = s * mi
        ui = s * mr
        return [ar + pr, tr - ur, tr + ur], [ai + pi, ti + ui, ti - ui]
    if r == 5:
        c1 = 0.30901699437494742410
        c2 = -0.80901699437494742410
        s1 = sign * 0.95105651629515357212
        s2 = sign * 0.58778525229247312917
        ar, ai = xr[:, 0], xi[:, 0]
        p1r = xr[:, 1] + xr[:, 4]
        p1i = xi[:, 1] + xi[:, 4]
        m1r = xr[:, 1] - xr[:, 4]
        m1i = xi[:, 1] - xi[:, 4]
        p2r = xr[:, 2] + xr[:, 3]
        p2i = xi[:, 2] + xi[:, 3]
        m2r = xr[:, 2] - xr[:, 3]
        m2i = xi[:, 2] - xi[:, 3]
        t1r = ar + c1 * p1r + c2 * p2r
        t1i = ai + c1 * p1i + c2 * p2i
        t2r = ar + c2 * p1r + c1 * p2r
        t2i = ai + c2 * p1i + c1 * p2i
        # multiply by i*s: (qr + i qi) -> (-qi + i qr)
        q1r = s1 * m1r + s2 * m2r
        q1i = s1 * m1i + s2 * m2i
        q2r = s2 * m1r - s1 * m2r
        q2i = s2 * m1i - s1 * m2i
        return (
            [ar + p1r + p2r, t1r - q1i, t2r - q2i, t2r + q2i, t1r + q1i],
            [ai + p1i + p2i, t1i + q1r, t2i + q2r, t2i - q2r, t1i - q1r],
        )
    raise ValueError(f"unsupported radix {r}")


def _fft_split(xr: np.ndarray, xi: np.ndarray, plan: _FFTPlan):
    """Unnormalized DFT of each row of (batch, n) real/imag arrays."""
    batch, n = xr.shape
    s = n
    for r, m, wr, wi in plan.stages:
        s //= r
        # state[j, s', k]: DFT (length m) of the subsequence x[s' + s*j :: s*r]
        yr = xr.reshape(batch, r, s, m)
        yi = xi.reshape(batch, r, s, m)
        if m > 1:
            tr = yr[:, 1:] * wr - yi[:, 1:] * wi
            ti = yr[:, 1:] * wi + yi[:, 1:] * wr
            yr = np.concatenate((yr[:, :1], tr), axis=1)
            yi = np.concatenate((yi[:, :1], ti), axis=1)
        outr, outi = _butterfly(r, yr, yi, plan.sign)
        # new state indexed [s', k2, k1] -> flat s' * (r*m) + k2*m + k1
        xr = np.stack(outr, axis=2).reshape(batch, n)
        xi = np.stack(outi, axis=2).reshape(batch, n)
    return xr, xi


@dataclass(frozen=True, eq=False)
class KernelSetup:
    """Immutable per-length kernel configuration."""

    n: int
    kind: Kind
    radices: tuple[int, ...]
    tables: dict = field(repr=False, default_factory=dict)

    @property
    def out_length(self) -> int:
        if self.kind is Kind.R2C:
            return self.n // 2 + 1
        return self.n

    @property
    def in_length(self) -> int:
        if self.kind is Kind.C2R:
            return self.n // 2 + 1
        return self.n

    @property
    def real_input(self) -> bool:
        return self.kind in (Kind.R2C, Kind.COS, Kind.ICOS)

    @property
    def real_output(self) -> bool:
        return self.kind in (Kind.C2R, Kind.COS, Kind.ICOS)


def setup(n: int, kind: Kind | str) -> KernelSetup:
    kind = Kind(kind)
    tables = {}
    if kind in (Kind.C2C_FORWARD, Kind.C2C_BACKWARD):
        radices = factorize(n)
    elif kind in (Kind.R2C, Kind.C2R):
        if n % 2:
            raise ValueError(f"real transforms need even length, got {n}")
        radices = factorize(n // 2)
        tables["w"] = _unit_root(np.arange(n // 2 + 1), n, -1)
    elif kind in (Kind.COS, Kind.ICOS):
        if n < 2:
            raise ValueError(f"cosine transform needs n >= 2, got {n}")
        try:
            radices = factorize(2 * (n - 1))
        except ValueError:
            # direct summation fallback when the mirrored length is not 5-smooth
            radices = ()
            j = np.arange(n)
            tables["cos"] = _unit_root(np.outer(j, j), 2 * (n - 1), 1)[0]
    else:
        radices = ()
    return KernelSetup(n, kind, radices, tables)


def _rows(x, n, dtype):
    x = np.asarray(x, dtype=dtype)
    if x.shape[-1] != n:
        raise ValueError(f"expected length {n} along the last axis, got {x.shape[-1]}")
    return x.reshape(-1, n), x.shape[:-1]


def _c2c_rows(xr, xi, n, sign):
    return _fft_split(xr, xi, _fft_plan(n, sign))


def c2c(s: KernelSetup, x, direction: str | None = None) -> np.ndarray:
    """Complex DFT along the last axis; sign -1 forward, +1 backward."""
    if direction is None:
        direction = "backward" if s.kind is Kind.C2C_BACKWARD else "forward"
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    rows, lead = _rows(x, s.n, np.complex128)
    yr, yi = _c2c_rows(rows.real.copy(), rows.imag.copy(), s.n,
                       -1 if direction == "forward" else 1)
    out = np.empty(yr.shape, dtype=np.complex128)
    out.real = yr
    out.imag = yi
    return out.reshape(lead + (s.n,))


def _r2c_rows(x, s: KernelSetup):
    n = s.n
    h = n // 2
    # pack even/odd samples into one half-length complex sequence
    zr, zi = _c2c_rows(x[:, 0::2].copy(), x[:, 1::2].copy(), h, -1)
    k = np.arange(h + 1)
    zr_k, zi_k = zr[:, k % h], zi[:, k % h]
    cr, ci = zr[:, (h - k) % h], -zi[:, (h - k) % h]
    er = 0.5 * (zr_k + cr)
    ei = 0.5 * (zi_k + ci)
    # odd part: (Z_k - conj(Z_{h-k})) / 2i
    dr = zr_k - cr
    di = zi_k - ci
    orr = 0.5 * di
    oi = -0.5 * dr
    wr, wi = s.tables["w"]
    xr = er + (orr * wr - oi * wi)
    xi = ei + (orr * wi + oi * wr)
    return xr, xi


def r2c(s: KernelSetup, x) -> np.ndarray:
    """Modes 0..n/2 of the forward DFT of real data along the last axis."""
    if s.n % 2:
        raise ValueError(f"r2c needs even length, got {s.n}")
    rows, lead = _rows(x, s.n, np.float64)
    xr, xi = _r2c_rows(rows, s)
    # exact zeros where the symmetry demands them
    xi[:, 0] = 0.0
    xi[:, -1] = 0.0
    out = np.empty(xr.shape, dtype=np.complex128)
    out.real = xr
    out.imag = xi
    return out.reshape(lead + (s.n // 2 + 1,))


def _c2r_rows(xr, xi, s: KernelSetup):
    n = s.n
    h = n // 2
    k = np.arange(h)
    ar, ai = xr[:, k], xi[:, k]
    br, bi = xr[:, h - k], -xi[:, h - k]
    # Z_k = (X_k + conj X_{h-k}) + i * conj(w^k) * (X_k - conj X_{h-k})
    sr = ar + br
    si = ai + bi
    dr = ar - br
    di = ai - bi
    wr, wi = s.tables["w"]
    wr, wi = wr[:h], -wi[:h]
    tr = dr * wr - di * wi
    ti = dr * wi + di * wr
    zr = sr - ti
    zi = si + tr
    yr, yi = _c2c_rows(zr, zi, h, 1)
    out = np.empty((xr.shape[0], n))
    out[:, 0::2] = yr
    out[:, 1::2] = yi
    return out


def c2r(s: KernelSetup, x) -> np.ndarray:
    """Unnormalized inverse of :func:`r2c`; imaginary parts of modes 0 and n/2 are ignored."""
    rows, lead = _rows(x, s.n // 2 + 1, np.complex128)
    xi = rows.imag.copy()
    # a real signal has real modes 0 and n/2
    xi[:, [0, s.n // 2]] = 0.0
    out = _c2r_rows(rows.real.copy(), xi, s)
    return out.reshape(lead + (s.n,))


def _dct1_rows(f, s: KernelSetup):
    """sum_j g_j cos(pi j k / (n-1)) with half weights on both end samples."""
    n = s.n
    if "cos" in s.tables:
        c = s.tables["cos"]
        acc = 0.5 * f[:, :1] * c[0] + 0.5 * f[:, n - 1:] * c[n - 1]
        for j in range(1, n - 1):
            acc = acc + f[:, j:j + 1] * c[j]
        return acc
    # mirror to length 2(n-1); the real part of its DFT is twice the sum
    ext = np.concatenate((f, f[:, n - 2:0:-1]), axis=1)
    yr, _ = _c2c_rows(ext, np.zeros_like(ext), 2 * (n - 1), -1)
    return 0.5 * yr[:, :n]


def cosine(s: KernelSetup, f) -> np.ndarray:
    """Chebyshev coefficients of samples taken at z_j = cos(pi j / (n-1)).

    Normalized so that ``f(z_j) = sum_k c_k T_k(z_j)``.
    """
    rows, lead = _rows(f, s.n, np.float64)
    c = _dct1_rows(rows, s) * (2.0 / (s.n - 1))
    c[:, 0] *= 0.5
    c[:, -1] *= 0.5
    return c.reshape(lead + (s.n,))


def icosine(s: KernelSetup, c) -> np.ndarray:
    """Evaluate a Chebyshev series at the Gauss-Lobatto points (inverse of :func:`cosine`)."""
    rows, lead = _rows(c, s.n, np.float64)
    g = rows.copy()
    g[:, 0] *= 2.0
    g[:, -1] *= 2.0
    return _dct1_rows(g, s).reshape(lead + (s.n,))


def empty(x):
    return x


def _transform_rows(s: KernelSetup, rows: np.ndarray) -> np.ndarray:
    kind = s.kind
    if kind is Kind.EMPTY:
        return rows.copy()
    if kind is Kind.C2C_FORWARD:
        return c2c(s, rows, "forward")
    if kind is Kind.C2C_BACKWARD:
        return c2c(s, rows, "backward")
    if kind is Kind.R2C:
        return r2c(s, rows)
    if kind is Kind.C2R:
        return c2r(s, rows)
    # cosine transforms act on real and imaginary parts independently
    fn = cosine if kind is Kind.COS else icosine
    if np.iscomplexobj(rows):
        out = np.empty(rows.shape, dtype=np.complex128)
        out.real = fn(s, rows.real)
        out.imag = fn(s, rows.imag)
        return out
    return fn(s, rows)


def batched(s: KernelSetup, buffer: np.ndarray, count: int, stride: int = 1,
            dist: int | None = None) -> np.ndarray:
    """Transform ``count`` vectors held in a flat ``buffer`` in place.

    Element ``i`` of vector ``v`` lives at ``buffer[v*dist + i*stride]``.
    Only kinds whose input and output lengths agree can run in place.
    """
    if s.in_length != s.out_length:
        raise ValueError(f"{s.kind.value} changes the line length; use apply_along")
    n = s.n
    if dist is None:
        dist = n * stride
    if buffer.ndim != 1:
        raise ValueError("buffer must be one-dimensional")
    if count == 0:
        return buffer
    idx = np.arange(count)[:, None] * dist + np.arange(n)[None, :] * stride
    if idx.min() < 0 or idx.max() >= buffer.size:
        raise ValueError("vector geometry exceeds the buffer")
    if np.unique(idx).size != idx.size:
        raise ValueError(f"stride={stride}, dist={dist} makes vectors overlap")
    buffer[idx] = _transform_rows(s, buffer[idx])
    return buffer


def apply_along(s: KernelSetup, arr: np.ndarray, axis: int) -> np.ndarray:
    """Apply the kernel to every line of ``arr`` along ``axis``.

    Returns a new Fortran-ordered array; the transformed axis changes length
    for r2c/c2r.
    """
    if arr.shape[axis] != s.in_length:
        raise ValueError(
            f"axis {axis} has length {arr.shape[axis]}, kernel expects {s.in_length}")
    moved = np.moveaxis(arr, axis, -1)
    lead = moved.shape[:-1]
    rows = moved.reshape(-1, s.in_length)
    out = _transform_rows(s, rows).reshape(lead + (s.out_length,))
    return np.asfortranarray(np.moveaxis(out, -1, axis))
