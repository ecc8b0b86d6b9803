"""Block partitions, processor grids and pencil layouts.

A 3D grid of ``nx * ny * nz`` real points is distributed over a virtual
``m1 x m2`` processor grid.  Every rank owns one pencil: a box that spans
one dimension entirely and a block of the other two.  After the real-to-
complex transform in X only ``nc = nx // 2 + 1`` complex modes are kept
along X.

Local arrays are numpy arrays of shape ``(l1, l2, l3)`` stored in Fortran
order, so ``l1`` is the fastest-varying extent.  ``PencilLayout.order``
names the global dimension behind each local axis, e.g. ``"YXZ"``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

__all__ = [
    "DecompositionError",
    "GlobalGrid",
    "ProcGrid",
    "Partition1D",
    "PencilLayout",
    "partition",
    "validate_procgrid",
    "layout",
    "locate",
    "is_smooth",
]

_DIMS = "XYZ"


class DecompositionError(ValueError):
    """Raised for infeasible grids, partitions or processor grids."""


def is_smooth(n: int, primes=(2, 3, 5)) -> bool:
    """True if ``n`` has no prime factors outside ``primes``."""
    if n < 1:
        return False
    for p in primes:
        while n % p == 0:
            n //= p
    return n == 1


@dataclass(frozen=True)
class GlobalGrid:
    nx: int
    ny: int
    nz: int

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if int(n) != n or n < 2:
                raise DecompositionError(f"{name}={n} must be an integer >= 2")
            if not is_smooth(n):
                raise DecompositionError(
                    f"{name}={n} has prime factors other than 2, 3, 5")
        if self.nx % 2:
            raise DecompositionError(f"nx={self.nx} must be even")

    @property
    def nc(self) -> int:
        """Retained complex modes along X after the real-to-complex step."""
        return self.nx // 2 + 1

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.nc, self.ny, self.nz)

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nz

    def extent(self, dim: str, complex_x: bool = True) -> int:
        if dim == "X":
            return self.nc if complex_x else self.nx
        return self.ny if dim == "Y" else self.nz


@dataclass(frozen=True)
class ProcGrid:
    """Virtual ``m1 x m2`` processor grid.

    Ranks are mapped column-major: ``row = rank % m1``, ``col = rank // m1``,
    so a ROW group (fixed ``col``, size ``m1``) is a run of consecutive ranks.
    """

    m1: int
    m2: int

    def __post_init__(self):
        if self.m1 < 1 or self.m2 < 1:
            raise DecompositionError(f"processor grid {self.m1}x{self.m2} is empty")

    @property
    def size(self) -> int:
        return self.m1 * self.m2

    def coords(self, rank: int) -> tuple[int, int]:
        if not 0 <= rank < self.size:
            raise DecompositionError(f"rank {rank} outside [0, {self.size})")
        return rank % self.m1, rank // self.m1

    def rank_of(self, row: int, col: int) -> int:
        return row + self.m1 * col

    def row_members(self, rank: int) -> list[int]:
        """Ranks in this rank's ROW group (same column coordinate)."""
        _, col = self.coords(rank)
        return [self.rank_of(r, col) for r in range(self.m1)]

    def col_members(self, rank: int) -> list[int]:
        """Ranks in this rank's COLUMN group (same row coordinate)."""
        row, _ = self.coords(rank)
        return [self.rank_of(row, c) for c in range(self.m2)]

    def __str__(self):
        return f"{self.m1}x{self.m2}"


class Partition1D(NamedTuple):
    n: int
    m: int
    starts: tuple[int, ...]
    counts: tuple[int, ...]

    def owner(self, index: int) -> int:
        """Part holding global ``index``."""
        big = self.n % self.m
        q = self.n // self.m
        if index < big * (q + 1):
            return index // (q + 1)
        return big + (index - big * (q + 1)) // q


def partition(n: int, m: int) -> Partition1D:
    """Balanced block split of ``n`` items into ``m`` parts, larger parts first."""
    if m < 1 or n < m:
        raise DecompositionError(f"cannot split {n} items into {m} non-empty parts")
    q, big = divmod(n, m)
    counts = tuple(q + 1 if i < big else q for i in range(m))
    starts = tuple(int(s) for s in np.concatenate(([0], np.cumsum(counts)[:-1])))
    return Partition1D(n, m, starts, counts)


def validate_procgrid(grid: GlobalGrid, pg: ProcGrid, nranks: int | None = None) -> list[str]:
    """Return the list of violated processor-grid constraints (empty if ok)."""
    problems = []
    if nranks is not None and pg.size != nranks:
        problems.append(f"m1*m2 = {pg.size} != P = {nranks}")
    lim1 = min(grid.nc, grid.ny)
    lim2 = min(grid.ny, grid.nz)
    if pg.m1 > lim1:
        problems.append(f"m1 = {pg.m1} > min(nc, ny) = {lim1}")
    if pg.m2 > lim2:
        problems.append(f"m2 = {pg.m2} > min(ny, nz) = {lim2}")
    return problems


def check_procgrid(grid: GlobalGrid, pg: ProcGrid, nranks: int | None = None):
    problems = validate_procgrid(grid, pg, nranks)
    if problems:
        raise DecompositionError(
            f"processor grid {pg} infeasible for grid {grid.shape}: " + "; ".join(problems))


@dataclass(frozen=True)
class PencilLayout:
    """Local box owned by one rank for one pencil orientation.

    ``offsets`` and ``extents`` are indexed by global dimension (x, y, z);
    ``shape`` lists the same extents in storage order.
    """

    pencil: str
    order: str
    offsets: tuple[int, int, int]
    extents: tuple[int, int, int]
    complex: bool

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.extents[_DIMS.index(d)] for d in self.order)

    @property
    def axes(self) -> tuple[int, int, int]:
        """Local axis holding each global dimension x, y, z."""
        return tuple(self.order.index(d) for d in _DIMS)

    @property
    def size(self) -> int:
        return int(np.prod(self.extents))

    @property
    def dtype(self):
        return np.complex128 if self.complex else np.float64

    def box(self) -> tuple[slice, slice, slice]:
        """Global (x, y, z) slices covered by this pencil."""
        return tuple(slice(o, o + e) for o, e in zip(self.offsets, self.extents))

    def empty(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=self.dtype, order="F")

    def xyz_view(self, local: np.ndarray) -> np.ndarray:
        """View of a local array with axes permuted to (x, y, z)."""
        return local.transpose(self.axes)

    def from_xyz(self, block: np.ndarray) -> np.ndarray:
        """Fortran-ordered local array from an (x, y, z)-indexed block."""
        perm = tuple(_DIMS.index(d) for d in self.order)
        return np.asfortranarray(block.transpose(perm))


def _order(pencil: str, stride1: bool) -> str:
    if not stride1:
        return "XYZ"
    return {"X": "XYZ", "Y": "YXZ", "Z": "ZYX"}[pencil]


def layout(grid: GlobalGrid, pg: ProcGrid, rank: int, pencil: str,
           stride1: bool = False, complex: bool | None = None) -> PencilLayout:
    """Local layout of ``rank`` for an X-, Y- or Z-pencil.

    X-pencils are real (``nx`` along X) unless ``complex=True``, in which
    case they hold the ``nc`` modes produced by the X transform.  Y- and
    Z-pencils are always complex.
    """
    if pencil not in ("X", "Y", "Z"):
        raise ValueError(f"unknown pencil {pencil!r}")
    check_procgrid(grid, pg)
    if complex is None:
        complex = pencil != "X"
    elif not complex and pencil != "X":
        raise ValueError(f"{pencil}-pencils hold complex data")
    row, col = pg.coords(rank)

    if pencil == "X":
        px = partition(grid.nc if complex else grid.nx, 1)
        py = partition(grid.ny, pg.m1)
        pz = partition(grid.nz, pg.m2)
        ix, iy, iz = 0, row, col
    elif pencil == "Y":
        px = partition(grid.nc, pg.m1)
        py = partition(grid.ny, 1)
        pz = partition(grid.nz, pg.m2)
        ix, iy, iz = row, 0, col
    else:
        px = partition(grid.nc, pg.m1)
        py = partition(grid.ny, pg.m2)
        pz = partition(grid.nz, 1)
        ix, iy, iz = row, col, 0

    offsets = (px.starts[ix], py.starts[iy], pz.starts[iz])
    extents = (px.counts[ix], py.counts[iy], pz.counts[iz])
    return PencilLayout(pencil, _order(pencil, stride1), offsets, extents, complex)


def locate(grid: GlobalGrid, pg: ProcGrid, pencil: str, stride1: bool,
           index: tuple[int, int, int], complex: bool | None = None):
    """Map a global (x, y, z) index to ``(rank, local_index)``."""
    for rank in range(pg.size):
        lay = layout(grid, pg, rank, pencil, stride1, complex)
        rel = [i - o for i, o in zip(index, lay.offsets)]
        if all(0 <= r < e for r, e in zip(rel, lay.extents)):
            return rank, tuple(rel[_DIMS.index(d)] for d in lay.order)
    raise IndexError(f"global index {index} outside the grid")
