"""Pencil-to-pencil transposes over ROW and COLUMN groups.

A remap is pack -> all-to-all -> unpack.  Pack copies, for every peer, the
part of the local source pencil that the peer owns in the destination
orientation, already ordered in the destination storage order, so that the
receiver only does forward copies into place.  Copies run in cache-sized
tiles.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .decomp import GlobalGrid, PencilLayout, ProcGrid, check_procgrid, layout
from .procgroup import ExchangePlan, Group

__all__ = [
    "STAGES",
    "VARYING",
    "EVEN_PADDED",
    "RemapSchedule",
    "build_schedule",
    "pack",
    "exchange",
    "unpack",
    "remap",
    "blocked_copy",
]

VARYING = "varying"
EVEN_PADDED = "even_padded"
DEFAULT_CACHE_BLOCK = 32

# stage -> (source pencil, destination pencil, group kind)
STAGES = {
    "X->Y": ("X", "Y", "ROW"),
    "Y->Z": ("Y", "Z", "COLUMN"),
    "Z->Y": ("Z", "Y", "COLUMN"),
    "Y->X": ("Y", "X", "ROW"),
}

Box = tuple  # ((x0, x1), (y0, y1), (z0, z1)) half-open, global coordinates


def _intersect(a: PencilLayout, b: PencilLayout) -> Box:
    box = []
    for oa, ea, ob, eb in zip(a.offsets, a.extents, b.offsets, b.extents):
        lo, hi = max(oa, ob), min(oa + ea, ob + eb)
        box.append((lo, max(lo, hi)))
    return tuple(box)


def _volume(box: Box) -> int:
    return int(np.prod([hi - lo for lo, hi in box]))


def _local_slices(box: Box, lay: PencilLayout):
    return tuple(slice(lo - o, hi - o) for (lo, hi), o in zip(box, lay.offsets))


def _block_shape(box: Box, lay: PencilLayout):
    ext = [hi - lo for lo, hi in box]
    return tuple(ext[i] for i in ("XYZ".index(d) for d in lay.order))


def blocked_copy(dst: np.ndarray, src: np.ndarray, block: int | None = DEFAULT_CACHE_BLOCK):
    """``dst[...] = src`` in tiles of ``block`` along every axis."""
    if dst.shape != src.shape:
        raise ValueError(f"shape mismatch {src.shape} -> {dst.shape}")
    if block is None or all(n <= block for n in src.shape):
        dst[...] = src
        return
    ranges = [range(0, n, block) for n in src.shape]
    for starts in itertools.product(*ranges):
        tile = tuple(slice(s, s + block) for s in starts)
        dst[tile] = src[tile]


@dataclass(frozen=True)
class RemapSchedule:
    stage: str
    rank: int
    group_kind: str
    members: tuple[int, ...]
    src: PencilLayout
    dst: PencilLayout
    send_boxes: tuple[Box, ...]
    recv_boxes: tuple[Box, ...]
    send_counts: tuple[int, ...]
    recv_counts: tuple[int, ...]
    mode: str
    pad: int
    cache_block: int | None

    @property
    def group_size(self) -> int:
        return len(self.members)

    def _displs(self, counts):
        if self.mode == EVEN_PADDED:
            return tuple(j * self.pad for j in range(len(counts)))
        return tuple(int(d) for d in np.concatenate(([0], np.cumsum(counts)[:-1])))

    @property
    def send_displs(self) -> tuple[int, ...]:
        return self._displs(self.send_counts)

    @property
    def recv_displs(self) -> tuple[int, ...]:
        return self._displs(self.recv_counts)

    @property
    def send_size(self) -> int:
        if self.mode == EVEN_PADDED:
            return self.pad * self.group_size
        return sum(self.send_counts)

    @property
    def recv_size(self) -> int:
        if self.mode == EVEN_PADDED:
            return self.pad * self.group_size
        return sum(self.recv_counts)

    def exchange_plan(self) -> ExchangePlan:
        return ExchangePlan(self.send_counts, self.send_displs,
                            self.recv_counts, self.recv_displs)


def build_schedule(grid: GlobalGrid, pg: ProcGrid, rank: int, stage: str,
                   stride1: bool = False, useeven: bool = False,
                   cache_block: int | None = DEFAULT_CACHE_BLOCK) -> RemapSchedule:
    """Pack/unpack description of ``stage`` for ``rank``."""
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {sorted(STAGES)}")
    if cache_block is not None and cache_block < 1:
        raise ValueError(f"cache_block must be positive, got {cache_block}")
    check_procgrid(grid, pg)
    src_pencil, dst_pencil, kind = STAGES[stage]
    members = tuple(pg.row_members(rank) if kind == "ROW" else pg.col_members(rank))

    def src_of(r):
        return layout(grid, pg, r, src_pencil, stride1, complex=True)

    def dst_of(r):
        return layout(grid, pg, r, dst_pencil, stride1, complex=True)

    srcs = [src_of(r) for r in members]
    dsts = [dst_of(r) for r in members]
    me = members.index(rank)
    send_boxes = tuple(_intersect(srcs[me], d) for d in dsts)
    recv_boxes = tuple(_intersect(s, dsts[me]) for s in srcs)
    pad = max(_volume(_intersect(s, d)) for s in srcs for d in dsts)
    return RemapSchedule(
        stage=stage,
        rank=rank,
        group_kind=kind,
        members=members,
        src=srcs[me],
        dst=dsts[me],
        send_boxes=send_boxes,
        recv_boxes=recv_boxes,
        send_counts=tuple(_volume(b) for b in send_boxes),
        recv_counts=tuple(_volume(b) for b in recv_boxes),
        mode=EVEN_PADDED if useeven else VARYING,
        pad=pad,
        cache_block=cache_block,
    )


def pack(schedule: RemapSchedule, local: np.ndarray) -> np.ndarray:
    src, dst = schedule.src, schedule.dst
    if local.shape != src.shape:
        raise ValueError(f"source array has shape {local.shape}, layout expects {src.shape}")
    send = np.zeros(schedule.send_size, dtype=np.complex128)
    src_xyz = src.xyz_view(local)
    for box, count, displ in zip(schedule.send_boxes, schedule.send_counts, schedule.send_displs):
        if not count:
            continue
        block = send[displ:displ + count].reshape(_block_shape(box, dst), order="F")
        blocked_copy(dst.xyz_view(block), src_xyz[_local_slices(box, src)], schedule.cache_block)
    return send


def exchange(schedule: RemapSchedule, group: Group, send: np.ndarray) -> np.ndarray:
    if group.size != schedule.group_size:
        raise ValueError(f"{schedule.group_kind} group has {group.size} members, "
                         f"schedule expects {schedule.group_size}")
    if send.size != schedule.send_size:
        raise ValueError(f"send buffer of {send.size} elements, schedule expects {schedule.send_size}")
    if schedule.mode == EVEN_PADDED:
        return group.alltoall_even(send, schedule.pad)
    return group.alltoall_varying(send, schedule.exchange_plan())


def unpack(schedule: RemapSchedule, recv: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    dst = schedule.dst
    if recv.size != schedule.recv_size:
        raise ValueError(f"receive buffer of {recv.size} elements, schedule expects {schedule.recv_size}")
    if out is None:
        out = dst.empty()
    elif out.shape != dst.shape:
        raise ValueError(f"destination has shape {out.shape}, layout expects {dst.shape}")
    out_xyz = dst.xyz_view(out)
    for box, count, displ in zip(schedule.recv_boxes, schedule.recv_counts, schedule.recv_displs):
        if not count:
            continue
        block = recv[displ:displ + count].reshape(_block_shape(box, dst), order="F")
        blocked_copy(out_xyz[_local_slices(box, dst)], dst.xyz_view(block), schedule.cache_block)
    return out


def remap(schedule: RemapSchedule, group: Group, local: np.ndarray) -> np.ndarray:
    return unpack(schedule, exchange(schedule, group, pack(schedule, local)))
