"""Timed forward+backward benchmark with round-trip validation.

Each configuration point initializes ``sin(2 pi x/nx) sin(2 pi y/ny)
sin(2 pi z/nz)`` on every rank, runs ``warmup`` untimed and ``iters`` timed
forward+backward pairs, and checks that the result equals the initial field
times the round-trip scale.  Records are appended to a CSV file that
:mod:`pencilfft.perfmodel` can fit.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import oracle
from .decomp import DecompositionError, GlobalGrid, PencilLayout, ProcGrid, validate_procgrid
from .perfmodel import flops_rate
from .plan import THIRD_KINDS, assemble, create, forward_global
from .procgroup import Harness

log = logging.getLogger(__name__)

__all__ = [
    "BenchConfig",
    "BenchRecord",
    "CSV_FIELDS",
    "init_sine",
    "procgrids",
    "run",
    "run_point",
    "sweep_report",
    "write_csv",
    "main",
]

CSV_FIELDS = ["nx", "ny", "nz", "P", "m1", "m2", "stride1", "useeven", "third", "iters",
              "t_mean", "t_min", "t_max", "t_comm_mean", "max_rel_err", "pass", "flops_rate"]
ROUNDTRIP_TOL = 1e-10
ORACLE_TOL = 1e-10
ORACLE_MAX_POINTS = 32 ** 3


@dataclass
class BenchConfig:
    grid: tuple[int, int, int]
    ranks: int = 1
    procgrid: tuple[int, int] | None = None
    sweep: bool = False
    auto: int | None = None
    stride1: bool = False
    useeven: bool = False
    third: str = "fft"
    iters: int = 1
    warmup: int = 0
    seed: int = 0
    out: str | None = None
    oracle: bool = False
    timeout: float = 60.0

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if self.ranks < 1:
            raise ValueError("ranks must be >= 1")
        if self.third not in THIRD_KINDS:
            raise ValueError(f"third must be one of {THIRD_KINDS}")
        if sum([self.procgrid is not None, self.sweep, self.auto is not None]) > 1:
            raise ValueError("choose at most one of procgrid, sweep, auto")


@dataclass
class BenchRecord:
    nx: int
    ny: int
    nz: int
    P: int
    m1: int
    m2: int
    stride1: bool
    useeven: bool
    third: str
    iters: int
    t_mean: float = float("nan")
    t_min: float = float("nan")
    t_max: float = float("nan")
    t_comm_mean: float = float("nan")
    max_rel_err: float = float("nan")
    passed: bool = False
    flops_rate: float = float("nan")
    reason: str = ""
    spectrum: np.ndarray | None = field(default=None, repr=False, compare=False)

    def csv_row(self) -> dict:
        row = {k: v for k, v in asdict(self).items() if k in CSV_FIELDS}
        row["pass"] = self.passed
        for k in ("stride1", "useeven", "pass"):
            row[k] = str(row[k]).lower()
        for k in ("t_mean", "t_min", "t_max", "t_comm_mean", "max_rel_err", "flops_rate"):
            row[k] = f"{row[k]:.6e}"
        return row


def init_sine(grid: GlobalGrid, lay: PencilLayout) -> np.ndarray:
    """Local part of sin(2 pi x/nx) sin(2 pi y/ny) sin(2 pi z/nz)."""
    x, y, z = (np.arange(o, o + e) for o, e in zip(lay.offsets, lay.extents))
    fx = np.sin(2 * np.pi * x / grid.nx)
    fy = np.sin(2 * np.pi * y / grid.ny)
    fz = np.sin(2 * np.pi * z / grid.nz)
    return lay.from_xyz(fx[:, None, None] * fy[None, :, None] * fz[None, None, :])


def divisors(n: int) -> list[int]:
    return [d for d in range(1, n + 1) if n % d == 0]


def procgrids(cfg: BenchConfig) -> list[ProcGrid]:
    """Processor grids to run for ``cfg``."""
    p = cfg.ranks
    if cfg.procgrid is not None:
        return [ProcGrid(*cfg.procgrid)]
    if cfg.sweep:
        grid = GlobalGrid(*cfg.grid)
        return [ProcGrid(m1, p // m1) for m1 in divisors(p)
                if not validate_procgrid(grid, ProcGrid(m1, p // m1), p)]
    if cfg.auto is not None:
        # smallest divisor that fills a node; the whole group otherwise
        m1 = next((d for d in divisors(p) if d >= cfg.auto), p)
        return [ProcGrid(m1, p // m1)]
    return [ProcGrid(1, p)]


def _rank_main(world, grid, pg, cfg: BenchConfig):
    plan = create(grid, pg, world, stride1=cfg.stride1, useeven=cfg.useeven, third=cfg.third)
    f = init_sine(grid, plan.input_layout)
    for _ in range(cfg.warmup):
        plan.backward(plan.forward(f))
    times, comm = [], []
    for _ in range(cfg.iters):
        plan.timers.reset()
        world.barrier()
        t0 = time.perf_counter()
        spec = plan.forward(f)
        back = plan.backward(spec)
        times.append(time.perf_counter() - t0)
        comm.append(plan.timers.comm)
    expect = plan.roundtrip_scale * f
    err = float(np.abs(back - expect).max(initial=0.0))
    norm = float(np.abs(expect).max(initial=0.0))
    return times, comm, err, norm, spec, plan.output_layout


def run_point(cfg: BenchConfig, pg: ProcGrid) -> BenchRecord:
    nx, ny, nz = cfg.grid
    rec = BenchRecord(nx, ny, nz, cfg.ranks, pg.m1, pg.m2, cfg.stride1, cfg.useeven,
                      cfg.third, cfg.iters)
    try:
        grid = GlobalGrid(nx, ny, nz)
    except DecompositionError as exc:
        rec.reason = str(exc)
        return rec
    problems = validate_procgrid(grid, pg, cfg.ranks)
    if problems:
        rec.reason = "; ".join(problems)
        return rec
    try:
        res = Harness(cfg.ranks, cfg.timeout).run(_rank_main, grid, pg, cfg)
    except Exception as exc:  # noqa: BLE001 - a failed point must not stop a sweep
        rec.reason = f"{type(exc).__name__}: {exc}"
        return rec
    # a pair is as slow as its slowest rank
    t = np.max([r[0] for r in res], axis=0)
    c = np.max([r[1] for r in res], axis=0)
    norm = max(r[3] for r in res)
    rec.t_mean, rec.t_min, rec.t_max = float(t.mean()), float(t.min()), float(t.max())
    rec.t_comm_mean = float(c.mean())
    rec.max_rel_err = max(r[2] for r in res) / norm if norm else 0.0
    rec.passed = rec.max_rel_err < ROUNDTRIP_TOL
    if not rec.passed:
        rec.reason = f"round-trip error {rec.max_rel_err:.3e} >= {ROUNDTRIP_TOL:g}"
    rec.flops_rate = flops_rate(grid.shape, rec.t_mean)
    rec.spectrum = assemble([r[4] for r in res], [r[5] for r in res],
                            grid.spectral_shape, np.complex128)
    return rec


def oracle_check(cfg: BenchConfig, pg: ProcGrid, rec: BenchRecord) -> float:
    """Largest relative deviation from the direct-sum transform (sine and seeded random fields)."""
    grid = GlobalGrid(*cfg.grid)
    x, y, z = np.meshgrid(*(np.arange(n) for n in grid.shape), indexing="ij")
    sine = (np.sin(2 * np.pi * x / grid.nx) * np.sin(2 * np.pi * y / grid.ny)
            * np.sin(2 * np.pi * z / grid.nz))
    rand = np.random.default_rng(cfg.seed).standard_normal(grid.shape)
    worst = 0.0
    for fld, spec in ((sine, rec.spectrum), (rand, None)):
        if spec is None:
            spec = forward_global(fld, pg, cfg.timeout, stride1=cfg.stride1,
                                  useeven=cfg.useeven, third=cfg.third)
        ref = oracle.forward3d(fld, cfg.third)
        worst = max(worst, float(np.abs(spec - ref).max() / np.abs(ref).max()))
    return worst


def run(cfg: BenchConfig) -> list[BenchRecord]:
    records = []
    for pg in procgrids(cfg):
        rec = run_point(cfg, pg)
        if cfg.oracle and rec.passed:
            err = oracle_check(cfg, pg, rec)
            if not err < ORACLE_TOL:
                rec.passed = False
                rec.reason = f"oracle deviation {err:.3e} >= {ORACLE_TOL:g}"
        level = logging.INFO if rec.passed else logging.WARNING
        log.log(level, "%sx%sx%s P=%d %dx%d: t_mean=%.4g s err=%.3g %s%s",
                rec.nx, rec.ny, rec.nz, rec.P, rec.m1, rec.m2, rec.t_mean, rec.max_rel_err,
                "pass" if rec.passed else "FAIL", f" ({rec.reason})" if rec.reason else "")
        records.append(rec)
    if cfg.out:
        write_csv(cfg.out, records)
    return records


def write_csv(path, records):
    """Append records, writing the header only to a new or empty file."""
    new = not os.path.exists(path) or os.path.getsize(path) == 0
    with open(path, "a", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        if new:
            w.writeheader()
        for r in records:
            w.writerow(r.csv_row())


def sweep_report(records) -> dict:
    """Fastest passing processor grid per (grid, P, flags); ties go to the smaller m1."""
    groups: dict = {}
    for r in records:
        key = (r.nx, r.ny, r.nz, r.P, r.stride1, r.useeven, r.third)
        groups.setdefault(key, []).append(r)
    best = {}
    for key, recs in groups.items():
        ok = [r for r in recs if r.passed]
        if not ok:
            raise ValueError(f"no passing record for {key}")
        best[key] = min(ok, key=lambda r: (r.t_mean, r.m1))
    return best


def _ints(text, count):
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected {count} comma-separated integers") from None
    if len(vals) != count:
        raise argparse.ArgumentTypeError(f"expected {count} comma-separated integers")
    return vals


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pencilfft-bench",
        description="Benchmark and validate the pencil-decomposed 3D FFT.")
    ap.add_argument("--grid", required=True, type=lambda s: _ints(s, 3), metavar="NX,NY,NZ")
    ap.add_argument("--ranks", type=int, default=1, metavar="P")
    mode = ap.add_mutually_exclusive_group()
    mode.add_argument("--procgrid", type=lambda s: _ints(s, 2), metavar="M1,M2")
    mode.add_argument("--sweep", action="store_true", help="run every valid M1 x M2 = P")
    mode.add_argument("--auto", type=int, metavar="CORES_PER_NODE",
                      help="M1 = smallest divisor of P >= CORES_PER_NODE")
    ap.add_argument("--stride1", action="store_true")
    ap.add_argument("--useeven", action="store_true")
    ap.add_argument("--third", choices=THIRD_KINDS, default="fft")
    ap.add_argument("--iters", type=int, default=1)
    ap.add_argument("--warmup", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", metavar="FILE.csv")
    ap.add_argument("--oracle", action="store_true",
                    help="cross-check spectra against a direct-sum DFT (grids up to 32^3 points)")
    ap.add_argument("--timeout", type=float, default=60.0, help=argparse.SUPPRESS)
    ap.add_argument("-q", "--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    if args.oracle and np.prod(args.grid) > ORACLE_MAX_POINTS:
        ap.error("--oracle is limited to grids of at most 32^3 points")
    try:
        cfg = BenchConfig(grid=args.grid, ranks=args.ranks, procgrid=args.procgrid,
                          sweep=args.sweep, auto=args.auto, stride1=args.stride1,
                          useeven=args.useeven, third=args.third, iters=args.iters,
                          warmup=args.warmup, seed=args.seed, out=args.out,
                          oracle=args.oracle, timeout=args.timeout)
    except ValueError as exc:
        ap.error(str(exc))
    records = run(cfg)
    if not args.out:
        w = csv.DictWriter(sys.stdout, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow(r.csv_row())
    if not records:
        log.error("no valid processor grid for %d ranks", cfg.ranks)
        return 1
    return 0 if all(r.passed for r in records) else 1


if __name__ == "__main__":
    sys.exit(main())
