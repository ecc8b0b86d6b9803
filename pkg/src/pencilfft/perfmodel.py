"""Performance model for the parallel 3D FFT.

The time of one transform is modeled as compute + memory + network::

    T(N, P) = N^3 * [2.5 log2(N) / (P F) + b m / (P sigma_mem) + c m / (2 sigma_bi(P))]

On a 3D torus ``sigma_bi ~ P^(2/3)``, so at fixed N this reduces to
``T = a/P + d/P^(2/3)``, which is what :func:`fit_strong_scaling` fits.
Logarithms are base 2 throughout.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import nnls

__all__ = [
    "ModelParams",
    "ScalingFit",
    "TimingSample",
    "predict",
    "predict_terms",
    "fit_strong_scaling",
    "effective_bandwidth",
    "network_efficiency",
    "weak_scaling_efficiency",
    "flops_rate",
    "torus_bisection",
    "read_bench_csv",
    "write_fit_report",
    "fit_bench_records",
]


@dataclass(frozen=True)
class ModelParams:
    flops: float  # F, per-rank flop/s in the FFT
    mem_accesses: float  # b, memory accesses per element
    mem_bandwidth: float  # sigma_mem, bytes/s per rank
    contention: float  # c
    bisection: Callable[[float], float]  # sigma_bi(P), bytes/s
    elem_bytes: float = 16.0  # m

    def __post_init__(self):
        for name in ("flops", "mem_accesses", "mem_bandwidth", "contention", "elem_bytes"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ScalingFit:
    a: float
    d: float
    residual: float  # relative 2-norm of the fit residual

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        return self.a / p + self.d / p ** (2.0 / 3.0)


@dataclass(frozen=True)
class TimingSample:
    p: int
    n: int
    t_total: float
    t_comm: float = 0.0

    def __post_init__(self):
        if not 0 <= self.t_comm <= self.t_total:
            raise ValueError(f"need 0 <= t_comm <= t_total, got {self.t_comm}, {self.t_total}")


def torus_bisection(sigma1: float) -> Callable[[float], float]:
    """sigma_bi(P) = sigma1 * P^(2/3)."""
    return lambda p: sigma1 * p ** (2.0 / 3.0)


def predict_terms(params: ModelParams, n: float, p: float) -> tuple[float, float, float]:
    """Compute, memory and network contributions in seconds."""
    if n < 1 or p < 1:
        raise ValueError("N and P must be >= 1")
    vol = float(n) ** 3
    m = params.elem_bytes
    return (
        vol * 2.5 * math.log2(n) / (p * params.flops),
        vol * params.mem_accesses * m / (p * params.mem_bandwidth),
        vol * params.contention * m / (2.0 * params.bisection(p)),
    )


def predict(params: ModelParams, n: float, p: float) -> float:
    return sum(predict_terms(params, n, p))


def fit_strong_scaling(samples: Iterable[TimingSample] | Sequence[tuple[float, float]]) -> ScalingFit:
    """Nonnegative fit of ``t = a/P + d/P^(2/3)`` to timings at fixed N.

    Residuals are weighted by ``1/t`` so that every core count counts
    equally despite times spanning orders of magnitude.  Accepts
    :class:`TimingSample` objects or ``(P, t)`` pairs.
    """
    pts = [(s.p, s.t_total) if isinstance(s, TimingSample) else tuple(s) for s in samples]
    p = np.array([q for q, _ in pts], dtype=float)
    t = np.array([v for _, v in pts], dtype=float)
    if np.unique(p).size < 2:
        raise ValueError("need samples at two or more distinct core counts")
    if not np.all(t > 0):
        raise ValueError("timings must be positive")
    basis = np.column_stack((1.0 / p, p ** (-2.0 / 3.0)))
    w = 1.0 / t
    coef, _ = nnls(basis * w[:, None], t * w)
    resid = np.linalg.norm((basis @ coef - t) * w) / np.linalg.norm(np.ones_like(t))
    return ScalingFit(float(coef[0]), float(coef[1]), float(resid))


def effective_bandwidth(d: float, n: float, elem_bytes: float, p: float,
                        transposes: int = 4) -> float:
    """Effective bisection bandwidth implied by the network term ``d / P^(2/3)``.

    Inverts ``T_net = m N^3 / (2 sigma)`` per transpose; ``transposes`` is the
    number of transposes inside the timed unit (4 for a forward+backward pair).
    """
    if d <= 0:
        raise ValueError("network coefficient d must be positive")
    t_net = d / float(p) ** (2.0 / 3.0)
    return transposes * elem_bytes * float(n) ** 3 / (2.0 * t_net)


def network_efficiency(sigma_eff: float, sigma_peak: float) -> float:
    return sigma_eff / sigma_peak


def weak_scaling_efficiency(base: TimingSample, samples: Iterable[TimingSample]) -> list[float]:
    """Efficiency relative to ``base`` with work = N^3 log2 N."""
    if base.t_total <= 0:
        raise ValueError("base time must be positive")

    def work(s):
        return float(s.n) ** 3 * math.log2(s.n)

    base_cost = base.p * base.t_total
    return [(work(s) / work(base)) / (s.p * s.t_total / base_cost) for s in samples]


def flops_rate(shape: Sequence[int] | int, t_pair: float) -> float:
    """Flop/s for one forward+backward pair, counting 2.5 Ntot log2 Ntot per transform."""
    if t_pair <= 0:
        raise ValueError("t_pair must be positive")
    ntot = float(np.prod(shape)) if not np.isscalar(shape) else float(shape)
    return 2 * 2.5 * ntot * math.log2(ntot) / t_pair


def read_bench_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_fit_report(path, rows: Sequence[dict]):
    fields = ["nx", "ny", "nz", "points", "p_max", "a", "d", "residual", "sigma_eff"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


def fit_bench_records(records: Sequence[dict], elem_bytes: float = 16.0) -> list[dict]:
    """Fit each grid's best-per-P passing timings from bench CSV rows.

    ``sigma_eff`` is evaluated at the largest core count, with four
    transposes per timed forward+backward pair.
    """
    groups: dict[tuple, dict[int, float]] = {}
    for r in records:
        if str(r["pass"]).lower() != "true":
            continue
        key = (int(r["nx"]), int(r["ny"]), int(r["nz"]))
        p = int(r["P"])
        t = float(r["t_mean"])
        best = groups.setdefault(key, {})
        best[p] = min(t, best.get(p, math.inf))
    out = []
    for (nx, ny, nz), best in sorted(groups.items()):
        p_max = max(best)
        row = {"nx": nx, "ny": ny, "nz": nz, "points": len(best), "p_max": p_max,
               "a": "", "d": "", "residual": "", "sigma_eff": ""}
        if len(best) >= 2:
            fit = fit_strong_scaling(sorted(best.items()))
            row.update(a=fit.a, d=fit.d, residual=fit.residual)
            if fit.d > 0:
                n_eq = (nx * ny * nz) ** (1.0 / 3.0)
                row["sigma_eff"] = effective_bandwidth(fit.d, n_eq, elem_bytes, p_max, 4)
        out.append(row)
    return out


def main(argv=None) -> int:
    import argparse

    ap = argparse.ArgumentParser(prog="pencilfft-fit",
                                 description="Fit a/P + d/P^(2/3) to benchmark CSV timings.")
    ap.add_argument("csv", help="benchmark CSV written by pencilfft-bench")
    ap.add_argument("--out", help="fit report CSV (stdout if omitted)")
    ap.add_argument("--elem-bytes", type=float, default=16.0)
    args = ap.parse_args(argv)
    rows = fit_bench_records(read_bench_csv(args.csv), args.elem_bytes)
    if args.out:
        write_fit_report(args.out, rows)
    else:
        import sys

        w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]) if rows else ["nx"],
                           lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return 0
