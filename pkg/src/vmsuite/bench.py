"""Sequence-length scaling benchmark.

Spatial tokens per frame stay fixed (196 by default) while the frame count
grows, so the total length M = frames * tokens_per_frame. Timings are CPU
wall-clock medians; only the *shape* of the curves (log-log slope) is
meaningful here, not absolute latency.

Memory figures are analytic working-set estimates of the buffers each
operator allocates, computed before running it. Points whose estimate
exceeds the budget are recorded as SKIPPED instead of being attempted.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .blocks import block_forward, dt_rank_for, init_block, params_astype
from .config import SweepConfig
from .errors import InsufficientPoints, ShapeMismatch, ValidationError
from .numeric import as_dtype, ensure_finite, make_rng
from .ssm import SsmParams, selective_scan, selective_scan_chunked

log = logging.getLogger(__name__)

CSV_HEADER = ["operator", "frames", "tokens_per_frame", "tokens", "dtype", "repeats",
              "wall_ns", "bytes_peak", "status"]

OPERATORS = ("selective_scan", "selective_scan_chunked", "attention_naive",
             "mamba_block", "vim_block", "dbm_block")
ALIASES = {"scan": "selective_scan_chunked", "scan_seq": "selective_scan",
           "attn": "attention_naive", "mamba": "mamba_block", "vim": "vim_block",
           "dbm": "dbm_block"}

REPORT_NOTE = ("# CPU wall-clock scaling shape only; the reference curves were measured on "
               "an A100 in half precision, so absolute latencies are not comparable.")


def resolve_operator(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in OPERATORS:
        raise ValidationError(f"unknown operator {name!r}; choose from {OPERATORS} or {sorted(ALIASES)}")
    return name


# --------------------------------------------------------------------------
# Quadratic reference

def attention_naive(x: np.ndarray, wq: np.ndarray, wk: np.ndarray, wv: np.ndarray,
                    wo: np.ndarray) -> np.ndarray:
    """Single-head softmax(Q K^T / sqrt(d)) V, materialising the full M x M matrix."""
    if x.ndim != 2 or x.shape[0] < 1:
        raise ShapeMismatch(f"x must be [M>=1, D], got {x.shape}")
    d = x.shape[1]
    for name, w in (("wq", wq), ("wk", wk), ("wv", wv), ("wo", wo)):
        if w.shape != (d, d):
            raise ShapeMismatch(f"{name} must be [{d}, {d}], got {w.shape}")
    q, k, v = x @ wq, x @ wk, x @ wv
    s = q @ k.T
    s *= 1.0 / math.sqrt(d)
    s -= s.max(axis=1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=1, dtype=np.float64, keepdims=True).astype(s.dtype)
    return ensure_finite((s @ v) @ wo, "attention")


# --------------------------------------------------------------------------
# Records

@dataclass
class BenchRecord:
    operator: str
    frames: int
    tokens_per_frame: int
    tokens: int
    dtype: str
    repeats: int
    wall_ns: int | None
    bytes_peak: int
    status: str = "OK"

    def row(self) -> list:
        return [self.operator, self.frames, self.tokens_per_frame, self.tokens, self.dtype,
                self.repeats, "" if self.wall_ns is None else self.wall_ns, self.bytes_peak,
                self.status]


def write_csv(records: Iterable[BenchRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for r in records:
            w.writerow(r.row())


def read_csv(path: str | Path) -> list[BenchRecord]:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ValidationError(f"unexpected CSV header {header}")
        out = []
        for row in reader:
            op, frames, tpf, tokens, dt, reps, wall, peak, status = row
            out.append(BenchRecord(op, int(frames), int(tpf), int(tokens), dt, int(reps),
                                   int(wall) if wall else None, int(peak), status))
    return out


# --------------------------------------------------------------------------
# Operator setup

def estimate_bytes(op: str, m: int, cfg: SweepConfig) -> int:
    item = as_dtype(cfg.dtype).itemsize
    d, n = cfg.d_model, cfg.d_state
    if op == "attention_naive":
        return item * (m * m + 6 * m * d)
    if op == "selective_scan_chunked":
        c = min(cfg.chunk, m)
        return item * (3 * m * d + 8 * c * d * n)
    if op == "selective_scan":
        return item * (3 * m * d + 4 * m * d * n)
    di = 2 * d
    branches = 2 if op == "vim_block" else 1
    return item * (m * (d + 8 * di) + branches * (4 * m * di * n + 3 * m * di))


def _make_case(op: str, m: int, cfg: SweepConfig) -> Callable[[], object]:
    dtype = as_dtype(cfg.dtype)
    rng = make_rng(cfg.seed)
    d = cfg.d_model
    x = rng.normal(0.0, 1.0, (m, d)).astype(dtype)
    if op == "attention_naive":
        ws = [rng.normal(0.0, d ** -0.5, (d, d)).astype(dtype) for _ in range(4)]
        return lambda: attention_naive(x, *ws)
    if op in ("selective_scan", "selective_scan_chunked"):
        p = SsmParams.init(d, cfg.d_state, dt_rank_for(d), rng).astype(dtype)
        if op == "selective_scan":
            return lambda: selective_scan(p, x)
        return lambda: selective_scan_chunked(p, x, cfg.chunk)
    kind = op.split("_")[0]
    p = params_astype(init_block(kind, d, 2, cfg.d_state, seed=cfg.seed), dtype)
    return lambda: block_forward(p, x)


def _time_case(case: Callable[[], object], repeats: int, warmup: int) -> int:
    for _ in range(warmup):
        case()
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        case()
        samples.append(time.perf_counter_ns() - t0)
    return int(statistics.median(samples))


def worker_threads() -> int:
    env = os.environ.get("VMS_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ValidationError(f"VMS_THREADS must be an integer, got {env!r}") from None
    return cap


def run_sweep(cfg: SweepConfig, out: str | Path | None = None,
              progress: Callable[[BenchRecord], None] | None = None) -> list[BenchRecord]:
    """Run every operator at every frame count; optionally write the CSV.

    Timed sweeps run strictly sequentially. With ``cfg.timing`` False each
    point is evaluated once (no timing) on up to ``VMS_THREADS`` workers.
    """
    ops = [resolve_operator(o) for o in cfg.operators]
    points = [(op, f) for op in ops for f in cfg.frames]

    def measure(point) -> BenchRecord:
        op, frames = point
        m = frames * cfg.tokens_per_frame
        peak = estimate_bytes(op, m, cfg)
        rec = BenchRecord(op, frames, cfg.tokens_per_frame, m, cfg.dtype, cfg.repeats, None, peak)
        if peak > cfg.memory_budget:
            rec.status = "SKIPPED"
            log.info("skip %s at %d tokens: estimate %d B over budget", op, m, peak)
        else:
            case = _make_case(op, m, cfg)
            if cfg.timing:
                rec.wall_ns = _time_case(case, cfg.repeats, cfg.warmup)
            else:
                case()
                rec.status = "UNTIMED"
        if progress:
            progress(rec)
        return rec

    if cfg.timing:
        records = [measure(pt) for pt in points]
    else:
        with ThreadPoolExecutor(max_workers=worker_threads()) as pool:
            records = list(pool.map(measure, points))
    if out is not None:
        write_csv(records, out)
    return records


# --------------------------------------------------------------------------
# Slope fitting

@dataclass
class SlopeFit:
    operator: str
    slope: float
    intercept: float
    r2: float
    points: int


def fit_loglog(tokens, wall) -> tuple[float, float, float]:
    lx = np.log(np.asarray(tokens, dtype=np.float64))
    ly = np.log(np.asarray(wall, dtype=np.float64))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_slopes(records: Iterable[BenchRecord], min_points: int = 5,
               min_octaves: float = 2.0) -> list[SlopeFit]:
    by_op: dict[str, list[BenchRecord]] = {}
    for r in records:
        if r.status == "OK" and r.wall_ns is not None:
            by_op.setdefault(r.operator, []).append(r)
    if not by_op:
        raise InsufficientPoints("no timed rows to fit")
    fits = []
    for op, rows in by_op.items():
        tokens = [r.tokens for r in rows]
        if len(rows) < min_points:
            raise InsufficientPoints(f"{op}: {len(rows)} timed points, need {min_points}")
        if math.log2(max(tokens) / min(tokens)) < min_octaves:
            raise InsufficientPoints(f"{op}: points span fewer than {min_octaves} octaves")
        slope, intercept, r2 = fit_loglog(tokens, [r.wall_ns for r in rows])
        fits.append(SlopeFit(op, slope, intercept, r2, len(rows)))
    return fits


def monotone_violations(records: Iterable[BenchRecord], operator: str) -> list[int]:
    """Token counts at which wall time dropped below the previous point's."""
    rows = sorted((r for r in records if r.operator == operator and r.wall_ns is not None),
                  key=lambda r: r.tokens)
    return [b.tokens for a, b in zip(rows, rows[1:]) if b.wall_ns < a.wall_ns]
