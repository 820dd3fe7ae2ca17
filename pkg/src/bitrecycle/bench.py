"""Timing harness: cycle-counter calibration, the modulus sweep, per-call
timings of the scalers, ad hoc bit functions and integer arithmetic kernels,
and CSV / plot-data output.

Pin the process to one core and fix the CPU frequency before trusting the
numbers, e.g. ``taskset -c 2 bitrecycle bench ...`` with the governor set to
``performance``.
"""
from __future__ import annotations

import csv
import io
import math
import os
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .backends import make_backend
from .bitsource import CARD_BATCH, BitBuffer, RejectionLimitError
from .scaler import make_scaler, supports

DEFAULT_CALLS = 1 << 20
LONG_CALLS = 1 << 24
OUT_ENV = "BITRECYCLE_OUT"
CSV_HEADER = ("n", "cycles_per_call", "ns_per_call", "calls")

ADHOC_MODULI = {
    "my_gen_rand32": 1 << 32,
    "my_gen_rand64": 1 << 64,
    "next_bit": 2,
    "next_2bits": 4,
    "next_byte": 256,
    "next_word16": 1 << 16,
    "next_card": 52,
    "next_card_prefilled": 52,
}


@dataclass(frozen=True)
class TimerCalibration:
    """Cycle counter against the monotonic clock (in ns).

    ``fallback`` means no cycle counter: only wall-clock timings are kept.
    """

    cycles_per_clock_mean: float
    log_stddev: float
    windows: int
    fallback: bool = False

    @property
    def valid(self) -> bool:
        return self.fallback or self.log_stddev < 0.05


@dataclass(frozen=True)
class SweepRecord:
    n: int
    cycles_per_call: float | None
    ns_per_call: float
    calls: int


def counter_available() -> bool:
    a = _kernels.cycles()
    _kernels.spin(1000)
    return _kernels.cycles() != a


def calibrate(windows: int = 16, window_s: float = 0.05) -> TimerCalibration:
    """Ratios of cycle-counter and monotonic-clock deltas over busy windows.

    The process clock stops while the process is descheduled and the cycle
    counter does not, so on a shared host it inflates single windows.
    """
    if not counter_available():
        return TimerCalibration(float("nan"), float("nan"), 0, fallback=True)
    _kernels.spin(10)
    target = int(window_s * 1e9)
    ratios = []
    for _ in range(max(windows, 16)):
        t0 = time.perf_counter_ns()
        c0 = _kernels.cycles()
        while time.perf_counter_ns() - t0 < target:
            _kernels.spin(100_000)
        c1 = _kernels.cycles()
        t1 = time.perf_counter_ns()
        ratios.append((int(c1) - int(c0)) / (t1 - t0))
    logs = [math.log(r) for r in ratios]
    return TimerCalibration(statistics.fmean(ratios), statistics.pstdev(logs), len(ratios))


def sweep_moduli() -> list[int]:
    """2..32, then n grows by n // 32 while below 2**32."""
    out = list(range(2, 33))
    n = 32
    while True:
        n += n // 32
        if n >= 1 << 32:
            return out
        out.append(n)


def _record(n: int, cycles: int, wall_ns: int, calls: int, cal: TimerCalibration) -> SweepRecord:
    if cal.fallback:
        return SweepRecord(n, None, wall_ns / calls, calls)
    cpc = int(cycles) / calls
    return SweepRecord(n, cpc, cpc / cal.cycles_per_clock_mean, calls)


def _timed(fn, *args):
    t0 = time.perf_counter_ns()
    cycles, sink = fn(*args)
    return cycles, time.perf_counter_ns() - t0, int(sink)


def bench_scaler(
    variant: str,
    backend: str = "xorshift",
    moduli=None,
    calibration: TimerCalibration | None = None,
    calls: int = DEFAULT_CALLS,
    seed: int = 0,
    use_sink: bool = True,
) -> tuple[list[SweepRecord], int]:
    """Time ``variant`` on each modulus (default: the full sweep).

    Moduli outside the variant's range are skipped.  Returns the records and
    the XOR of every value drawn, which callers should print.
    """
    cal = calibration or calibrate()
    moduli = sweep_moduli() if moduli is None else moduli
    src = make_backend(backend, seed)
    buf = BitBuffer(src)
    scaler = make_scaler(variant)
    bs = src.to_array()
    barr = _kernels.buffer_array(buf)
    st = np.zeros(4, dtype=np.uint64)
    st[:3] = scaler.to_array()
    cap = np.uint64(scaler.capacity)
    warm = max(calls // 16, 1024)
    records, sink = [], 0
    for n in moduli:
        if not supports(variant, n):
            continue
        args = (scaler.kernel_code, src.kernel_kind, bs, barr, st, cap, np.uint64(n))
        _kernels.time_scaler(*args, warm, use_sink)
        cycles, wall, s = _timed(_kernels.time_scaler, *args, calls, use_sink)
        if st[3]:
            raise RejectionLimitError(f"{variant}: too many consecutive rejections at n={n}")
        sink ^= s
        records.append(_record(n, cycles, wall, calls, cal))
    return records, sink


def bench_adhoc(
    name: str,
    backend: str = "xorshift",
    calibration: TimerCalibration | None = None,
    calls: int = DEFAULT_CALLS,
    seed: int = 0,
) -> tuple[SweepRecord, int]:
    """Time one of the fixed-modulus helpers; ``n`` is its output modulus."""
    cal = calibration or calibrate()
    code = _kernels.ADHOC.index(name)
    src = make_backend(backend, seed)
    bs = src.to_array()
    barr = _kernels.buffer_array(BitBuffer(src))
    st = np.zeros(4, dtype=np.uint64)
    batch = np.zeros(CARD_BATCH + 1, dtype=np.uint64)
    batch[-1] = CARD_BATCH
    args = (code, src.kernel_kind, bs, barr, st, batch)
    _kernels.time_adhoc(*args, max(calls // 16, 1024))
    cycles, wall, sink = _timed(_kernels.time_adhoc, *args, calls)
    return _record(ADHOC_MODULI[name], cycles, wall, calls, cal), sink


def backend_overhead(
    calibration: TimerCalibration | None = None, calls: int = DEFAULT_CALLS
) -> SweepRecord:
    """Per-call cost of the loop plus a counter-backend word: the harness floor."""
    return bench_adhoc("my_gen_rand32", "counter", calibration, calls)[0]


def bench_arith(
    kind: str,
    moduli=None,
    calibration: TimerCalibration | None = None,
    backend: str = "xorshift",
    calls: int = DEFAULT_CALLS,
    seed: int = 0,
) -> tuple[list[SweepRecord], int]:
    cal = calibration or calibrate()
    code = _kernels.ARITH.index(kind)
    moduli = sweep_moduli() if moduli is None else moduli
    src = make_backend(backend, seed)
    bs = src.to_array()
    warm = max(calls // 16, 1024)
    records, sink = [], 0
    for n in moduli:
        if n < 1:
            raise ValueError("arithmetic kernels need n >= 1")
        args = (code, src.kernel_kind, bs, np.uint64(n))
        _kernels.time_arith(*args, warm)
        cycles, wall, s = _timed(_kernels.time_arith, *args, calls)
        sink ^= s
        records.append(_record(n, cycles, wall, calls, cal))
    return records, sink


def ordering(results: dict[str, list[SweepRecord]]) -> list[tuple[str, float]]:
    """Subjects sorted by median ns per call, fastest first."""
    med = {k: statistics.median(r.ns_per_call for r in v) for k, v in results.items() if v}
    return sorted(med.items(), key=lambda kv: kv[1])


# --- output ---------------------------------------------------------------


def output_dir(default: str | os.PathLike = "bench_out") -> Path:
    return Path(os.environ.get(OUT_ENV) or default)


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6g}"


def format_csv(records) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow((r.n, _fmt(r.cycles_per_call), _fmt(r.ns_per_call), r.calls))
    return out.getvalue()


def parse_csv(text: str) -> list[SweepRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError("missing or wrong CSV header")
    return [
        SweepRecord(int(n), float(c) if c else None, float(ns), int(calls))
        for n, c, ns, calls in rows[1:]
    ]


def format_plot_data(records) -> str:
    rows = sorted(records, key=lambda r: r.n)
    if any(a.n == b.n for a, b in zip(rows, rows[1:])):
        raise ValueError("duplicate modulus in plot data")
    return "".join(f"{r.n} {r.ns_per_call:.6g}\n" for r in rows)


def _write(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from e
    return path


def emit_csv(records, destination) -> Path:
    if not records:
        raise ValueError("no records to write")
    return _write(destination, format_csv(records))


def emit_plot_data(records, destination) -> Path:
    if not records:
        raise ValueError("no records to write")
    return _write(destination, format_plot_data(records))


def result_paths(out_dir, subject: str, backend: str) -> tuple[Path, Path]:
    """CSV and plot-data file names for one (subject, backend) pair."""
    base = Path(out_dir) / f"{subject}_{backend}"
    return base.with_suffix(".csv"), base.with_suffix(".dat")
