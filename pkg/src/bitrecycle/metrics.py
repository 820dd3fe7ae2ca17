"""Entropy ledger, failure counts, chi-square tests and the two warm-up
examples (two-bit rejection for a 3-way choice, and base-3 digits of a byte).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaincc

from .backends import Backend, make_backend
from .bitsource import BitBuffer
from .scaler import generate, make_scaler

LOG2_3 = math.log2(3)
P_BAND = (0.001, 0.999)


@dataclass
class EfficiencyCounters:
    """Bits in, entropy out.  ``entropy_emitted`` is a Neumaier-compensated
    running sum of log2(n) over the draws."""

    bits_consumed: int = 0
    failures: int = 0
    draws: int = 0
    _sum: float = 0.0
    _comp: float = 0.0

    @property
    def entropy_emitted(self) -> float:
        return self._sum + self._comp

    def add_entropy(self, bits: float) -> None:
        s = self._sum + bits
        if abs(self._sum) >= abs(bits):
            self._comp += (self._sum - s) + bits
        else:
            self._comp += (bits - s) + self._sum
        self._sum = s

    def record_draw(self, n: int) -> None:
        self.draws += 1
        self.add_entropy(math.log2(n))

    def record_cycle(self, moduli, count: int, offset: int = 0) -> None:
        """Account ``count`` draws cycling through ``moduli`` from ``offset``."""
        L = len(moduli)
        full, rest = divmod(count, L)
        for j, n in enumerate(moduli):
            times = full + (1 if (j - offset) % L < rest else 0)
            if times:
                self.add_entropy(times * math.log2(n))
        self.draws += count

    def __add__(self, other: EfficiencyCounters) -> EfficiencyCounters:
        out = EfficiencyCounters(
            self.bits_consumed + other.bits_consumed,
            self.failures + other.failures,
            self.draws + other.draws,
        )
        for part in (self._sum, self._comp, other._sum, other._comp):
            out.add_entropy(part)
        return out


def efficiency(counters: EfficiencyCounters, final_state_entropy: float = 0.0) -> float:
    if counters.bits_consumed <= 0:
        raise ValueError("no bits consumed")
    return (counters.entropy_emitted + final_state_entropy) / counters.bits_consumed


def run_ledger(
    variant: str,
    moduli,
    draws: int,
    backend: str | Backend = "xorshift",
    seed: int = 0,
    chunk: int = 1 << 20,
):
    """Draw ``draws`` values cycling through ``moduli``; return the counters
    and the scaler (whose ``state_entropy()`` completes the ledger)."""
    src = make_backend(backend, seed) if isinstance(backend, str) else backend
    buf = BitBuffer(src)
    scaler = make_scaler(variant)
    moduli = [int(n) for n in moduli]
    counters = EfficiencyCounters()
    done = 0
    L = len(moduli)
    while done < draws:
        k = min(chunk, draws - done)
        phase = done % L
        generate(scaler, buf, moduli[phase:] + moduli[:phase], k)
        counters.record_cycle(moduli, k, offset=phase)
        done += k
    counters.bits_consumed = buf.bits_served
    counters.failures = scaler.failures
    return counters, scaler


def ledger_gap(counters: EfficiencyCounters, final_state_entropy: float) -> float:
    """Bits consumed but neither emitted nor still held in the state."""
    return counters.bits_consumed - counters.entropy_emitted - final_state_entropy


# --- warm-up examples -------------------------------------------------------


def naive_three(bits) -> tuple[int, int]:
    """Two bits at a time, 11 rejected; 00, 01, 10 map to 1, 2, 3.

    Returns ``(value, bits used)``.
    """
    it = iter(bits)
    used = 0
    while True:
        hi, lo = next(it), next(it)
        used += 2
        if (hi, lo) != (1, 1):
            return 2 * hi + lo + 1, used


def radix_digits(x: int, count: int = 5, base: int = 3) -> list[int]:
    """Digits of ``x`` in ``base``, most significant first."""
    digits = []
    for _ in range(count):
        x, d = divmod(x, base)
        digits.append(d)
    return digits[::-1]


def _le_bytes(words: np.ndarray) -> np.ndarray:
    return words.astype("<u8").view(np.uint8)


def example1_naive(draws: int, backend: Backend | None = None) -> EfficiencyCounters:
    """Two-bit rejection sampler for a 3-way choice, run to ``draws`` outputs.

    Bits come LSB-first from 64-bit words, as ``BitBuffer.next_bit`` serves them.
    """
    src = backend or make_backend("xorshift", 0)
    accepted = 0
    pairs_used = 0
    rejected = 0
    while accepted < draws:
        bits = np.unpackbits(_le_bytes(src.words64(1 << 14)), bitorder="little")
        ok = ~((bits[0::2] == 1) & (bits[1::2] == 1))
        need = draws - accepted
        hits = np.flatnonzero(ok)
        if len(hits) >= need:
            last = hits[need - 1] + 1
            pairs_used += last
            rejected += int(last - need)
            accepted = draws
        else:
            pairs_used += len(ok)
            rejected += int(len(ok) - len(hits))
            accepted += len(hits)
    c = EfficiencyCounters(bits_consumed=2 * pairs_used, failures=rejected, draws=draws)
    c.add_entropy(draws * LOG2_3)
    return c


def example2_radix(batches: int, backend: Backend | None = None) -> EfficiencyCounters:
    """Byte-wise sampler: bytes above 242 are rejected, the rest give five
    base-3 digits.  Runs to ``batches`` accepted bytes."""
    src = backend or make_backend("xorshift", 0)
    accepted = 0
    used = 0
    while accepted < batches:
        x = _le_bytes(src.words64(1 << 14))
        hits = np.flatnonzero(x <= 242)
        need = batches - accepted
        if len(hits) >= need:
            used += hits[need - 1] + 1
            accepted = batches
        else:
            used += len(x)
            accepted += len(hits)
    c = EfficiencyCounters(bits_consumed=8 * int(used), failures=int(used) - batches, draws=5 * batches)
    c.add_entropy(5 * batches * LOG2_3)
    return c


# --- chi-square -----------------------------------------------------------


@dataclass(frozen=True)
class ChiSquareReport:
    statistic: float
    dof: int
    p_value: float

    def passed(self, band: tuple[float, float] = P_BAND) -> bool:
        return band[0] <= self.p_value <= band[1]


def chi_square_sf(statistic: float, dof: int) -> float:
    """Upper tail of the chi-square law (regularized upper incomplete gamma)."""
    return float(gammaincc(dof / 2.0, statistic / 2.0))


def chi_square(counts, probs=None, min_expected: float = 5.0) -> ChiSquareReport:
    """Pearson statistic of ``counts`` against cell probabilities ``probs``
    (uniform when omitted)."""
    obs = np.asarray(counts, dtype=np.float64)
    if obs.size < 2:
        raise ValueError("need at least two bins")
    total = obs.sum()
    if probs is None:
        exp = np.full(obs.size, total / obs.size)
    else:
        p = np.asarray(probs, dtype=np.float64)
        exp = total * p / p.sum()
    if exp.min() < min_expected:
        raise ValueError(
            f"underpopulated bins: smallest expected count {exp.min():.3g} < {min_expected}"
        )
    stat = float(((obs - exp) ** 2 / exp).sum())
    dof = obs.size - 1
    return ChiSquareReport(stat, dof, chi_square_sf(stat, dof))


def chi_square_uniform(counts) -> ChiSquareReport:
    return chi_square(counts)


def bin_edges(n: int, bins: int) -> np.ndarray:
    """Cell sizes when ``v`` in 0..n-1 is mapped to ``v * bins // n``."""
    j = np.arange(bins + 1, dtype=object)
    starts = np.array([-(-(int(k) * n) // bins) for k in j], dtype=object)
    return np.diff(starts).astype(np.float64)


def binned(samples, n: int, bins: int) -> np.ndarray:
    s = np.asarray(samples, dtype=np.uint64)
    if bins == n:
        return s.astype(np.int64)
    if n * bins >= 1 << 64:
        raise ValueError("n * bins overflows 64 bits")
    return (s * np.uint64(bins) // np.uint64(n)).astype(np.int64)


def uniformity_test(samples, n: int, bins: int | None = None) -> ChiSquareReport:
    """Chi-square of ``samples`` (values in 0..n-1) against uniform, coarsened
    to ``bins`` cells of near-equal width when given."""
    bins = n if bins is None else bins
    counts = np.bincount(binned(samples, n, bins), minlength=bins)
    if len(counts) > bins:
        raise ValueError("sample outside 0..n-1")
    sizes = None if bins == n else bin_edges(n, bins)
    return chi_square(counts, sizes)


def serial_pair_test(samples, n: int, bins: int | None = None) -> ChiSquareReport:
    """Chi-square over non-overlapping pairs ``(s[2i], s[2i+1])``; ``bins``
    coarsens each coordinate as in ``uniformity_test``."""
    bins = n if bins is None else bins
    b = binned(samples, n, bins)
    pairs = len(b) // 2
    cells = b[0 : 2 * pairs : 2] * bins + b[1 : 2 * pairs : 2]
    counts = np.bincount(cells, minlength=bins * bins)
    if bins == n:
        return chi_square(counts)
    sizes = bin_edges(n, bins)
    return chi_square(counts, np.outer(sizes, sizes).ravel())


def default_bins(n: int, samples: int) -> tuple[int, int]:
    """Cell counts for (uniformity, serial) keeping >= 20 expected per cell."""
    uni = n if n <= samples // 20 else 1024
    pairs = samples // 2
    ser = n if n * n <= pairs // 20 else 64
    return uni, ser


def verify_uniformity(
    variant: str,
    n: int,
    samples: int = 10**6,
    backend: str = "xorshift",
    seed: int = 0,
) -> tuple[ChiSquareReport, ChiSquareReport]:
    """Uniformity and serial-pair reports for ``samples`` draws of modulus ``n``."""
    scaler = make_scaler(variant)
    buf = BitBuffer(make_backend(backend, seed))
    out = generate(scaler, buf, [n], samples)
    uni_bins, ser_bins = default_bins(n, samples)
    return uniformity_test(out, n, uni_bins), serial_pair_test(out, n, ser_bins)
