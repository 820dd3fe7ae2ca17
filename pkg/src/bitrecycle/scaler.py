"""Uniform integers of arbitrary per-call modulus from a bit stream.

Nine generators share the ``Scaler`` interface:

* ``simple32/40/48/64``: plain rejection on a fresh b-bit value each attempt.
* ``bbr``: bit recycling with a state ``(m, r)`` refilled two bits at a time.
* ``bbr_faster``: same, refilled with 16-, 8- and 2-bit chunks.
* ``bbr_cheating``: ``bbr_faster`` without the reject branch.
* ``simple_recycler``: a 32-bit state seeded from one word and drained until
  it is too small, then reseeded (small moduli only).
* ``bbr_32``: recycling in a 32-bit state for n < 2**29, shift-and-reject above.

The pure-Python draws here are the reference; ``generate`` dispatches to the
compiled kernels when the backend supports it and returns identical values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backends import MASK32
from .bitsource import REJECTION_CAP, BitBuffer, RejectionLimitError

DEFAULT_CAPACITY = 1 << 62
BBR32_CAPACITY = 1 << 30

VARIANTS = (
    "simple32",
    "simple40",
    "simple48",
    "simple64",
    "bbr",
    "bbr_faster",
    "bbr_cheating",
    "simple_recycler",
    "bbr_32",
)
# Variants with a carried state whose output is exactly uniform.
EXACT_RECYCLING = ("bbr", "bbr_faster", "simple_recycler", "bbr_32")

GRANULARITIES = ("bits1", "bits2", "mixed")


@dataclass
class RecyclerState:
    """``r`` is uniform on ``0..m-1``; refilled until ``m >= capacity``."""

    m: int = 1
    r: int = 0
    capacity: int = DEFAULT_CAPACITY

    def check(self) -> None:
        assert 0 <= self.r < self.m, (self.m, self.r)


def refill(state: RecyclerState, buf, granularity: str = "bits2") -> None:
    """Grow ``m`` to at least ``capacity``, shifting fresh bits into ``r``.

    ``bits1`` pops single bits; ``bits2`` pairs; ``mixed`` pops 16 bits while
    ``m < N >> 16``, then 8 while ``m < N >> 8``, then 2.  Each chunk keeps
    ``m`` below ``N`` except the last 2-bit pop, so on return ``N <= m < 4N``
    (``< 2N`` for ``bits1``).
    """
    m, r, cap = state.m, state.r, state.capacity
    if granularity == "bits2":
        while m < cap:
            r = (r << 2) | buf.next_2bits()
            m <<= 2
    elif granularity == "mixed":
        t16, t8 = cap >> 16, cap >> 8
        while m < cap:
            if m < t16:
                r = (r << 16) | buf.next_word16()
                m <<= 16
            elif m < t8:
                r = (r << 8) | buf.next_byte()
                m <<= 8
            else:
                r = (r << 2) | buf.next_2bits()
                m <<= 2
    elif granularity == "bits1":
        while m < cap:
            r = (r << 1) | buf.next_bit()
            m <<= 1
    else:
        raise ValueError(f"unknown granularity {granularity!r}")
    state.m, state.r = m, r


def split_quotient_remainder(value: int, m: int, n: int) -> tuple[int, int]:
    """Write ``value = q*n + d`` for ``value`` of modulus ``m*n``.

    ``q`` has modulus ``m``, ``d`` has modulus ``n``, and the two are
    independent when ``value`` is uniform.
    """
    if m < 1 or n < 1:
        raise ValueError("moduli must be positive")
    if not 0 <= value < m * n:
        raise ValueError(f"value {value} outside 0..{m * n - 1}")
    return divmod(value, n)


def _recycle_step(st: RecyclerState, n: int, q: int) -> int | None:
    """Accept test on a refilled state: return ``r mod n`` and keep the
    quotient (modulus ``q``), or keep the excess ``r - n*q`` on a failure."""
    nq = n * q
    if st.r < nq:
        st.r, d = divmod(st.r, n)
        st.m = q
        st.check()
        return d
    st.r -= nq
    st.m -= nq
    st.check()
    return None


class Scaler:
    """Base class: subclasses implement ``_attempt`` and set ``max_modulus``."""

    name = ""
    kernel_code = -1
    max_modulus = 0  # largest accepted n

    def __init__(self):
        self.failures = 0

    def check(self, n: int) -> None:
        if not 1 <= n <= self.max_modulus:
            raise ValueError(
                f"{self.name}: modulus must be in 1..{self.max_modulus}, got {n}"
            )

    def draw(self, buf, n: int) -> int:
        self.check(n)
        return self._draw(buf, n)

    def _draw(self, buf, n: int) -> int:
        for _ in range(REJECTION_CAP):
            d = self._attempt(buf, n)
            if d is not None:
                return d
            self.failures += 1
        raise RejectionLimitError(f"{self.name}: too many consecutive rejections")

    def _attempt(self, buf, n: int) -> int | None:
        """One pass of the accept test: the output, or None on a failure."""
        raise NotImplementedError

    # Carried state, for snapshots and the compiled kernels.
    @property
    def state(self) -> tuple[int, int]:
        return (0, 0)

    @state.setter
    def state(self, value: tuple[int, int]) -> None:
        pass

    @property
    def capacity(self) -> int:
        return 0

    def state_entropy(self) -> float:
        """log2 of the state modulus: entropy still held in the state."""
        return 0.0

    def to_array(self) -> np.ndarray:
        m, r = self.state
        return np.array([m, r, self.failures], dtype=np.uint64)

    def load_array(self, arr: np.ndarray) -> None:
        self.state = (int(arr[0]), int(arr[1]))
        self.failures = int(arr[2])


class SimpleScaler(Scaler):
    """Rejection on ``width`` fresh bits with ``q = N // n``.

    N is 2**width - 1 for widths 32 and 64 and 2**width otherwise.  The 40-
    and 48-bit values splice one 32-bit word (high part) with one byte or
    16-bit chunk (low part).
    """

    _codes = {32: 0, 40: 1, 48: 2, 64: 3}

    def __init__(self, width: int):
        super().__init__()
        if width not in self._codes:
            raise ValueError(f"unsupported width {width}")
        self.width = width
        self.name = f"simple{width}"
        self.kernel_code = self._codes[width]
        self.limit = (1 << width) - 1 if width in (32, 64) else 1 << width
        self.max_modulus = self.limit if width == 32 else self.limit - 1

    def _value(self, buf) -> int:
        if self.width == 32:
            return buf.next32()
        if self.width == 40:
            hi = buf.next32()
            return (hi << 8) | buf.next_byte()
        if self.width == 48:
            hi = buf.next32()
            return (hi << 16) | buf.next_word16()
        return buf.next64()

    def _attempt(self, buf, n: int) -> int | None:
        if n == 1:
            return 0
        r = self._value(buf)
        nq = n * (self.limit // n)
        return r % n if r < nq else None


class BitRecycler(Scaler):
    """Recycling draw: the accepted quotient and the rejected remainder both
    go back into the state, so only the accept/reject outcome is discarded.

    With ``cheating=True`` the reject branch is skipped: ``r mod n`` is always
    returned and ``r`` is clamped to ``q - 1``; each clamp counts as a failure.
    """

    def __init__(
        self,
        capacity: int = DEFAULT_CAPACITY,
        granularity: str = "bits2",
        cheating: bool = False,
    ):
        super().__init__()
        if capacity < 8 or capacity & (capacity - 1) or capacity > DEFAULT_CAPACITY:
            raise ValueError(f"capacity must be a power of two in 8..2**62, got {capacity}")
        if granularity not in GRANULARITIES:
            raise ValueError(f"unknown granularity {granularity!r}")
        self.rs = RecyclerState(capacity=capacity)
        self.granularity = granularity
        self.cheating = cheating
        if cheating:
            self.name, self.kernel_code = "bbr_cheating", 6
        elif granularity == "mixed":
            self.name, self.kernel_code = "bbr_faster", 5
        elif granularity == "bits2":
            self.name, self.kernel_code = "bbr", 4
        else:
            self.name = "bbr_bits1"
        self.max_modulus = min(capacity - 1, MASK32)

    @property
    def state(self) -> tuple[int, int]:
        return (self.rs.m, self.rs.r)

    @state.setter
    def state(self, value: tuple[int, int]) -> None:
        self.rs.m, self.rs.r = value

    @property
    def capacity(self) -> int:
        return self.rs.capacity

    def state_entropy(self) -> float:
        return math.log2(self.rs.m)

    def _attempt(self, buf, n: int) -> int | None:
        st = self.rs
        refill(st, buf, self.granularity)
        q = st.m // n
        if self.cheating:
            st.r, d = divmod(st.r, n)
            if st.r >= q:
                self.failures += 1
                st.r = q - 1
            st.m = q
            st.check()
            return d
        return _recycle_step(st, n, q)


class SimpleRecycler(Scaler):
    """A state seeded from one ``word_bits`` word and drained by successive
    draws; reseeded whenever ``m < max(n*n, 2**(word_bits//2))``.

    Words narrower than 32 bits exist only for exact enumeration and are
    taken through the bit buffer.
    """

    name = "simple_recycler"
    kernel_code = 7

    def __init__(self, word_bits: int = 32):
        super().__init__()
        if not 2 <= word_bits <= 32:
            raise ValueError(f"word_bits must be in 2..32, got {word_bits}")
        self.word_bits = word_bits
        self.m = 1
        self.r = 0
        self.max_modulus = min((1 << 16) - 1, (1 << word_bits) - 1)
        self.reseeds = 0

    @property
    def state(self) -> tuple[int, int]:
        return (self.m, self.r)

    @state.setter
    def state(self, value: tuple[int, int]) -> None:
        self.m, self.r = value

    @property
    def capacity(self) -> int:
        return 1 << self.word_bits

    def state_entropy(self) -> float:
        return math.log2(self.m)

    def _attempt(self, buf, n: int) -> int | None:
        if self.m < max(n * n, 1 << (self.word_bits // 2)):
            self.m = 1 << self.word_bits
            if self.word_bits == 32:
                self.r = buf.next32()
            else:
                self.r = buf.next_bits(self.word_bits)
            self.reseeds += 1
        q = self.m // n
        nq = n * q
        if self.r < nq:
            self.r, d = divmod(self.r, n)
            self.m = q
            return d
        self.r -= nq
        self.m -= nq
        return None


class Recycler32(Scaler):
    """Recycling with a 32-bit state below ``capacity // 2``; at or above it,
    rejection on the ``k`` low bits where ``2**k >= n``.

    Production capacity is 2**30 (cut-over at 2**29); smaller powers of two
    are accepted for exact enumeration.
    """

    name = "bbr_32"
    kernel_code = 8
    max_modulus = MASK32

    def __init__(self, capacity: int = BBR32_CAPACITY):
        super().__init__()
        if capacity < 8 or capacity & (capacity - 1) or capacity > BBR32_CAPACITY:
            raise ValueError(f"capacity must be a power of two in 8..2**30, got {capacity}")
        self.rs = RecyclerState(capacity=capacity)
        self.cutover = capacity >> 1

    @property
    def state(self) -> tuple[int, int]:
        return (self.rs.m, self.rs.r)

    @state.setter
    def state(self, value: tuple[int, int]) -> None:
        self.rs.m, self.rs.r = value

    @property
    def capacity(self) -> int:
        return self.rs.capacity

    def state_entropy(self) -> float:
        return math.log2(self.rs.m)

    def _attempt(self, buf, n: int) -> int | None:
        if n >= self.cutover:
            r = buf.next_bits((n - 1).bit_length())
            return r if r < n else None
        refill(self.rs, buf, "bits2")
        return _recycle_step(self.rs, n, self.rs.m // n)


def make_scaler(variant: str, capacity: int | None = None) -> Scaler:
    """Build a scaler by name.  ``capacity`` overrides the state capacity of
    the recycling variants (for ``simple_recycler`` it sets the word size)."""
    if variant.startswith("simple") and variant[6:].isdigit():
        return SimpleScaler(int(variant[6:]))
    if variant == "bbr":
        return BitRecycler(capacity or DEFAULT_CAPACITY, "bits2")
    if variant == "bbr_faster":
        return BitRecycler(capacity or DEFAULT_CAPACITY, "mixed")
    if variant == "bbr_cheating":
        return BitRecycler(capacity or DEFAULT_CAPACITY, "mixed", cheating=True)
    if variant == "simple_recycler":
        bits = 32 if capacity is None else capacity.bit_length() - 1
        return SimpleRecycler(bits)
    if variant == "bbr_32":
        return Recycler32(capacity or BBR32_CAPACITY)
    raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")


def supports(variant: str, n: int) -> bool:
    """True if ``n`` is a legal modulus for the production form of ``variant``."""
    try:
        make_scaler(variant).check(n)
    except ValueError:
        return False
    return True


def generate(scaler: Scaler, buf: BitBuffer, moduli, count: int) -> np.ndarray:
    """Draw ``count`` values, the i-th with modulus ``moduli[i % len(moduli)]``.

    Uses the compiled kernel when both the scaler and the backend have one;
    all objects end in the same state as after ``count`` calls of ``draw``.
    """
    moduli = [int(n) for n in np.atleast_1d(moduli)]
    if not moduli:
        raise ValueError("empty modulus list")
    for n in set(moduli):
        scaler.check(n)
    if scaler.kernel_code >= 0 and buf.source.kernel_kind is not None:
        from . import _kernels

        return _kernels.generate(scaler, buf, np.array(moduli, dtype=np.uint64), count)
    out = np.empty(count, dtype=np.uint64)
    L = len(moduli)
    for i in range(count):
        out[i] = scaler._draw(buf, moduli[i % L])
    return out
