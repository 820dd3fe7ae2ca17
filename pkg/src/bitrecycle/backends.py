"""Seedable word generators: xorshift128, an arithmetic counter and Blum-Blum-Shub.

Every backend exposes ``next32()`` and ``next64()``.  For all three kinds
``next64()`` equals ``(next32() << 32) | next32()``, high word first.
"""
from __future__ import annotations

from math import gcd

import numpy as np

MASK32 = 0xFFFFFFFF
MASK64 = (1 << 64) - 1

# Marsaglia's published xor128 starting state; a zero seed maps here.
XORSHIFT_DEFAULT = (123456789, 362436069, 521288629, 88675123)

# Smallest primes = 3 (mod 4) at or above 2**129 + 2**64 and 2**130 - 2**64.
BBS_DEFAULT_P = 0x200000000000000010000000000000017
BBS_DEFAULT_Q = 0x3FFFFFFFFFFFFFFFF000000000000002B
# Seed 0 is remapped to the first 256 bits of pi's fractional hex digits, so
# the first squarings are already reduced modulo M.
BBS_ZERO_SEED = 0x243F6A8885A308D313198A2E03707344A4093822299F31D0082EFA98EC4E6C89

BACKEND_KINDS = ("xorshift", "counter", "bbs")


class Backend:
    """Common interface; subclasses provide ``next32``."""

    kind: str = ""
    # Index understood by the compiled kernels, or None if not supported there.
    kernel_kind: int | None = None

    def next32(self) -> int:
        raise NotImplementedError

    def next64(self) -> int:
        hi = self.next32()
        return (hi << 32) | self.next32()

    def words64(self, count: int) -> np.ndarray:
        """Return the next ``count`` values of ``next64()`` as a uint64 array."""
        if self.kernel_kind is not None:
            from . import _kernels

            arr = self.to_array()
            out = np.empty(count, dtype=np.uint64)
            _kernels.fill_words64(self.kernel_kind, arr, out)
            self.load_array(arr)
            return out
        return np.array([self.next64() for _ in range(count)], dtype=np.uint64)

    def words32(self, count: int) -> np.ndarray:
        if self.kernel_kind is not None:
            from . import _kernels

            arr = self.to_array()
            out = np.empty(count, dtype=np.uint64)
            _kernels.fill_words32(self.kernel_kind, arr, out)
            self.load_array(arr)
            return out
        return np.array([self.next32() for _ in range(count)], dtype=np.uint64)

    def to_array(self) -> np.ndarray:
        raise NotImplementedError(f"{self.kind} backend has no compiled form")

    def load_array(self, arr: np.ndarray) -> None:
        raise NotImplementedError(f"{self.kind} backend has no compiled form")


class XorshiftBackend(Backend):
    """Marsaglia's xorshift128: four 32-bit words, shifts 11, 8, 19.

    The 64-bit seed is XOR-ed into ``x`` (low half) and ``y`` (high half) of
    the default state; ``z`` and ``w`` keep their nonzero defaults, so no
    seed can produce the forbidden all-zero state.
    """

    kind = "xorshift"
    kernel_kind = 0

    def __init__(self, seed: int = 0):
        seed &= MASK64
        x0, y0, z0, w0 = XORSHIFT_DEFAULT
        self.x = x0 ^ (seed & MASK32)
        self.y = y0 ^ (seed >> 32)
        self.z = z0
        self.w = w0

    @property
    def state(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.z, self.w)

    def next32(self) -> int:
        x = self.x
        t = (x ^ (x << 11)) & MASK32
        self.x, self.y, self.z = self.y, self.z, self.w
        w = self.w
        self.w = (w ^ (w >> 19)) ^ (t ^ (t >> 8))
        return self.w

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.w], dtype=np.uint64)

    def load_array(self, arr: np.ndarray) -> None:
        self.x, self.y, self.z, self.w = (int(v) for v in arr[:4])


class CounterBackend(Backend):
    """Arithmetic progression ``seed, seed+1, ...``; each ``next32`` returns the
    low 32 bits of a 64-bit counter and advances it by one."""

    kind = "counter"
    kernel_kind = 1

    def __init__(self, seed: int = 0):
        self.value = seed & MASK64

    def next32(self) -> int:
        out = self.value & MASK32
        self.value = (self.value + 1) & MASK64
        return out

    def to_array(self) -> np.ndarray:
        return np.array([self.value, 0, 0, 0], dtype=np.uint64)

    def load_array(self, arr: np.ndarray) -> None:
        self.value = int(arr[0])


class BbsBackend(Backend):
    """Blum-Blum-Shub: ``x <- x**2 mod M``, emitting the low ``bits_per_step``
    bits of each new residue.

    Groups are packed most-significant first into 32/64-bit words; leftover
    bits (when ``bits_per_step`` does not divide the width) wait for the next
    word.  Python integers carry the 260-bit arithmetic.
    """

    kind = "bbs"

    def __init__(
        self,
        seed: int = 0,
        p: int = BBS_DEFAULT_P,
        q: int = BBS_DEFAULT_Q,
        bits_per_step: int = 8,
    ):
        if p % 4 != 3 or q % 4 != 3:
            raise ValueError("both primes must be congruent to 3 mod 4")
        if p == q:
            raise ValueError("primes must be distinct")
        if not 1 <= bits_per_step <= 32:
            raise ValueError(f"bits_per_step must be in 1..32, got {bits_per_step}")
        modulus = p * q
        if seed == 0:
            seed = BBS_ZERO_SEED % modulus
        if not 1 < seed < modulus:
            raise ValueError(f"seed must satisfy 1 < seed < M, got {seed}")
        if gcd(seed, modulus) != 1:
            raise ValueError("seed shares a factor with the modulus")
        # With p, q = 3 mod 4 the orbit reaches 1 only if seed**2 = 1 (mod M).
        if seed * seed % modulus == 1:
            raise ValueError("seed is a square root of 1; the orbit would collapse")
        self.modulus = modulus
        self.residue = seed
        self.bits_per_step = bits_per_step
        self._mask = (1 << bits_per_step) - 1
        self._pool = 0
        self._pool_bits = 0

    def step(self) -> int:
        self.residue = self.residue * self.residue % self.modulus
        return self.residue & self._mask

    def _take(self, width: int) -> int:
        while self._pool_bits < width:
            self._pool = (self._pool << self.bits_per_step) | self.step()
            self._pool_bits += self.bits_per_step
        rest = self._pool_bits - width
        out = self._pool >> rest
        self._pool &= (1 << rest) - 1
        self._pool_bits = rest
        return out

    def next32(self) -> int:
        return self._take(32)

    def next64(self) -> int:
        return self._take(64)


def make_backend(kind: str, seed: int = 0) -> Backend:
    if kind == "xorshift":
        return XorshiftBackend(seed)
    if kind == "counter":
        return CounterBackend(seed)
    if kind == "bbs":
        return BbsBackend(seed)
    raise ValueError(f"unknown backend {kind!r}; expected one of {BACKEND_KINDS}")
