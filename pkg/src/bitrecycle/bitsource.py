"""Buffered bit extraction over a backend (NextBit / Next2Bit / NextByte /
NextWord) plus the 52-way card draw and its prefilled variant."""
from __future__ import annotations

from .backends import MASK32, Backend

# Consecutive rejections tolerated by any rejection loop before it is treated
# as a defect; under correct operation the odds are far below 1e-100000.
REJECTION_CAP = 10_000

CARD_LIMIT = 52 * (MASK32 // 52)  # 4294967248: words at or above are redrawn
CARD_BATCH = 64


class RejectionLimitError(RuntimeError):
    pass


class BitBuffer:
    """LSB-first bit reservoir refilled one backend word at a time.

    ``consumed_bits`` counts whole backend words pulled (refills and direct
    word draws); ``bits_served`` counts bits actually handed to callers.
    """

    def __init__(self, source: Backend, profile32: bool = False):
        self.source = source
        self.profile32 = profile32
        self.store = 0
        self.available = 0
        self.consumed_bits = 0
        self.bits_served = 0
        self.refills = 0

    def _refill(self) -> tuple[int, int]:
        self.refills += 1
        if self.profile32:
            self.consumed_bits += 32
            return self.source.next32(), 32
        self.consumed_bits += 64
        return self.source.next64(), 64

    def next_bits(self, k: int) -> int:
        """Next ``k`` bits (1 <= k <= 32) as one value, first bit lowest."""
        if not 1 <= k <= 32:
            raise ValueError(f"chunk width must be in 1..32, got {k}")
        self.bits_served += k
        if self.available >= k:
            out = self.store & ((1 << k) - 1)
            self.store >>= k
            self.available -= k
            return out
        # Splice: the old low bits stay low, the fresh word supplies the rest.
        old, n_old = self.store, self.available
        word, width = self._refill()
        need = k - n_old
        out = old | ((word & ((1 << need) - 1)) << n_old)
        self.store = word >> need
        self.available = width - need
        return out

    def next_bit(self) -> int:
        return self.next_bits(1)

    def next_2bits(self) -> int:
        return self.next_bits(2)

    def next_byte(self) -> int:
        return self.next_bits(8)

    def next_word16(self) -> int:
        return self.next_bits(16)

    # Whole words bypass the reservoir.
    def next32(self) -> int:
        self.consumed_bits += 32
        self.bits_served += 32
        return self.source.next32()

    def next64(self) -> int:
        self.consumed_bits += 64
        self.bits_served += 64
        return self.source.next64()


def next_card(source: Backend | BitBuffer, stats: dict | None = None) -> int:
    """Uniform value in 0..51 from 32-bit words by rejection.

    ``stats`` (optional) accumulates ``"failures"`` and ``"words"``.
    """
    for _ in range(REJECTION_CAP):
        r = source.next32()
        if stats is not None:
            stats["words"] = stats.get("words", 0) + 1
        if r < CARD_LIMIT:
            return r % 52
        if stats is not None:
            stats["failures"] = stats.get("failures", 0) + 1
    raise RejectionLimitError("next_card rejected 10000 consecutive words")


class CardBatch:
    """Prefilled cards: a batch of ``next_card`` draws served in order."""

    def __init__(self, size: int = CARD_BATCH):
        self.cards = [0] * size
        self.cursor = size
        self.fills = 0

    def next(self, source: Backend | BitBuffer, stats: dict | None = None) -> int:
        if self.cursor >= len(self.cards):
            for i in range(len(self.cards)):
                self.cards[i] = next_card(source, stats)
            self.cursor = 0
            self.fills += 1
        card = self.cards[self.cursor]
        self.cursor += 1
        return card


def next_card_prefilled(batch: CardBatch, source: Backend | BitBuffer) -> int:
    return batch.next(source)
