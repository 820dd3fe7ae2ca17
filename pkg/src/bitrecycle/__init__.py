"""Scaling uniform random words into uniform integers of any modulus, with
bit recycling, entropy accounting, exact oracles and a timing harness."""

from .backends import BbsBackend, CounterBackend, XorshiftBackend, make_backend
from .bitsource import BitBuffer, CardBatch, next_card, next_card_prefilled
from .scaler import VARIANTS, generate, make_scaler, split_quotient_remainder

__all__ = [
    "BbsBackend",
    "BitBuffer",
    "CardBatch",
    "CounterBackend",
    "VARIANTS",
    "XorshiftBackend",
    "generate",
    "make_backend",
    "make_scaler",
    "next_card",
    "next_card_prefilled",
    "split_quotient_remainder",
]

__version__ = "0.1.0"
