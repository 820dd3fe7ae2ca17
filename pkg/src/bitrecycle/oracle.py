"""Exact output distributions of the scalers by exhaustive enumeration.

Each accept/reject attempt of the real scaler code runs against a scripted
bit source.  When an attempt asks for a chunk the script does not hold yet,
every possible chunk value is tried.  Nodes with equal scaler state, outputs
so far and bits consumed are merged, so the work grows with the number of
reachable states rather than with the number of bit strings.

Masses are integers in units of ``2**-depth``, so all sums are exact.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

from .scaler import make_scaler, split_quotient_remainder

MAX_CAPACITY = 1 << 10
MAX_DEPTH = 64
MAX_DRAWS = 4
MAX_CHUNK = 16


class _NeedBits(Exception):
    def __init__(self, k: int):
        self.k = k


class _Script:
    """Bit source replaying a fixed list of ``(width, value)`` chunks."""

    def __init__(self, chunks: tuple):
        self.chunks = chunks
        self.pos = 0
        self.bits = 0

    def next_bits(self, k: int) -> int:
        if k > MAX_CHUNK:
            raise ValueError(f"cannot enumerate a {k}-bit chunk")
        if self.pos == len(self.chunks):
            raise _NeedBits(k)
        width, value = self.chunks[self.pos]
        assert width == k, "draw is not deterministic in its chunk widths"
        self.pos += 1
        self.bits += k
        return value

    def next_bit(self) -> int:
        return self.next_bits(1)

    def next_2bits(self) -> int:
        return self.next_bits(2)

    def next_byte(self) -> int:
        return self.next_bits(8)

    def next_word16(self) -> int:
        return self.next_bits(16)

    def next32(self) -> int:
        return self.next_bits(32)

    def next64(self) -> int:
        return self.next_bits(64)


@dataclass
class ExactDistribution:
    moduli: tuple[int, ...]
    outcome_probs: dict[tuple[int, ...], Fraction] = field(default_factory=dict)
    residual_mass: Fraction = Fraction(0)

    def total(self) -> Fraction:
        return sum(self.outcome_probs.values(), Fraction(0)) + self.residual_mass

    def marginal(self, i: int) -> dict[int, Fraction]:
        out: dict[int, Fraction] = defaultdict(Fraction)
        for outcome, p in self.outcome_probs.items():
            out[outcome[i]] += p
        return dict(out)

    def max_uniform_deviation(self, i: int = 0) -> Fraction:
        """Largest |P(draw i = d) - 1/n| over all d in 0..n-1."""
        n = self.moduli[i]
        marg = self.marginal(i)
        target = Fraction(1, n)
        return max(abs(marg.get(d, Fraction(0)) - target) for d in range(n))

    def max_factorization_deviation(self) -> Fraction:
        """Largest |P(joint) - product of marginals| over every outcome cell."""
        margs = [self.marginal(i) for i in range(len(self.moduli))]
        worst = Fraction(0)
        for cell in _cells(self.moduli):
            prod = Fraction(1)
            for i, d in enumerate(cell):
                prod *= margs[i].get(d, Fraction(0))
            dev = abs(self.outcome_probs.get(cell, Fraction(0)) - prod)
            worst = max(worst, dev)
        return worst


def _cells(moduli):
    if not moduli:
        yield ()
        return
    for head in range(moduli[0]):
        for tail in _cells(moduli[1:]):
            yield (head,) + tail


def exact_output_distribution(
    variant: str, capacity: int, moduli, depth: int = 40
) -> ExactDistribution:
    """Distribution of the outputs of ``len(moduli)`` successive draws from a
    fresh scaler fed by ideal coin flips, resolved up to ``depth`` bits."""
    moduli = tuple(int(n) for n in moduli)
    if capacity > MAX_CAPACITY:
        raise ValueError(f"capacity {capacity} too large to enumerate")
    if not 1 <= depth <= MAX_DEPTH:
        raise ValueError(f"depth must be in 1..{MAX_DEPTH}")
    if not 1 <= len(moduli) <= MAX_DRAWS:
        raise ValueError(f"between 1 and {MAX_DRAWS} draws supported")
    scaler = make_scaler(variant, capacity)
    for n in moduli:
        scaler.check(n)

    total = 1 << depth
    nodes = {(scaler.state, (), 0): total}
    residual = 0
    for n in moduli:
        done: dict = defaultdict(int)
        pending = nodes
        # Failed attempts go back to ``pending``; equal states merge there.
        while pending:
            retry: dict = defaultdict(int)
            for (state, outs, bits), w in pending.items():
                stack = [()]
                while stack:
                    prefix = stack.pop()
                    scaler.state = state
                    src = _Script(prefix)
                    try:
                        d = scaler._attempt(src, n)
                    except _NeedBits as need:
                        if bits + src.bits + need.k > depth:
                            residual += w >> src.bits
                        else:
                            stack.extend(
                                prefix + ((need.k, c),) for c in range(1 << need.k)
                            )
                        continue
                    key_bits = bits + src.bits
                    if d is None:
                        retry[(scaler.state, outs, key_bits)] += w >> src.bits
                    else:
                        done[(scaler.state, outs + (d,), key_bits)] += w >> src.bits
            pending = retry
        nodes = done

    if residual == total:
        raise RuntimeError(f"{variant}: no draw completed within {depth} bits")
    outcome: dict = defaultdict(int)
    for (_, outs, _), w in nodes.items():
        outcome[outs] += w
    assert sum(outcome.values()) + residual == total
    return ExactDistribution(
        moduli=moduli,
        outcome_probs={o: Fraction(w, total) for o, w in sorted(outcome.items())},
        residual_mass=Fraction(residual, total),
    )


def quotient_remainder_table(m: int, n: int) -> dict[tuple[int, int], int]:
    """How often each ``(q, d)`` arises as ``value`` runs over 0..m*n-1."""
    counts: dict[tuple[int, int], int] = defaultdict(int)
    for value in range(m * n):
        counts[split_quotient_remainder(value, m, n)] += 1
    return counts


def quotient_remainder_is_bijection(m: int, n: int) -> bool:
    """True when every ``(q, d)`` in 0..m-1 x 0..n-1 is hit exactly once,
    which makes ``q`` and ``d`` uniform and independent."""
    counts = quotient_remainder_table(m, n)
    return len(counts) == m * n and all(c == 1 for c in counts.values()) and all(
        0 <= q < m and 0 <= d < n for q, d in counts
    )


def split_brute_force(max_m: int = 16, max_n: int = 16) -> list[tuple[int, int]]:
    """Pairs ``(m, n)`` for which the quotient/remainder split is not a bijection."""
    return [
        (m, n)
        for m in range(1, max_m + 1)
        for n in range(1, max_n + 1)
        if not quotient_remainder_is_bijection(m, n)
    ]


@dataclass(frozen=True)
class OracleCheck:
    variant: str
    capacity: int
    n: int
    deviation: Fraction
    residual: Fraction
    joint_deviation: Fraction
    joint_residual: Fraction

    @property
    def uniform(self) -> bool:
        return self.deviation <= self.residual

    @property
    def factorizes(self) -> bool:
        return self.joint_deviation <= 2 * self.joint_residual

    def residual_below(self, bound: Fraction) -> bool:
        return self.residual < bound and self.joint_residual < bound


def oracle_check(variant: str, capacity: int, n: int, depth: int = 40) -> OracleCheck:
    """One-draw uniformity and two-draw factorization for modulus ``n``."""
    one = exact_output_distribution(variant, capacity, [n], depth)
    two = exact_output_distribution(variant, capacity, [n, n], depth)
    return OracleCheck(
        variant,
        capacity,
        n,
        one.max_uniform_deviation(),
        one.residual_mass,
        two.max_factorization_deviation(),
        two.residual_mass,
    )
