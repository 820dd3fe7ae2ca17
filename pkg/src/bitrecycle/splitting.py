"""Splitting an i.i.d. stream into an indicator queue and two value queues,
the inverse merge, and exact and statistical checks that the three output
streams are independent."""
from __future__ import annotations

import itertools
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .backends import Backend
from .metrics import ChiSquareReport, chi_square, serial_pair_test

MAX_ENUMERATION = 10**6


class QueueStarvedError(ValueError):
    """The indicator queue asks for a value its queue no longer holds."""


class UndefinedEventError(ValueError):
    """No enumerated sequence determines the requested variables."""


@dataclass(frozen=True)
class EventSet:
    alphabet_size: int
    members: frozenset[int]

    def __init__(self, alphabet_size: int, members):
        object.__setattr__(self, "alphabet_size", int(alphabet_size))
        object.__setattr__(self, "members", frozenset(int(x) for x in members))
        if any(not 0 <= x < self.alphabet_size for x in self.members):
            raise ValueError("members must lie in 0..alphabet_size-1")
        if not 0 < len(self.members) < self.alphabet_size:
            raise ValueError("need 0 < |S| < |E|")

    def __contains__(self, x: int) -> bool:
        return x in self.members

    @property
    def complement(self) -> tuple[int, ...]:
        return tuple(x for x in range(self.alphabet_size) if x not in self.members)

    @property
    def probability(self) -> Fraction:
        return Fraction(len(self.members), self.alphabet_size)


@dataclass
class SplitQueues:
    B: deque = field(default_factory=deque)
    Y: deque = field(default_factory=deque)
    Z: deque = field(default_factory=deque)


def split(stream, S: EventSet) -> SplitQueues:
    q = SplitQueues()
    for x in stream:
        if x in S:
            q.B.append(1)
            q.Y.append(x)
        else:
            q.B.append(0)
            q.Z.append(x)
    return q


def unsplit(queues: SplitQueues) -> list:
    """Merge the queues back in indicator order.  The input is left untouched."""
    Y, Z = iter(queues.Y), iter(queues.Z)
    out = []
    for i, b in enumerate(queues.B):
        try:
            out.append(next(Y) if b else next(Z))
        except StopIteration:
            raise QueueStarvedError(
                f"indicator {i} asks for {'Y' if b else 'Z'}, which is empty"
            ) from None
    return out


def hitting_times(bits, count: int, value: int) -> list[int]:
    """Indices of the first ``count`` occurrences of ``value`` in ``bits``;
    each search starts one past the previous hit."""
    times = []
    start = 0
    for _ in range(count):
        try:
            t = bits.index(value, start)
        except ValueError:
            break
        times.append(t)
        start = t + 1
    return times


def verify_factorization_exact(
    alphabet_size: int,
    S,
    L: int,
    K: int,
    M: int,
    weights=None,
) -> Fraction:
    """Largest |joint - product of marginals| for (B_0..B_{L-1}, Y_0..Y_K,
    Z_0..Z_M), exactly, over all sequences of length ``L`` where the K-th
    success and the M-th failure both occur, conditioned on that event.

    ``weights`` gives the symbol law (uniform by default).  The B-vector
    counts as one variable and each Y_k and Z_m as one variable each.
    """
    ev = S if isinstance(S, EventSet) else EventSet(alphabet_size, S)
    if alphabet_size**L > MAX_ENUMERATION:
        raise ValueError(f"{alphabet_size}^{L} sequences exceed the enumeration budget")
    if weights is None:
        weights = [Fraction(1, alphabet_size)] * alphabet_size
    weights = [Fraction(w) for w in weights]
    if sum(weights) != 1 or any(w <= 0 for w in weights):
        raise ValueError("weights must be positive and sum to 1")

    joint: dict[tuple, Fraction] = defaultdict(Fraction)
    for seq in itertools.product(range(alphabet_size), repeat=L):
        bits = [1 if x in ev else 0 for x in seq]
        u = hitting_times(bits, K + 1, 1)
        v = hitting_times(bits, M + 1, 0)
        if len(u) <= K or len(v) <= M:
            continue
        p = Fraction(1)
        for x in seq:
            p *= weights[x]
        key = (tuple(bits),) + tuple(seq[t] for t in u) + tuple(seq[t] for t in v)
        joint[key] += p

    mass = sum(joint.values(), Fraction(0))
    if mass == 0:
        raise UndefinedEventError(
            f"no sequence of length {L} holds {K + 1} successes and {M + 1} failures"
        )
    joint = {k: p / mass for k, p in joint.items()}
    arity = 1 + (K + 1) + (M + 1)
    margs: list[dict] = [defaultdict(Fraction) for _ in range(arity)]
    for key, p in joint.items():
        for i, part in enumerate(key):
            margs[i][part] += p

    worst = Fraction(0)
    for cell in itertools.product(*(list(m.items()) for m in margs)):
        prod = Fraction(1)
        for _, p in cell:
            prod *= p
        key = tuple(part for part, _ in cell)
        worst = max(worst, abs(joint.get(key, Fraction(0)) - prod))
    return worst


@dataclass
class SplitReport:
    samples: int
    p_expected: float
    p_observed: float
    p_tolerance: float
    y_uniform: ChiSquareReport | None
    z_uniform: ChiSquareReport | None
    y_serial: ChiSquareReport | None

    @property
    def bernoulli_ok(self) -> bool:
        return abs(self.p_observed - self.p_expected) <= self.p_tolerance

    def checks(self) -> dict[str, bool]:
        out = {"B frequency": self.bernoulli_ok}
        for name, rep in (
            ("Y uniform", self.y_uniform),
            ("Z uniform", self.z_uniform),
            ("Y serial", self.y_serial),
        ):
            if rep is not None:
                out[name] = rep.passed()
        return out

    @property
    def passed(self) -> bool:
        return all(self.checks().values())


def _relabel(values: np.ndarray, symbols) -> np.ndarray:
    lut = np.full(max(symbols) + 1, -1, dtype=np.int64)
    lut[list(symbols)] = np.arange(len(symbols))
    return lut[values]


def statistical_split_test(backend: Backend, S: EventSet, samples: int = 10**6) -> SplitReport:
    """Split ``samples`` backend words reduced mod |E| and test each stream.

    Single-symbol queues carry no information to test, so their reports are None.
    """
    if samples < 10**4:
        raise ValueError("need at least 10^4 samples")
    E = S.alphabet_size
    values = (backend.words32(samples) % np.uint64(E)).astype(np.int64)
    members = sorted(S.members)
    is_s = np.isin(values, members)
    p = len(members) / E
    y = _relabel(values[is_s], members)
    z = _relabel(values[~is_s], S.complement)

    def uni(v, k):
        return chi_square(np.bincount(v, minlength=k)) if k >= 2 else None

    return SplitReport(
        samples=samples,
        p_expected=p,
        p_observed=float(is_s.mean()),
        p_tolerance=4 * math.sqrt(p * (1 - p) / samples),
        y_uniform=uni(y, len(members)),
        z_uniform=uni(z, len(S.complement)),
        y_serial=serial_pair_test(y, len(members)) if len(members) >= 2 else None,
    )
