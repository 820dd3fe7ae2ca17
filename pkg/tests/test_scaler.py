import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitrecycle.backends import CounterBackend, XorshiftBackend, make_backend
from bitrecycle.bitsource import BitBuffer, RejectionLimitError
from bitrecycle.scaler import (
    DEFAULT_CAPACITY,
    VARIANTS,
    BitRecycler,
    Recycler32,
    RecyclerState,
    SimpleRecycler,
    SimpleScaler,
    generate,
    make_scaler,
    refill,
    split_quotient_remainder,
    supports,
)


class Script:
    """Bit source serving fixed chunk values and recording the widths asked for."""

    def __init__(self, bits=(), words32=(), words64=()):
        self.bits = list(bits)
        self.words32 = list(words32)
        self.words64 = list(words64)
        self.widths = []

    def next_bits(self, k):
        self.widths.append(k)
        chunk, self.bits = self.bits[:k], self.bits[k:]
        assert len(chunk) == k, "script ran out of bits"
        # first bit served is the lowest, as in BitBuffer
        return sum(b << i for i, b in enumerate(chunk))

    def next_bit(self):
        return self.next_bits(1)

    def next_2bits(self):
        return self.next_bits(2)

    def next_byte(self):
        return self.next_bits(8)

    def next_word16(self):
        return self.next_bits(16)

    def next32(self):
        return self.words32.pop(0)

    def next64(self):
        return self.words64.pop(0)


class Zeros:
    def next_bits(self, k):
        return 0

    next_bit = next_2bits = next_byte = next_word16 = lambda self: 0


def test_single_bit_trace_n3():
    s = BitRecycler(capacity=8, granularity="bits1")
    # r := 2r + bit over bits 1, 0, 1 gives r = 5, m = 8
    assert s.draw(Script(bits=[1, 0, 1]), 3) == 2
    assert s.state == (2, 1)
    assert s.failures == 0


@pytest.mark.parametrize("variant", VARIANTS)
def test_modulus_one_is_zero(variant):
    s = make_scaler(variant)
    buf = BitBuffer(XorshiftBackend(0))
    assert [s.draw(buf, 1) for _ in range(5)] == [0] * 5


def test_simple32_first_word_zero():
    assert SimpleScaler(32).draw(Script(words32=[0]), 3) == 0


def test_bits2_refill_trace():
    st_ = RecyclerState(capacity=8)
    src = Script(bits=[1, 0, 0, 1])
    refill(st_, src, "bits2")
    # chunks 0b01 = 1 then 0b10 = 2, shifted in high first
    assert (st_.m, st_.r) == (16, 1 * 4 + 2)
    assert src.widths == [2, 2]


def test_refill_zero_source_reaches_capacity():
    st_ = RecyclerState()
    refill(st_, Zeros(), "bits2")
    assert (st_.m, st_.r) == (DEFAULT_CAPACITY, 0)


def test_mixed_refill_schedule_from_fresh_state():
    st_ = RecyclerState()
    src = Script(bits=[0] * 62)
    refill(st_, src, "mixed")
    assert src.widths == [16, 16, 16, 8, 2, 2, 2]
    assert st_.m == 2**62


@settings(max_examples=200, deadline=None)
@given(
    log_cap=st.integers(3, 62),
    m=st.integers(1, 2**62),
    gran=st.sampled_from(["bits1", "bits2", "mixed"]),
    seed=st.integers(0, 2**32),
)
def test_refill_terminal_bound(log_cap, m, gran, seed):
    cap = 1 << log_cap
    m = min(m, cap)
    st_ = RecyclerState(m=m, r=m - 1, capacity=cap)
    refill(st_, BitBuffer(XorshiftBackend(seed)), gran)
    k = 1 if gran == "bits1" else 2
    assert cap <= st_.m < (2**k) * cap if m < cap else st_.m == m
    assert 0 <= st_.r < st_.m < 2**64


def test_cheating_clamp_trace():
    s = BitRecycler(capacity=8, granularity="mixed", cheating=True)
    s.state = (8, 7)  # already full, so no refill
    assert s.draw(Zeros(), 3) == 1
    assert s.state == (2, 1)
    assert s.failures == 1


def test_exact_recycler_failure_path():
    s = BitRecycler(capacity=8)
    s.state = (8, 7)
    # 7 >= 6 fails and leaves (2, 1); bits 0,0 refill to (8, 4), which
    # returns 4 mod 3 and keeps (2, 1)
    assert s.draw(Script(bits=[0, 0]), 3) == 1
    assert s.failures == 1
    assert s.state == (2, 1)


@pytest.mark.parametrize(
    "width, n, value, expected",
    [
        (64, 2, 13, 1),
        (40, 2**39, 2**40 - 1, (2**40 - 1) % 2**39),
        (32, 2**32 - 2, 2**32 - 3, 2**32 - 3),
    ],
)
def test_simple_accepts(width, n, value, expected):
    if width == 64:
        src = Script(words64=[value])
    elif width == 40:
        src = Script(words32=[value >> 8], bits=[(value >> i) & 1 for i in range(8)])
    else:
        src = Script(words32=[value])
    assert SimpleScaler(width).draw(src, n) == expected


@pytest.mark.parametrize("top", [2**32 - 2, 2**32 - 1])
def test_simple32_rejects_top_two_values_for_n_near_limit(top):
    s = SimpleScaler(32)
    assert s.draw(Script(words32=[top, 5]), 2**32 - 2) == 5
    assert s.failures == 1


def test_simple48_splices_word16_low():
    src = Script(words32=[0xABCD], bits=[1] + [0] * 15)
    assert SimpleScaler(48).draw(src, 2**47 + 3) == ((0xABCD << 16) | 1) % (2**47 + 3)


def test_simple_recycler_first_draw():
    s = SimpleRecycler()
    assert s.draw(Script(words32=[0]), 3) == 0
    assert s.state == (2**32 // 3, 0)


def test_simple_recycler_draws_per_word():
    s = SimpleRecycler()
    buf = BitBuffer(XorshiftBackend(0))
    for _ in range(17 * 100):
        s.draw(buf, 2)
    assert s.reseeds == 100
    assert buf.consumed_bits == 32 * 100


@pytest.mark.parametrize("variant, n", [("simple_recycler", 2**16), ("simple_recycler", 2**20)])
def test_simple_recycler_range(variant, n):
    assert not supports(variant, n)
    with pytest.raises(ValueError):
        make_scaler(variant).draw(BitBuffer(XorshiftBackend(0)), n)


def test_bbr32_power_of_two_never_fails():
    s = Recycler32()
    buf = BitBuffer(XorshiftBackend(3))
    out = [s.draw(buf, 2**31) for _ in range(10**4)]
    assert s.failures == 0
    assert max(out) < 2**31
    assert buf.bits_served == 31 * 10**4


def test_bbr32_acceptance_rate():
    n = 3 * 2**29
    s = make_scaler("bbr_32")
    generate(s, BitBuffer(XorshiftBackend(3)), [n], 10**5)
    rate = 10**5 / (10**5 + s.failures)
    assert rate == pytest.approx(0.75, abs=0.01)


def test_bbr32_recycles_below_cutover():
    s = Recycler32()
    s.draw(BitBuffer(XorshiftBackend(0)), 5)
    assert s.state[0] >= 1 and s.state[0] < 2**30


@pytest.mark.parametrize(
    "value, m, n, expected",
    [(5, 2, 3, (1, 2)), (0, 7, 11, (0, 0)), (20, 3, 7, (2, 6))],
)
def test_split_quotient_remainder(value, m, n, expected):
    q, d = split_quotient_remainder(value, m, n)
    assert (q, d) == expected
    assert q * n + d == value


@pytest.mark.parametrize("value, m, n", [(6, 2, 3), (-1, 2, 3), (0, 0, 3)])
def test_split_quotient_remainder_errors(value, m, n):
    with pytest.raises(ValueError):
        split_quotient_remainder(value, m, n)


def test_quotient_remainder_enumeration_2x3():
    pairs = [split_quotient_remainder(v, 2, 3) for v in range(6)]
    assert sorted(pairs) == [(q, d) for q in range(2) for d in range(3)]


@pytest.mark.parametrize(
    "variant, n",
    [
        ("bbr", 0),
        ("bbr", 2**32),
        ("simple32", 2**32),
        ("simple64", 2**64 - 1),
        ("simple40", 2**40),
        ("bbr_32", 2**32),
    ],
)
def test_invalid_modulus_leaves_state(variant, n):
    s = make_scaler(variant)
    buf = BitBuffer(XorshiftBackend(0))
    before = (s.state, buf.bits_served)
    with pytest.raises(ValueError):
        s.draw(buf, n)
    with pytest.raises(ValueError):
        generate(s, buf, [3, n], 4)
    assert (s.state, buf.bits_served) == before


def test_rejection_cap_surfaces():
    class Top:
        def next32(self):
            return 2**32 - 1

    with pytest.raises(RejectionLimitError):
        SimpleScaler(32).draw(Top(), 3)


def test_kernel_rejection_cap_surfaces():
    # Counter words above n starve the shift-and-reject path.
    s = make_scaler("bbr_32")
    with pytest.raises(RejectionLimitError):
        generate(s, BitBuffer(CounterBackend(2**31 + 5)), [2**31 + 1], 100)


def _moduli(rng, variant, size):
    hi = make_scaler(variant).max_modulus
    logs = rng.uniform(0, np.log2(hi), size)
    return np.clip(np.exp2(logs).astype(np.uint64), 1, hi)


@pytest.mark.parametrize("variant", VARIANTS)
def test_output_range_fuzz(variant):
    rng = np.random.default_rng(hash(variant) & 0xFFFF)
    moduli = _moduli(rng, variant, 1 << 17)
    out = generate(make_scaler(variant), BitBuffer(XorshiftBackend(7)), moduli, len(moduli))
    assert np.all(out < moduli)


@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("kind", ["xorshift", "counter"])
@pytest.mark.parametrize("profile32", [False, True])
def test_kernel_matches_reference(variant, kind, profile32):
    rng = np.random.default_rng(1)
    moduli = [int(x) for x in rng.choice([2, 3, 5, 52, 1000, 65535, 2**20 + 7, 2**31 + 1, 2**32 - 1], 7)]
    moduli = [m for m in moduli if supports(variant, m)] or [3]
    runs = []
    for compiled in (True, False):
        buf = BitBuffer(make_backend(kind, 5), profile32=profile32)
        s = make_scaler(variant)
        if compiled:
            out = generate(s, buf, moduli, 3000).tolist()
        else:
            out = [s.draw(buf, moduli[i % len(moduli)]) for i in range(3000)]
        runs.append(
            (out, s.state, s.failures, buf.store, buf.available, buf.consumed_bits,
             buf.bits_served, buf.refills, buf.source.to_array().tolist())
        )
    assert runs[0] == runs[1]


@pytest.mark.parametrize("variant", ["bbr", "simple48", "bbr_32"])
def test_bbs_backend_uses_reference_path(variant):
    a = generate(make_scaler(variant), BitBuffer(make_backend("bbs", 3)), [7, 1000], 200)
    b = generate(make_scaler(variant), BitBuffer(make_backend("bbs", 3)), [7, 1000], 200)
    assert a.tolist() == b.tolist()
    assert np.all(a < np.tile([7, 1000], 100))


@settings(max_examples=60, deadline=None)
@given(
    variant=st.sampled_from(["bbr", "bbr_faster", "bbr_cheating"]),
    log_cap=st.integers(3, 62),
    moduli=st.lists(st.integers(1, 2**32), min_size=1, max_size=20),
    seed=st.integers(0, 2**64 - 1),
)
def test_recycler_state_invariant(variant, log_cap, moduli, seed):
    cap = 1 << log_cap
    gran = "bits2" if variant == "bbr" else "mixed"
    s = BitRecycler(cap, gran, cheating=variant == "bbr_cheating")
    buf = BitBuffer(XorshiftBackend(seed))
    for n in moduli:
        n = min(n, s.max_modulus)
        d = s.draw(buf, n)
        m, r = s.state
        assert 0 <= d < n
        assert 0 <= r < m and m >= 1


@settings(max_examples=30, deadline=None)
@given(variant=st.sampled_from(VARIANTS), seed=st.integers(0, 2**64 - 1))
def test_determinism(variant, seed):
    runs = []
    for _ in range(2):
        buf = BitBuffer(XorshiftBackend(seed))
        out = generate(make_scaler(variant), buf, [3, 52, 1000], 500)
        runs.append((out.tolist(), buf.bits_served))
    assert runs[0] == runs[1]


def test_cheating_matches_exact_mixed_refill():
    moduli = [2, 3, 52, 10**6, 2**31 + 1]
    a = generate(make_scaler("bbr_faster"), BitBuffer(XorshiftBackend(0)), moduli, 10**5)
    cheat = make_scaler("bbr_cheating")
    b = generate(cheat, BitBuffer(XorshiftBackend(0)), moduli, 10**5)
    assert np.array_equal(a, b)
    assert cheat.failures == 0


def test_unknown_variant():
    with pytest.raises(ValueError):
        make_scaler("bbr_fastest")
