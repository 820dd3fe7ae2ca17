"""Compiled (numba) twins of the backend, bit buffer and scaler code paths.

State travels in small uint64 arrays so the Python objects can be synced in
and out around a kernel call:

    backend  bs  = [x, y, z, w]           (xorshift)  or  [value, 0, 0, 0]
    buffer   buf = [store, available, consumed_bits, bits_served, profile32, refills]
    scaler   st  = [m, r, failures, error]

Every literal is wrapped in ``U`` because numba turns uint64/int64 mixes into
float64.
"""
from __future__ import annotations

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.core import cgutils
from numba.extending import intrinsic

U = np.uint64

XORSHIFT = 0
COUNTER = 1

CAP = 10_000  # keep in step with bitsource.REJECTION_CAP


@intrinsic
def _readcyclecounter(typingctx):
    sig = types.uint64()

    def codegen(context, builder, signature, args):
        fnty = ir.FunctionType(ir.IntType(64), [])
        fn = cgutils.get_or_insert_function(builder.module, fnty, "llvm.readcyclecounter")
        return builder.call(fn, [])

    return sig, codegen


@njit(cache=True)
def cycles():
    """Raw cycle counter; returns 0 on targets without one."""
    return _readcyclecounter()


# --- backends -------------------------------------------------------------


@njit(inline="always")
def next32(kind, bs):
    if kind == XORSHIFT:
        x = bs[0]
        t = (x ^ (x << U(11))) & U(0xFFFFFFFF)
        bs[0] = bs[1]
        bs[1] = bs[2]
        bs[2] = bs[3]
        w = bs[3]
        w = (w ^ (w >> U(19))) ^ (t ^ (t >> U(8)))
        bs[3] = w
        return w
    v = bs[0]
    bs[0] = v + U(1)
    return v & U(0xFFFFFFFF)


@njit(inline="always")
def next64(kind, bs):
    hi = next32(kind, bs)
    lo = next32(kind, bs)
    return (hi << U(32)) | lo


@njit(cache=True)
def fill_words64(kind, bs, out):
    for i in range(out.shape[0]):
        out[i] = next64(kind, bs)


@njit(cache=True)
def fill_words32(kind, bs, out):
    for i in range(out.shape[0]):
        out[i] = next32(kind, bs)


# --- bit buffer -----------------------------------------------------------


@njit(cache=True)
def pop_refill(kind, bs, buf, k):
    """Slow path of ``pop``: splice the leftover bits with a fresh word."""
    avail = buf[1]
    old = buf[0]
    if buf[4] != U(0):
        w = next32(kind, bs)
        width = U(32)
    else:
        w = next64(kind, bs)
        width = U(64)
    buf[2] += width
    buf[5] += U(1)
    need = k - avail
    out = old | ((w & ((U(1) << need) - U(1))) << avail)
    buf[0] = w >> need
    buf[1] = width - need
    return out


@njit(inline="always")
def pop(kind, bs, buf, k):
    """k in 1..32 bits, LSB first, splicing across a refill."""
    avail = buf[1]
    buf[3] += k
    if avail >= k:
        s = buf[0]
        buf[0] = s >> k
        buf[1] = avail - k
        return s & ((U(1) << k) - U(1))
    return pop_refill(kind, bs, buf, k)


@njit(inline="always")
def word32(kind, bs, buf):
    buf[2] += U(32)
    buf[3] += U(32)
    return next32(kind, bs)


@njit(inline="always")
def word64(kind, bs, buf):
    buf[2] += U(64)
    buf[3] += U(64)
    return next64(kind, bs)


@njit(inline="always")
def card(kind, bs, buf, st):
    limit = U(52) * (U(0xFFFFFFFF) // U(52))
    for _ in range(CAP):
        r = word32(kind, bs, buf)
        if r < limit:
            return r % U(52)
        st[2] += U(1)
    st[3] = U(1)
    return U(0)


# --- scalers --------------------------------------------------------------


@njit(inline="always")
def refill(mixed, kind, bs, buf, st, cap):
    m = st[0]
    r = st[1]
    t16 = cap >> U(16)
    t8 = cap >> U(8)
    while m < cap:
        # one pop site keeps the inlined body small
        k = U(2)
        if mixed:
            if m < t16:
                k = U(16)
            elif m < t8:
                k = U(8)
        r = (r << k) | pop(kind, bs, buf, k)
        m = m << k
    st[0] = m
    st[1] = r


@njit(inline="always")
def recycle_exact(mixed, kind, bs, buf, st, cap, n):
    for _ in range(CAP):
        refill(mixed, kind, bs, buf, st, cap)
        m = st[0]
        r = st[1]
        q = m // n
        nq = n * q
        if r < nq:
            st[1] = r // n
            st[0] = q
            return r % n
        st[1] = r - nq
        st[0] = m - nq
        st[2] += U(1)
    st[3] = U(1)
    return U(0)


@njit(inline="always")
def bit_length(v):
    k = U(0)
    while v != U(0):
        v = v >> U(1)
        k += U(1)
    return k


@njit(cache=True)
def draw_simple(variant, kind, bs, buf, st, n):
    if n == U(1):
        return U(0)
    if variant == 0:
        limit = U(0xFFFFFFFF)
    elif variant == 1:
        limit = U(1) << U(40)
    elif variant == 2:
        limit = U(1) << U(48)
    else:
        limit = U(0xFFFFFFFFFFFFFFFF)
    nq = n * (limit // n)
    for _ in range(CAP):
        if variant == 0:
            r = word32(kind, bs, buf)
        elif variant == 1:
            hi = word32(kind, bs, buf)
            r = (hi << U(8)) | pop(kind, bs, buf, U(8))
        elif variant == 2:
            hi = word32(kind, bs, buf)
            r = (hi << U(16)) | pop(kind, bs, buf, U(16))
        else:
            r = word64(kind, bs, buf)
        if r < nq:
            return r % n
        st[2] += U(1)
    st[3] = U(1)
    return U(0)


@njit(cache=True)
def draw_recycle(mixed, kind, bs, buf, st, cap, n):
    return recycle_exact(mixed, kind, bs, buf, st, cap, n)


@njit(cache=True)
def draw_cheating(kind, bs, buf, st, cap, n):
    refill(True, kind, bs, buf, st, cap)
    q = st[0] // n
    r = st[1]
    d = r % n
    rq = r // n
    if rq >= q:
        st[2] += U(1)
        rq = q - U(1)
    st[0] = q
    st[1] = rq
    return d


@njit(cache=True)
def draw_simple_recycler(kind, bs, buf, st, cap, n):
    # cap = 2**word_bits
    wb = bit_length(cap) - U(1)
    floor_m = U(1) << (wb >> U(1))
    if n * n > floor_m:
        floor_m = n * n
    for _ in range(CAP):
        if st[0] < floor_m:
            st[0] = cap
            if wb == U(32):
                st[1] = word32(kind, bs, buf)
            else:
                st[1] = pop(kind, bs, buf, wb)
        m = st[0]
        r = st[1]
        q = m // n
        nq = n * q
        if r < nq:
            st[1] = r // n
            st[0] = q
            return r % n
        st[1] = r - nq
        st[0] = m - nq
        st[2] += U(1)
    st[3] = U(1)
    return U(0)


@njit(cache=True)
def draw_bbr32(kind, bs, buf, st, cap, n):
    if n >= (cap >> U(1)):
        k = bit_length(n - U(1))
        for _ in range(CAP):
            r = pop(kind, bs, buf, k)
            if r < n:
                return r
            st[2] += U(1)
        st[3] = U(1)
        return U(0)
    return recycle_exact(False, kind, bs, buf, st, cap, n)


# One compiled body per family: a single nine-way body optimizes poorly.
@njit(cache=True)
def draw(variant, kind, bs, buf, st, cap, n):
    if variant <= 3:
        return draw_simple(variant, kind, bs, buf, st, n)
    if variant == 4:
        return draw_recycle(False, kind, bs, buf, st, cap, n)
    if variant == 5:
        return draw_recycle(True, kind, bs, buf, st, cap, n)
    if variant == 6:
        return draw_cheating(kind, bs, buf, st, cap, n)
    if variant == 7:
        return draw_simple_recycler(kind, bs, buf, st, cap, n)
    return draw_bbr32(kind, bs, buf, st, cap, n)


@njit(inline="always")
def family(variant):
    if variant <= 3:
        return 0
    if variant <= 5:
        return 1
    return variant - 4


# Callers pass ``fam`` as a constant, so numba compiles one specialization per
# family with the other branches pruned; a loop body that mentions every
# family optimizes several times slower.
@njit(cache=True)
def _run_loop(fam, variant, kind, bs, buf, st, cap, moduli, out):
    L = moduli.shape[0]
    j = 0
    for i in range(out.shape[0]):
        n = moduli[j]
        if fam == 0:
            out[i] = draw_simple(variant, kind, bs, buf, st, n)
        elif fam == 1:
            if variant == 5:
                out[i] = draw_recycle(True, kind, bs, buf, st, cap, n)
            else:
                out[i] = draw_recycle(False, kind, bs, buf, st, cap, n)
        elif fam == 2:
            out[i] = draw_cheating(kind, bs, buf, st, cap, n)
        elif fam == 3:
            out[i] = draw_simple_recycler(kind, bs, buf, st, cap, n)
        else:
            out[i] = draw_bbr32(kind, bs, buf, st, cap, n)
        if st[3] != U(0):
            return i
        j += 1
        if j == L:
            j = 0
    return out.shape[0]


@njit(cache=True)
def run(variant, kind, bs, buf, st, cap, moduli, out):
    fam = family(variant)
    if fam == 0:
        return _run_loop(0, variant, kind, bs, buf, st, cap, moduli, out)
    if fam == 1:
        return _run_loop(1, variant, kind, bs, buf, st, cap, moduli, out)
    if fam == 2:
        return _run_loop(2, variant, kind, bs, buf, st, cap, moduli, out)
    if fam == 3:
        return _run_loop(3, variant, kind, bs, buf, st, cap, moduli, out)
    return _run_loop(4, variant, kind, bs, buf, st, cap, moduli, out)


def generate(scaler, buf, moduli: np.ndarray, count: int) -> np.ndarray:
    """Run ``scaler`` through the kernel, syncing all Python state."""
    from .bitsource import RejectionLimitError

    bs = buf.source.to_array()
    barr = buffer_array(buf)
    st = np.zeros(4, dtype=np.uint64)
    st[:3] = scaler.to_array()
    out = np.empty(count, dtype=np.uint64)
    done = run(
        scaler.kernel_code,
        buf.source.kernel_kind,
        bs,
        barr,
        st,
        U(scaler.capacity),
        moduli,
        out,
    )
    buf.source.load_array(bs)
    load_buffer(buf, barr)
    scaler.load_array(st[:3])
    if done < count:
        raise RejectionLimitError(f"{scaler.name}: too many consecutive rejections")
    return out


def buffer_array(buf) -> np.ndarray:
    return np.array(
        [
            buf.store,
            buf.available,
            buf.consumed_bits,
            buf.bits_served,
            int(buf.profile32),
            buf.refills,
        ],
        dtype=np.uint64,
    )


def load_buffer(buf, arr: np.ndarray) -> None:
    buf.store = int(arr[0])
    buf.available = int(arr[1])
    buf.consumed_bits = int(arr[2])
    buf.bits_served = int(arr[3])
    buf.refills = int(arr[5])


# --- timing loops ---------------------------------------------------------


@njit(cache=True)
def _time_loop(fam, variant, kind, bs, buf, st, cap, n, calls, use_sink):
    sink = U(0)
    c0 = cycles()
    for _ in range(calls):
        if fam == 0:
            v = draw_simple(variant, kind, bs, buf, st, n)
        elif fam == 1:
            if variant == 5:
                v = draw_recycle(True, kind, bs, buf, st, cap, n)
            else:
                v = draw_recycle(False, kind, bs, buf, st, cap, n)
        elif fam == 2:
            v = draw_cheating(kind, bs, buf, st, cap, n)
        elif fam == 3:
            v = draw_simple_recycler(kind, bs, buf, st, cap, n)
        else:
            v = draw_bbr32(kind, bs, buf, st, cap, n)
        if use_sink:
            sink ^= v
    c1 = cycles()
    return c1 - c0, sink


@njit(cache=True)
def time_scaler(variant, kind, bs, buf, st, cap, n, calls, use_sink):
    fam = family(variant)
    if fam == 0:
        return _time_loop(0, variant, kind, bs, buf, st, cap, n, calls, use_sink)
    if fam == 1:
        return _time_loop(1, variant, kind, bs, buf, st, cap, n, calls, use_sink)
    if fam == 2:
        return _time_loop(2, variant, kind, bs, buf, st, cap, n, calls, use_sink)
    if fam == 3:
        return _time_loop(3, variant, kind, bs, buf, st, cap, n, calls, use_sink)
    return _time_loop(4, variant, kind, bs, buf, st, cap, n, calls, use_sink)


# ad hoc function codes
ADHOC = (
    "my_gen_rand32",
    "my_gen_rand64",
    "next_bit",
    "next_2bits",
    "next_byte",
    "next_word16",
    "next_card",
    "next_card_prefilled",
)


@njit(cache=True)
def time_adhoc(code, kind, bs, buf, st, batch, calls):
    """``batch`` holds 64 prefilled cards followed by the cursor."""
    sink = U(0)
    size = batch.shape[0] - 1
    c0 = cycles()
    for _ in range(calls):
        if code == 0:
            v = next32(kind, bs)
        elif code == 1:
            v = next64(kind, bs)
        elif code == 2:
            v = pop(kind, bs, buf, U(1))
        elif code == 3:
            v = pop(kind, bs, buf, U(2))
        elif code == 4:
            v = pop(kind, bs, buf, U(8))
        elif code == 5:
            v = pop(kind, bs, buf, U(16))
        elif code == 6:
            v = card(kind, bs, buf, st)
        else:
            cur = batch[size]
            if cur >= U(size):
                for i in range(size):
                    batch[i] = card(kind, bs, buf, st)
                cur = U(0)
            v = batch[cur]
            batch[size] = cur + U(1)
        sink ^= v
    c1 = cycles()
    return c1 - c0, sink


ARITH = (
    "div32",
    "div32_24",
    "div48",
    "div64",
    "mod32",
    "mod32_24",
    "mod48",
    "mod64",
    "prod32",
    "prod32_24",
    "prod48",
    "prod64",
)


@njit(inline="always")
def arith_op(code, kind, bs, n):
    M32 = U(0xFFFFFFFF)
    if code == 0:
        return next32(kind, bs) // n
    if code == 1:
        return (next32(kind, bs) & U(0xFF000000)) // n
    if code == 2:
        return (next32(kind, bs) << U(16)) // n
    if code == 3:
        return next64(kind, bs) // n
    if code == 4:
        return next32(kind, bs) % n
    if code == 5:
        return (next32(kind, bs) & U(0xFF000000)) % n
    if code == 6:
        return (next32(kind, bs) << U(16)) % n
    if code == 7:
        return next64(kind, bs) % n
    # 32-bit products wrap at 32 bits, as uint32 * uint32 does in C
    if code == 8:
        return (next32(kind, bs) * n) & M32
    if code == 9:
        return ((next32(kind, bs) & U(0xFF)) * n) & M32
    if code == 10:
        return (next32(kind, bs) << U(16)) * n
    return next64(kind, bs) * n


@njit(cache=True)
def arith_values(code, kind, bs, n, out):
    for i in range(out.shape[0]):
        out[i] = arith_op(code, kind, bs, n)


@njit(cache=True)
def time_arith(code, kind, bs, n, calls):
    sink = U(0)
    c0 = cycles()
    for _ in range(calls):
        sink ^= arith_op(code, kind, bs, n)
    c1 = cycles()
    return c1 - c0, sink


@njit(cache=True)
def spin(iterations):
    """Busy loop used while calibrating the cycle counter."""
    acc = U(0x9E3779B97F4A7C15)
    for _ in range(iterations):
        acc ^= acc << U(13)
        acc ^= acc >> U(7)
        acc ^= acc << U(17)
    return acc
