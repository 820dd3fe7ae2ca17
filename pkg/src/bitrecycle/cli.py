"""Command-line entry point: ``bitrecycle <subcommand> ...``.

Machine-readable output goes to stdout and diagnostics to stderr.  Exit
status is 0 on success, 1 when a check fails and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import random
import re
import sys
import time
from fractions import Fraction

from . import bench, metrics, oracle, splitting
from .backends import BACKEND_KINDS, make_backend
from .bitsource import BitBuffer, RejectionLimitError
from .scaler import VARIANTS, generate, make_scaler, supports

OK, FAIL, USAGE = 0, 1, 2
EXAMPLES = ("example1", "example2")
DEFAULT_LEDGER_MODULI = (2, 3, 52, 10**6, 2**31 + 1)
ORACLE_VARIANTS = ("bbr", "bbr_faster")
ORACLE_MODULI = (2, 3, 5, 6)
ORACLE_BOUND = Fraction(1, 2**20)


def _power(text: str) -> int:
    """Parse ``1048576``, ``2^20`` or ``2**20``."""
    m = re.fullmatch(r"\s*(\d+)\s*(?:(?:\^|\*\*)\s*(\d+))?\s*", text)
    if not m:
        raise argparse.ArgumentTypeError(f"not a count: {text!r}")
    value = int(m.group(1)) ** int(m.group(2)) if m.group(2) else int(m.group(1))
    if value < 1:
        raise argparse.ArgumentTypeError("count must be positive")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [_power(t) if "^" in t or "**" in t else int(t) for t in text.split(",")]
    except (ValueError, argparse.ArgumentTypeError):
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")


def _header(**fields) -> None:
    print("# " + " ".join(f"{k}={v}" for k, v in fields.items()), file=sys.stderr)


def _common(p: argparse.ArgumentParser, seed: bool = True, backend: str = "xorshift") -> None:
    p.add_argument("--backend", choices=BACKEND_KINDS, default=backend, help="word source")
    if seed:
        p.add_argument("--seed", type=int, default=0, help="backend seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bitrecycle", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="print uniform integers, one per line")
    p.add_argument("--variant", choices=VARIANTS, default="bbr")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--n", type=int, help="modulus of every draw")
    g.add_argument("--n-list", type=_int_list, help="comma-separated moduli, cycled")
    p.add_argument("--count", type=int, default=10, help="number of values")
    p.add_argument("--profile32", action="store_true", help="refill the bit buffer with 32-bit words")
    _common(p)

    p = sub.add_parser("efficiency", help="print the entropy ledger of a run")
    p.add_argument("--variant", choices=VARIANTS + EXAMPLES, default="bbr")
    p.add_argument("--draws", type=int, default=10**6, help="draws (batches for example2)")
    p.add_argument("--moduli", type=_int_list, default=list(DEFAULT_LEDGER_MODULI))
    _common(p)

    p = sub.add_parser("verify", help="run correctness checks")
    vsub = p.add_subparsers(dest="target", required=True, metavar="TARGET")
    s = vsub.add_parser("splitting", help="exact and statistical splitting checks")
    s.add_argument("--samples", type=int, default=10**6)
    s.add_argument("--seed", type=int, default=0)
    u = vsub.add_parser("uniformity", help="chi-square uniformity and serial-pair tests")
    u.add_argument("--variant", choices=VARIANTS, default="bbr")
    u.add_argument("--n", type=int, required=True)
    u.add_argument("--samples", type=int, default=10**6)
    _common(u)

    p = sub.add_parser("bench", help="time scalers over the modulus sweep")
    p.add_argument("--variant", choices=VARIANTS + ("all",), default="all")
    p.add_argument("--calls", type=_power, default=bench.DEFAULT_CALLS, help="calls per modulus, e.g. 2^20")
    p.add_argument("--moduli", type=_int_list, help="moduli to time (default: the sweep)")
    p.add_argument("--out", help=f"output directory (default ${bench.OUT_ENV} or bench_out)")
    _common(p, backend="counter")

    p = sub.add_parser("arith", help="time the integer arithmetic kernels")
    p.add_argument("--kind", choices=bench._kernels.ARITH + ("all",), default="all")
    p.add_argument("--calls", type=_power, default=bench.DEFAULT_CALLS)
    p.add_argument("--moduli", type=_int_list)
    p.add_argument("--out")
    _common(p)

    sub.add_parser("sweep-list", help="print the benchmark moduli, one per line")

    p = sub.add_parser("selftest", help="run the exact oracles and the ledger bound")
    p.add_argument("--draws", type=int, default=10**6, help="draws in the ledger check")
    return parser


# --- subcommands ----------------------------------------------------------


def cmd_generate(args, parser) -> int:
    moduli = [args.n] if args.n is not None else args.n_list
    if args.count < 0:
        parser.error("--count must be non-negative")
    for n in moduli:
        if not supports(args.variant, n):
            parser.error(f"modulus {n} out of range for {args.variant}")
    _header(command="generate", variant=args.variant, backend=args.backend, seed=args.seed)
    buf = BitBuffer(make_backend(args.backend, args.seed), profile32=args.profile32)
    out = generate(make_scaler(args.variant), buf, moduli, args.count)
    sys.stdout.write("".join(f"{int(v)}\n" for v in out))
    return OK


def cmd_efficiency(args, parser) -> int:
    if args.draws < 1:
        parser.error("--draws must be positive")
    _header(command="efficiency", variant=args.variant, backend=args.backend, seed=args.seed)
    src = make_backend(args.backend, args.seed)
    state_bits = 0.0
    if args.variant == "example1":
        c = metrics.example1_naive(args.draws, src)
    elif args.variant == "example2":
        c = metrics.example2_radix(args.draws, src)
    else:
        for n in args.moduli:
            if not supports(args.variant, n):
                parser.error(f"modulus {n} out of range for {args.variant}")
        c, scaler = metrics.run_ledger(args.variant, args.moduli, args.draws, src)
        state_bits = scaler.state_entropy()
    print(f"draws {c.draws}")
    print(f"bits_consumed {c.bits_consumed}")
    print(f"entropy_emitted {c.entropy_emitted:.6f}")
    print(f"state_entropy {state_bits:.6f}")
    print(f"wasted_bits {metrics.ledger_gap(c, state_bits):.6f}")
    print(f"failures {c.failures}")
    print(f"efficiency {metrics.efficiency(c, state_bits):.9f}")
    return OK


def _report_line(name: str, rep) -> str:
    return f"{name:<12} statistic={rep.statistic:.4f} dof={rep.dof} p={rep.p_value:.4f} {'PASS' if rep.passed() else 'FAIL'}"


def cmd_verify(args, parser) -> int:
    if args.target == "uniformity":
        if not supports(args.variant, args.n):
            parser.error(f"modulus {args.n} out of range for {args.variant}")
        if args.n < 2:
            parser.error("uniformity needs n >= 2")
        _header(command="verify uniformity", variant=args.variant, backend=args.backend, seed=args.seed)
        try:
            uni, ser = metrics.verify_uniformity(args.variant, args.n, args.samples, args.backend, args.seed)
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return FAIL
        print(_report_line("uniformity", uni))
        print(_report_line("serial-pair", ser))
        return OK if uni.passed() and ser.passed() else FAIL

    _header(command="verify splitting", seed=args.seed, samples=args.samples)
    ok = True
    for S in ({0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2}):
        dev = splitting.verify_factorization_exact(3, S, 6, 0, 0)
        good = dev < Fraction(1, 10**12)
        ok &= good
        print(f"exact |E|=3 S={sorted(S)} L=6  deviation={float(dev):.3g} {'PASS' if good else 'FAIL'}")
    ev = splitting.EventSet(4, {0, 1})
    for kind, expect in (("xorshift", True), ("counter", False)):
        rep = splitting.statistical_split_test(make_backend(kind, args.seed), ev, args.samples)
        checks = " ".join(f"{k}={'ok' if v else 'bad'}" for k, v in rep.checks().items())
        good = rep.passed == expect
        ok &= good
        role = "control" if not expect else "stream"
        print(f"statistical {kind:<8} ({role}) {checks} {'PASS' if good else 'FAIL'}")
    return OK if ok else FAIL


def _out_dir(args):
    return bench.output_dir(args.out) if args.out else bench.output_dir()


def cmd_bench(args, parser) -> int:
    variants = VARIANTS if args.variant == "all" else (args.variant,)
    _header(command="bench", variant=args.variant, backend=args.backend, seed=args.seed, calls=args.calls)
    cal = bench.calibrate()
    if cal.fallback:
        print("# no cycle counter: wall-clock timings only", file=sys.stderr)
    else:
        print(f"# cycles_per_ns={cal.cycles_per_clock_mean:.4f} log_stddev={cal.log_stddev:.4f}", file=sys.stderr)
    overhead = bench.backend_overhead(cal, args.calls)
    print(f"# harness overhead {overhead.ns_per_call:.3f} ns/call (counter backend)", file=sys.stderr)
    out_dir = _out_dir(args)
    results = {}
    status = OK
    for v in variants:
        try:
            records, sink = bench.bench_scaler(v, args.backend, args.moduli, cal, args.calls, args.seed)
        except RejectionLimitError as e:
            print(f"# {v}: {e}; skipped", file=sys.stderr)
            status = FAIL
            continue
        print(f"# {v} sink={sink:#x}", file=sys.stderr)
        if not records:
            print(f"# {v}: no modulus in range, skipped", file=sys.stderr)
            continue
        csv_path, dat_path = bench.result_paths(out_dir, v, args.backend)
        bench.emit_csv(records, csv_path)
        bench.emit_plot_data(records, dat_path)
        results[v] = records
        print(csv_path)
    for name, ns in bench.ordering(results):
        print(f"# median {name} {ns:.3f} ns", file=sys.stderr)
    return status


def cmd_arith(args, parser) -> int:
    kinds = bench._kernels.ARITH if args.kind == "all" else (args.kind,)
    if args.moduli and min(args.moduli) < 1:
        parser.error("moduli must be >= 1")
    _header(command="arith", kind=args.kind, backend=args.backend, seed=args.seed, calls=args.calls)
    cal = bench.calibrate()
    out_dir = _out_dir(args)
    results = {}
    for k in kinds:
        records, sink = bench.bench_arith(k, args.moduli, cal, args.backend, args.calls, args.seed)
        print(f"# {k} sink={sink:#x}", file=sys.stderr)
        csv_path, dat_path = bench.result_paths(out_dir, k, args.backend)
        bench.emit_csv(records, csv_path)
        bench.emit_plot_data(records, dat_path)
        results[k] = records
        print(csv_path)
    for name, ns in bench.ordering(results):
        print(f"# median {name} {ns:.3f} ns", file=sys.stderr)
    return OK


def cmd_sweep_list(args, parser) -> int:
    sys.stdout.write("".join(f"{n}\n" for n in bench.sweep_moduli()))
    return OK


# --- selftest -------------------------------------------------------------


def _check_oracle() -> tuple[bool, str]:
    bad = []
    for v in ORACLE_VARIANTS:
        for cap in (8, 16):
            for n in ORACLE_MODULI:
                c = oracle.oracle_check(v, cap, n)
                if not (c.uniform and c.factorizes and c.residual_below(ORACLE_BOUND)):
                    bad.append(f"{v}/N={cap}/n={n}")
    # The mixed variants are exact too, even where the residual is larger.
    for v in ("simple_recycler", "bbr_32"):
        for cap in (8, 16):
            for n in ORACLE_MODULI:
                c = oracle.oracle_check(v, cap, n)
                if not (c.uniform and c.factorizes):
                    bad.append(f"{v}/N={cap}/n={n}")
    return not bad, ", ".join(bad) or "all configurations exact"


def _check_split_bijection() -> tuple[bool, str]:
    bad = oracle.split_brute_force(16, 16)
    return not bad, f"non-bijective pairs: {bad}" if bad else "M, N <= 16 bijective"


def _check_splitting() -> tuple[bool, str]:
    worst = max(
        splitting.verify_factorization_exact(3, S, 6, 0, 0)
        for S in ({0}, {1}, {2}, {0, 1}, {0, 2}, {1, 2})
    )
    return worst < Fraction(1, 10**12), f"max deviation {float(worst):.3g}"


def _check_roundtrip() -> tuple[bool, str]:
    rng = random.Random(0)
    for _ in range(2000):
        E = rng.randint(2, 5)
        S = splitting.EventSet(E, rng.sample(range(E), rng.randint(1, E - 1)))
        s = [rng.randrange(E) for _ in range(rng.randint(0, 40))]
        if splitting.unsplit(splitting.split(s, S)) != s:
            return False, f"round trip broke on {s}"
    return True, "2000 random streams"


def _check_ledger(draws: int) -> tuple[bool, str]:
    c, scaler = metrics.run_ledger("bbr", DEFAULT_LEDGER_MODULI, draws)
    gap = metrics.ledger_gap(c, scaler.state_entropy())
    return 0 <= gap < 1, f"wasted {gap:.3g} bits over {draws} draws"


def selftest(draws: int = 10**6) -> int:
    checks = (
        ("oracle uniformity", _check_oracle),
        ("quotient split bijection", _check_split_bijection),
        ("splitting factorization", _check_splitting),
        ("split round trip", _check_roundtrip),
        ("recycling ledger", lambda: _check_ledger(draws)),
    )
    status = OK
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as e:  # a crash is a failed check, not a usage error
            ok, detail = False, f"{type(e).__name__}: {e}"
        print(f"{'PASS' if ok else 'FAIL'}  {name:<24} {detail} ({time.perf_counter() - t0:.2f}s)")
        if not ok:
            status = FAIL
    return status


def cmd_selftest(args, parser) -> int:
    _header(command="selftest", seed=0)
    return selftest(args.draws)


COMMANDS = {
    "generate": cmd_generate,
    "efficiency": cmd_efficiency,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "arith": cmd_arith,
    "sweep-list": cmd_sweep_list,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return COMMANDS[args.command](args, parser)


if __name__ == "__main__":
    sys.exit(main())
