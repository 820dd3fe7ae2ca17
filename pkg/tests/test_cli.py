import subprocess
import sys

import pytest

import bitrecycle.scaler as scaler_mod
from bitrecycle import bench, cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def usage_code(capsys, *argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(list(argv))
    capsys.readouterr()
    return exc.value.code


def test_generate_range(capsys):
    code, out, err = run(capsys, "generate", "--variant", "bbr", "--n", "52", "--count", "5", "--seed", "1")
    assert code == cli.OK
    values = [int(v) for v in out.split()]
    assert len(values) == 5
    assert all(0 <= v < 52 for v in values)
    assert "seed=1" in err


def test_generate_is_reproducible(capsys):
    a = run(capsys, "generate", "--n", "1000", "--count", "50", "--seed", "9")[1]
    b = run(capsys, "generate", "--n", "1000", "--count", "50", "--seed", "9")[1]
    assert a == b


def test_generate_cycles_moduli(capsys):
    code, out, _ = run(capsys, "generate", "--n-list", "2,1000", "--count", "6", "--variant", "bbr_32")
    values = [int(v) for v in out.split()]
    assert code == cli.OK
    assert all(v < 2 for v in values[0::2])
    assert all(v < 1000 for v in values[1::2])


@pytest.mark.parametrize(
    "argv",
    [
        ("generate", "--n", "0"),
        ("generate", "--variant", "simple_recycler", "--n", "70000"),
        ("generate",),
        ("generate", "--n", "3", "--n-list", "3"),
        ("generate", "--n", "3", "--bogus"),
        ("frobnicate",),
        ("bench", "--calls", "lots"),
        ("bench", "--calls", "0"),
        ("verify", "uniformity", "--n", "1"),
        ("efficiency", "--draws", "0"),
        ("arith", "--moduli", "0,5"),
    ],
)
def test_usage_errors(capsys, argv):
    assert usage_code(capsys, *argv) == cli.USAGE


@pytest.mark.parametrize("text, value", [("2^10", 1024), ("2**20", 1 << 20), ("4096", 4096), (" 3^2 ", 9)])
def test_power_parsing(text, value):
    assert cli._power(text) == value


def test_sweep_list(capsys):
    code, out, _ = run(capsys, "sweep-list")
    lines = out.splitlines()
    assert code == cli.OK
    assert lines[0] == "2"
    assert len(lines) == len(bench.sweep_moduli())


def test_efficiency_ledger(capsys):
    code, out, _ = run(capsys, "efficiency", "--variant", "bbr", "--draws", "20000")
    fields = dict(line.split() for line in out.splitlines())
    assert code == cli.OK
    assert int(fields["draws"]) == 20000
    assert 0 <= float(fields["wasted_bits"]) < 1
    assert float(fields["efficiency"]) > 0.999


@pytest.mark.parametrize("variant, low, high", [("example1", 0.57, 0.62), ("example2", 0.92, 0.96)])
def test_efficiency_examples(capsys, variant, low, high):
    code, out, _ = run(capsys, "efficiency", "--variant", variant, "--draws", "100000")
    fields = dict(line.split() for line in out.splitlines())
    assert low < float(fields["efficiency"]) < high


def test_verify_uniformity_passes(capsys):
    code, out, _ = run(capsys, "verify", "uniformity", "--variant", "bbr", "--n", "52", "--samples", "200000")
    assert code == cli.OK
    assert out.count("PASS") == 2


def test_verify_uniformity_counter_fails(capsys):
    code, out, _ = run(
        capsys, "verify", "uniformity", "--variant", "simple32", "--n", "1000",
        "--samples", "200000", "--backend", "counter",
    )
    assert code == cli.FAIL
    assert "FAIL" in out


def test_verify_splitting(capsys):
    code, out, _ = run(capsys, "verify", "splitting", "--samples", "100000")
    assert code == cli.OK
    assert "FAIL" not in out


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest", "--draws", "100000")
    assert code == cli.OK
    assert out.count("PASS") == 5


def test_selftest_catches_corrupted_refill(capsys, monkeypatch):
    real = scaler_mod.refill

    def corrupted(state, buf, granularity="bits2"):
        real(state, buf, granularity)
        state.r &= ~3  # zero the two freshest bits

    monkeypatch.setattr(scaler_mod, "refill", corrupted)
    code, out, _ = run(capsys, "selftest", "--draws", "10000")
    assert code == cli.FAIL
    line = next(x for x in out.splitlines() if "oracle uniformity" in x)
    assert line.startswith("FAIL") and "Error" not in line


def test_bench_writes_outputs(capsys, tmp_path):
    code, out, err = run(
        capsys, "bench", "--variant", "bbr", "--calls", "2^10", "--moduli", "3,52",
        "--out", str(tmp_path), "--backend", "counter",
    )
    assert code == cli.OK
    csv_path = tmp_path / "bbr_counter.csv"
    assert out.strip() == str(csv_path)
    assert len(csv_path.read_text().splitlines()) == 3
    assert (tmp_path / "bbr_counter.dat").exists()
    assert "sink=" in err and "harness overhead" in err


def test_bench_respects_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv(bench.OUT_ENV, str(tmp_path))
    code, _, _ = run(capsys, "bench", "--variant", "simple32", "--calls", "2^10", "--moduli", "7")
    assert code == cli.OK
    assert (tmp_path / "simple32_counter.csv").exists()


def test_bench_reports_starved_variant(capsys, tmp_path):
    # counter words from 4e9 up stay above n = 3e9 until they wrap
    code, out, err = run(
        capsys, "bench", "--variant", "bbr_32", "--calls", "2^10", "--moduli", "3000000000",
        "--out", str(tmp_path), "--backend", "counter", "--seed", "4000000000",
    )
    assert code == cli.FAIL
    assert "too many consecutive rejections" in err
    assert out == ""


def test_arith_writes_outputs(capsys, tmp_path):
    code, out, _ = run(capsys, "arith", "--kind", "div32_24", "--calls", "2^10", "--moduli", "1,3", "--out", str(tmp_path))
    assert code == cli.OK
    assert (tmp_path / "div32_24_xorshift.csv").exists()


def test_module_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "bitrecycle", "generate", "--n", "6", "--count", "3"],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0
    assert len(res.stdout.split()) == 3
