from __future__ import annotations

import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prngformer.compile import MtSpec
from prngformer.errors import DomainError, PreconditionError
from prngformer.oracles import mt_stream
from prngformer.stats import BitStream, heatmap_bytes, heatmap_export, run_suite
from prngformer.stats.nist import (TESTS, approximate_entropy, block_frequency, cusum, erfc, gammaincc,
                                   longest_run, monobit, runs, serial, spectral_dft)

EPS_100 = ("1100100100001111110110101010001000100001011010001100001000110100"
           "110001001100011001100010100010111000")
LONGEST_128 = ("11001100000101010110110001001100111000000000001001001101010100010001"
               "001111010110100000001101011111001100111001101101100010110010")


def bs(text):
    return BitStream.from_text(text)


def test_special_functions_against_mpmath_grid(data_dir):
    grid = json.loads((data_dir / "special_functions.json").read_text())
    for x, want in grid["erfc"]:
        assert erfc(x) == pytest.approx(want, rel=1e-10, abs=0)
    for a, x, want in grid["gammaincc"]:
        assert gammaincc(a, x) == pytest.approx(want, rel=1e-10, abs=0)


def test_monobit_examples():
    assert monobit(bs("1011010101"), strict=False).p_value == pytest.approx(0.527089, abs=1e-6)
    assert monobit(bs(EPS_100)).p_value == pytest.approx(0.109599, abs=1e-6)


def test_block_frequency_examples():
    assert block_frequency(bs("0110011010"), M=3, strict=False).p_value == pytest.approx(0.801252, abs=1e-6)
    assert block_frequency(bs(EPS_100), M=10).p_value == pytest.approx(0.706438, abs=1e-6)


def test_runs_examples():
    assert runs(bs("1001101011"), strict=False).p_value == pytest.approx(0.147232, abs=1e-6)
    assert runs(bs(EPS_100)).p_value == pytest.approx(0.500798, abs=1e-6)
    assert runs(BitStream([1] * 100)).p_value == 0.0


def test_longest_run_example():
    rep = longest_run(bs(LONGEST_128))
    assert rep.params["counts"] == [4, 9, 3, 0]
    assert rep.statistic == pytest.approx(4.882605, abs=1e-6)
    # exact tail probability of chi^2 with 3 degrees of freedom at the statistic above
    exact = float(mpmath.gammainc(1.5, rep.statistic / 2, mpmath.inf, regularized=True))
    assert rep.p_value == pytest.approx(exact, abs=1e-12)
    assert rep.p_value == pytest.approx(0.180609, abs=2e-5)


def test_cusum_examples():
    rep = cusum(bs(EPS_100))
    assert rep.p_values[0] == pytest.approx(0.219194, abs=1e-6)
    assert rep.p_values[1] == pytest.approx(0.114866, abs=1e-6)
    assert cusum(bs("1011010111"), mode="fwd", strict=False).p_value == pytest.approx(0.4116588, abs=1e-6)


def test_serial_example():
    rep = serial(bs("0011011101"), m=3, strict=False)
    assert rep.p_values[0] == pytest.approx(0.808792, abs=1e-6)
    assert rep.p_values[1] == pytest.approx(0.670320, abs=1e-6)


def test_approximate_entropy_examples():
    assert approximate_entropy(bs("0100110101"), m=3, strict=False).p_value == pytest.approx(0.261961, abs=1e-6)
    assert approximate_entropy(bs(EPS_100), m=2, strict=False).p_value == pytest.approx(0.235301, abs=1e-6)


def dft_oracle(bits):
    """Direct O(n^2) transform with mpmath erfc, independent of numpy's FFT."""
    x = [2 * b - 1 for b in bits]
    n = len(x)
    T = math.sqrt(math.log(1 / 0.05) * n)
    below = 0
    for k in range(n // 2):
        re = sum(v * math.cos(2 * math.pi * k * j / n) for j, v in enumerate(x))
        im = sum(v * math.sin(2 * math.pi * k * j / n) for j, v in enumerate(x))
        below += math.hypot(re, im) < T
    d = (below - 0.95 * n / 2) / math.sqrt(n * 0.95 * 0.05 / 4)
    return float(mpmath.erfc(abs(d) / mpmath.sqrt(2))), below


@pytest.mark.parametrize("text", ["1001010011", EPS_100])
def test_spectral_dft_against_direct_transform(text):
    rep = spectral_dft(bs(text), strict=False)
    p, below = dft_oracle([int(c) for c in text])
    assert rep.params["N1"] == below
    assert rep.p_value == pytest.approx(p, abs=1e-10)


def test_spectral_dft_random_stream():
    rng = np.random.default_rng(2)
    bits = rng.integers(0, 2, 1024)
    p, _ = dft_oracle(bits.tolist())
    assert spectral_dft(BitStream(bits)).p_value == pytest.approx(p, abs=1e-9)


def test_constant_streams_fail_monobit():
    for v in (0, 1):
        rep = monobit(BitStream([v] * 100_000))
        assert rep.p_value < 1e-10
        assert not rep.passed


@given(st.lists(st.integers(0, 1), min_size=100, max_size=400))
@settings(max_examples=60, deadline=None)
def test_monobit_complement_invariance(bits):
    s = BitStream(bits)
    assert monobit(s).p_value == monobit(s.complement()).p_value


@given(st.lists(st.integers(0, 1), min_size=1100, max_size=1400))
@settings(max_examples=15, deadline=None)
def test_p_values_lie_in_unit_interval(bits):
    for rep in run_suite(BitStream(bits)):
        if rep.skipped:
            continue
        assert all(0.0 <= p <= 1.0 for p in rep.p_values)
        assert 0.0 <= rep.p_value <= 1.0


def test_run_suite_reports_skips():
    reps = run_suite(BitStream([0, 1] * 60))
    by_name = {r.name: r for r in reps}
    assert list(by_name) == list(TESTS)
    assert by_name["spectral_dft"].skipped and by_name["spectral_dft"].p_value is None
    assert "1000" in by_name["spectral_dft"].reason
    assert by_name["approximate_entropy"].skipped
    assert not by_name["monobit"].skipped
    assert by_name["spectral_dft"].to_json()["result"] == "skip"
    with pytest.raises(ValueError):
        run_suite(BitStream([0, 1] * 60), tests=["nope"])


def test_preconditions():
    with pytest.raises(PreconditionError):
        monobit(BitStream([1] * 50))
    with pytest.raises(PreconditionError):
        longest_run(BitStream([1] * 100), strict=False)
    with pytest.raises(ValueError):
        BitStream([0, 2])
    with pytest.raises(ValueError):
        BitStream([])


def test_monobit_against_popcount():
    words = mt_stream(MtSpec.mt19937(5489), 2000)
    n = 32 * len(words)
    ones = sum(bin(v).count("1") for v in words)
    want = float(mpmath.erfc(abs(2 * ones - n) / mpmath.sqrt(n) / mpmath.sqrt(2)))
    assert monobit(BitStream.from_words(words, 32)).p_value == pytest.approx(want, rel=1e-9)


def test_bitstream_conventions():
    assert BitStream.from_words([0b0110], 4).bits.tolist() == [0, 1, 1, 0]
    assert BitStream.from_bytes(b"\x01\x80").bits.tolist() == [1] + [0] * 7 + [0] * 7 + [1]
    s = BitStream.from_text("1100 1010")
    assert s.packed() == bytes([0b01010011])
    assert len(s) == 8


def test_heatmap_golden(data_dir):
    stream = BitStream([0, 1] * 25)
    data = heatmap_bytes(stream, 7, 7)
    assert data == (data_dir / "checkerboard_7x7.pgm").read_bytes()


def test_heatmap_geometry(tmp_path):
    stream = BitStream.from_words(mt_stream(MtSpec.mt19937(), 2048), 32)
    out = heatmap_export(stream, 256, 256, tmp_path / "h.pgm")
    assert out.startswith(b"P5\n256 256\n255\n")
    assert len(out) == len(b"P5\n256 256\n255\n") + 65536
    assert set(out[15:]) <= {0, 255}
    assert heatmap_bytes(stream, 256, 256) == out
    with pytest.raises(DomainError):
        heatmap_bytes(stream, 300, 300)
    with pytest.raises(DomainError):
        heatmap_bytes(stream, 0, 4)


def test_trivial_extremes():
    assert monobit(BitStream([0, 1] * 50)).p_value == 1.0
    assert monobit(BitStream([1] * 1000)).p_value < 1e-100
    zeros = {r.name: r for r in run_suite(BitStream([0] * 2000))}
    assert not zeros["monobit"].passed and not zeros["runs"].passed
    black = heatmap_bytes(BitStream([0] * 16), 4, 4)
    assert black.endswith(bytes(16))


def test_no_skips_on_long_stream():
    rng = np.random.default_rng(8)
    reps = run_suite(BitStream(rng.integers(0, 2, 1_000_000)))
    assert not any(r.skipped for r in reps)
    assert all(r.passed == (r.p_value >= r.alpha) for r in reps)
