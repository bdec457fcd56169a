"""A subset of the NIST SP 800-22 battery.

Implemented: frequency (monobit), block frequency, runs, longest run of
ones, cumulative sums, serial, approximate entropy and the discrete Fourier
transform test.  Formulas follow the SP 800-22 rev. 1a definitions;
``erfc`` and the regularized upper incomplete gamma come from SciPy.

Every test checks a minimum stream length.  ``strict=True`` (default)
enforces the recommended input size; ``strict=False`` only requires the
statistic to be defined, which is what the short worked examples need.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erfc, gammaincc, ndtr

from ..errors import PreconditionError

DEFAULT_ALPHA = 0.01
DEFAULT_BLOCK = 128
DEFAULT_SERIAL_M = 2
DEFAULT_APEN_M = 2


class BitStream:
    """An immutable sequence of bits stored one per byte."""

    __slots__ = ("_bits",)

    def __init__(self, bits):
        arr = np.asarray(bits)
        if arr.dtype == bool:
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.int64).ravel()
        if arr.size < 1:
            raise ValueError("a bit stream needs at least one bit")
        if np.any((arr != 0) & (arr != 1)):
            raise ValueError("bit stream entries must be 0 or 1")
        out = arr.astype(np.uint8)
        out.flags.writeable = False
        self._bits = out

    @classmethod
    def from_words(cls, words: Iterable[int], width: int) -> "BitStream":
        """Concatenate words, each least-significant bit first."""
        words = [int(x) for x in words]
        arr = np.array([(x >> k) & 1 for x in words for k in range(width)], dtype=np.uint8)
        return cls(arr)

    @classmethod
    def from_text(cls, text: str) -> "BitStream":
        digits = [c for c in text if not c.isspace()]
        bad = [c for c in digits if c not in "01"]
        if bad:
            raise ValueError(f"unexpected character {bad[0]!r} in bit text")
        return cls(np.frombuffer("".join(digits).encode(), dtype=np.uint8) - ord("0"))

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitStream":
        """Bytes unpacked least-significant bit first."""
        return cls(np.unpackbits(np.frombuffer(data, dtype=np.uint8), bitorder="little"))

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    def packed(self) -> bytes:
        return np.packbits(self._bits, bitorder="little").tobytes()

    def __len__(self) -> int:
        return int(self._bits.size)

    def complement(self) -> "BitStream":
        return BitStream(1 - self._bits)


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class

    name: str
    statistic: float | None
    p_value: float | None
    passed: bool | None
    alpha: float = DEFAULT_ALPHA
    p_values: tuple = ()
    params: dict = field(default_factory=dict)
    skipped: bool = False
    reason: str = ""

    def to_json(self) -> dict:
        out = {"test": self.name, "statistic": self.statistic, "p_value": self.p_value,
               "result": "skip" if self.skipped else ("pass" if self.passed else "fail"),
               "alpha": self.alpha, "params": self.params}
        if len(self.p_values) > 1:
            out["p_values"] = list(self.p_values)
        if self.skipped:
            out["reason"] = self.reason
        return out


def _as_bits(stream) -> np.ndarray:
    return (stream if isinstance(stream, BitStream) else BitStream(stream)).bits.astype(np.int64)


def _require(name: str, n: int, minimum: int):
    if n < minimum:
        raise PreconditionError(f"{name} needs at least {minimum} bits, got {n}")


def _clip(p: float) -> float:
    return float(min(1.0, max(0.0, p)))


def _report(name, stat, pvals, alpha, params) -> TestReport:
    pvals = tuple(_clip(p) for p in pvals)
    p = min(pvals)
    return TestReport(name, float(stat), p, p >= alpha, alpha, pvals, params)


# ---------------------------------------------------------------------------
# the tests


def monobit(stream, alpha: float = DEFAULT_ALPHA, strict: bool = True) -> TestReport:
    x = _as_bits(stream)
    n = x.size
    _require("monobit", n, 100 if strict else 1)
    s = abs(int(np.sum(2 * x - 1))) / math.sqrt(n)
    return _report("monobit", s, [erfc(s / math.sqrt(2))], alpha, {})


def block_frequency(stream, M: int = DEFAULT_BLOCK, alpha: float = DEFAULT_ALPHA,
                    strict: bool = True) -> TestReport:
    x = _as_bits(stream)
    n = x.size
    if M < 1:
        raise ValueError("block size must be >= 1")
    _require("block_frequency", n, max(100, M) if strict else M)
    N = n // M
    pi = x[:N * M].reshape(N, M).mean(axis=1)
    chi2 = 4.0 * M * float(np.sum((pi - 0.5) ** 2))
    return _report("block_frequency", chi2, [gammaincc(N / 2.0, chi2 / 2.0)], alpha, {"M": M, "blocks": N})


def runs(stream, alpha: float = DEFAULT_ALPHA, strict: bool = True) -> TestReport:
    x = _as_bits(stream)
    n = x.size
    _require("runs", n, 100 if strict else 2)
    pi = x.mean()
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        # frequency prerequisite fails: NIST assigns p = 0
        return _report("runs", 0.0, [0.0], alpha, {"prerequisite": "failed"})
    v = 1 + int(np.count_nonzero(x[1:] != x[:-1]))
    num = abs(v - 2.0 * n * pi * (1 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1 - pi)
    return _report("runs", float(v), [erfc(num / den)], alpha, {})


_LONGEST_TABLES = {
    8: (1, [0.2148, 0.3672, 0.2305, 0.1875]),
    128: (4, [0.1174, 0.2430, 0.2493, 0.1752, 0.1027, 0.1124]),
    10000: (10, [0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727]),
}


def _longest_one_run(block: np.ndarray) -> int:
    padded = np.concatenate([[0], block, [0]])
    edges = np.flatnonzero(np.diff(padded))
    if edges.size == 0:
        return 0
    return int(np.max(edges[1::2] - edges[0::2]))


def longest_run(stream, alpha: float = DEFAULT_ALPHA, strict: bool = True) -> TestReport:
    x = _as_bits(stream)
    n = x.size
    _require("longest_run", n, 128)
    M = 8 if n < 6272 else (128 if n < 750000 else 10000)
    lo, probs = _LONGEST_TABLES[M]
    K = len(probs) - 1
    N = n // M
    counts = np.zeros(K + 1)
    for block in x[:N * M].reshape(N, M):
        run = _longest_one_run(block)
        counts[min(max(run - lo, 0), K)] += 1
    expected = N * np.array(probs)
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    return _report("longest_run", chi2, [gammaincc(K / 2.0, chi2 / 2.0)], alpha,
                   {"M": M, "counts": counts.astype(int).tolist()})


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


def _cusum_p(n: int, z: int) -> float:
    sq = math.sqrt(n)
    nz = _trunc_div(n, z)
    s1 = 0.0
    for k in range(_trunc_div(-nz + 1, 4), _trunc_div(nz - 1, 4) + 1):
        s1 += ndtr((4 * k + 1) * z / sq) - ndtr((4 * k - 1) * z / sq)
    s2 = 0.0
    for k in range(_trunc_div(-nz - 3, 4), _trunc_div(nz - 1, 4) + 1):
        s2 += ndtr((4 * k + 3) * z / sq) - ndtr((4 * k + 1) * z / sq)
    return 1.0 - s1 + s2


def cusum(stream, mode: str = "both", alpha: float = DEFAULT_ALPHA, strict: bool = True) -> TestReport:
    """Cumulative sums; ``mode`` is ``fwd``, ``rev`` or ``both`` (two p-values)."""
    x = _as_bits(stream)
    n = x.size
    _require("cusum", n, 100 if strict else 1)
    steps = 2 * x - 1
    modes = {"fwd": ["fwd"], "rev": ["rev"], "both": ["fwd", "rev"]}[mode]
    pvals, stats = [], []
    for m in modes:
        s = np.cumsum(steps if m == "fwd" else steps[::-1])
        z = int(np.max(np.abs(s)))
        stats.append(z)
        pvals.append(_cusum_p(n, z))
    return _report("cusum", max(stats), pvals, alpha, {"mode": mode, "z": stats})


def _psi2(x: np.ndarray, m: int) -> float:
    n = x.size
    if m <= 0:
        return 0.0
    ext = np.concatenate([x, x[:m - 1]])
    idx = np.zeros(n, dtype=np.int64)
    for j in range(m):
        idx = (idx << 1) | ext[j:j + n]
    counts = np.bincount(idx, minlength=1 << m).astype(np.float64)
    return float((1 << m) / n * np.sum(counts ** 2) - n)


def serial(stream, m: int = DEFAULT_SERIAL_M, alpha: float = DEFAULT_ALPHA, strict: bool = True) -> TestReport:
    x = _as_bits(stream)
    n = x.size
    if m < 2:
        raise ValueError("serial test needs m >= 2")
    _require("serial", n, max(100, 1 << (m + 3)) if strict else m)
    p0, p1, p2 = _psi2(x, m), _psi2(x, m - 1), _psi2(x, m - 2)
    d1 = p0 - p1
    d2 = p0 - 2 * p1 + p2
    pv = [gammaincc(2 ** (m - 2), d1 / 2.0), gammaincc(2 ** (m - 3), d2 / 2.0)]
    return _report("serial", d1, pv, alpha, {"m": m, "del2": d2})


def _phi(x: np.ndarray, m: int) -> float:
    n = x.size
    if m == 0:
        return 0.0
    ext = np.concatenate([x, x[:m - 1]])
    idx = np.zeros(n, dtype=np.int64)
    for j in range(m):
        idx = (idx << 1) | ext[j:j + n]
    c = np.bincount(idx, minlength=1 << m) / n
    c = c[c > 0]
    return float(np.sum(c * np.log(c)))


def approximate_entropy(stream, m: int = DEFAULT_APEN_M, alpha: float = DEFAULT_ALPHA,
                        strict: bool = True) -> TestReport:
    x = _as_bits(stream)
    n = x.size
    if m < 1:
        raise ValueError("approximate entropy needs m >= 1")
    _require("approximate_entropy", n, max(100, 1 << (m + 6)) if strict else m + 1)
    apen = _phi(x, m) - _phi(x, m + 1)
    chi2 = 2.0 * n * (math.log(2) - apen)
    return _report("approximate_entropy", chi2, [gammaincc(2 ** (m - 1), chi2 / 2.0)], alpha,
                   {"m": m, "apen": apen})


def spectral_dft(stream, alpha: float = DEFAULT_ALPHA, strict: bool = True) -> TestReport:
    x = _as_bits(stream)
    n = x.size
    _require("spectral_dft", n, 1000 if strict else 2)
    mags = np.abs(np.fft.fft(2.0 * x - 1.0))[: n // 2]
    threshold = math.sqrt(math.log(1.0 / 0.05) * n)
    n0 = 0.95 * n / 2.0
    n1 = float(np.count_nonzero(mags < threshold))
    d = (n1 - n0) / math.sqrt(n * 0.95 * 0.05 / 4.0)
    return _report("spectral_dft", d, [erfc(abs(d) / math.sqrt(2))], alpha, {"N1": n1, "N0": n0})


# ---------------------------------------------------------------------------
# battery

TESTS: dict[str, Callable] = {
    "monobit": monobit,
    "block_frequency": block_frequency,
    "runs": runs,
    "longest_run": longest_run,
    "cusum": cusum,
    "serial": serial,
    "approximate_entropy": approximate_entropy,
    "spectral_dft": spectral_dft,
}

_PARAM_NAMES = {"block_frequency": "M", "serial": "m", "approximate_entropy": "m"}


def run_suite(stream, alpha: float = DEFAULT_ALPHA, tests: Sequence[str] | None = None,
              block_size: int = DEFAULT_BLOCK, serial_m: int = DEFAULT_SERIAL_M,
              apen_m: int = DEFAULT_APEN_M) -> list[TestReport]:
    """Run the selected tests in a fixed order; short streams yield explicit skips."""
    names = list(TESTS) if tests is None else list(tests)
    unknown = [t for t in names if t not in TESTS]
    if unknown:
        raise ValueError(f"unknown tests: {unknown}; choose from {list(TESTS)}")
    stream = stream if isinstance(stream, BitStream) else BitStream(stream)
    extra = {"block_frequency": {"M": block_size}, "serial": {"m": serial_m},
             "approximate_entropy": {"m": apen_m}}
    reports = []
    for name in TESTS:
        if name not in names:
            continue
        kw = extra.get(name, {})
        try:
            rep = TESTS[name](stream, alpha=alpha, **kw)
        except PreconditionError as exc:
            rep = TestReport(name, None, None, None, alpha, (), dict(kw), True, str(exc))
        reports.append(rep)
    return reports
