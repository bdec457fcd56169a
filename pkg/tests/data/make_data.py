"""Regenerate the checked-in fixtures in this directory.

The fixtures come from implementations that share no code with the package:
CPython's own Mersenne Twister for the known-answer files, mpmath at 50
digits for the special-function grid, and a literal byte construction for
the checkerboard image.  Run from the repository root:

    python3 tests/data/make_data.py
"""
from __future__ import annotations

import json
import random
from pathlib import Path

import mpmath

HERE = Path(__file__).parent


def mt19937_init(seed: int) -> list[int]:
    x = [seed & 0xFFFFFFFF]
    for i in range(1, 624):
        x.append((1812433253 * (x[-1] ^ (x[-1] >> 30)) + i) & 0xFFFFFFFF)
    return x


def write_kat(seed: int, count: int = 1000) -> None:
    rng = random.Random()
    rng.setstate((3, tuple(mt19937_init(seed) + [624]), None))
    words = [rng.getrandbits(32) for _ in range(count)]
    header = f"# mt19937-32 seed={seed} outputs={count} (CPython random.getrandbits(32))"
    (HERE / f"mt19937_seed{seed}.txt").write_text(header + "\n" + "\n".join(map(str, words)) + "\n")


def write_special_grid() -> None:
    mpmath.mp.dps = 50
    xs = [0.0, 1e-8, 0.01, 0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 4.5, 6.0, 8.0, 12.0, 20.0, 26.0]
    erfc_rows = [[x, float(mpmath.erfc(x))] for x in xs + [-0.5, -2.0]]
    gam_rows = []
    for a in [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 8.0, 24.5, 50.0, 390.5]:
        for x in [0.01, 0.25, 1.0, 2.441, 5.0, 10.0, 30.0, 100.0, 400.0]:
            gam_rows.append([a, x, float(mpmath.gammainc(a, x, mpmath.inf, regularized=True))])
    doc = {"source": "mpmath 50-digit evaluation", "erfc": erfc_rows, "gammaincc": gam_rows}
    (HERE / "special_functions.json").write_text(json.dumps(doc, indent=1) + "\n")


def write_checkerboard(w: int = 7, h: int = 7) -> None:
    pixels = bytes(255 if (r * w + c) % 2 else 0 for r in range(h) for c in range(w))
    (HERE / f"checkerboard_{w}x{h}.pgm").write_bytes(b"P5\n%d %d\n255\n" % (w, h) + pixels)


if __name__ == "__main__":
    for s in (1, 5489, 42):
        write_kat(s)
    write_special_grid()
    write_checkerboard()
