from __future__ import annotations

import numpy as np
import pytest

from prngformer.compile import LcgSpec, build_lcg_program
from prngformer.errors import CompileError, DomainError, LowMarginError
from prngformer.kernel import PrecisionPolicy, forward, generate
from prngformer.oracles import lcg_stream


def test_worked_example():
    prog = build_lcg_program(LcgSpec(5, 3, 16, 7))
    assert list(generate(prog, [7], 4)) == [7, 6, 1, 8, 11]


def test_one_layer_one_head():
    prog = build_lcg_program(LcgSpec(201, 77, 256))
    assert len(prog.layers) == 1
    assert prog.head_counts() == [1]
    assert prog.readout.kind == "value"


@pytest.mark.parametrize("a,c,m,x0", [(1, 1, 2, 0), (3, 0, 7, 1), (0, 5, 11, 3), (201, 77, 256, 9), (17, 3, 250, 249)])
def test_matches_recurrence(a, c, m, x0):
    spec = LcgSpec(a, c, m, x0)
    prog = build_lcg_program(spec)
    tape = generate(prog, [x0], 300)
    assert list(tape)[1:] == lcg_stream(spec, 300)


def test_debug_channels_hold_affine_value_and_residue():
    spec = LcgSpec(13, 7, 32, 5)
    prog = build_lcg_program(spec)
    xs = [5] + lcg_stream(spec, 20)
    rows = forward(prog, xs)
    s = rows[:, prog.debug_channels["s"]]
    r = rows[:, prog.debug_channels["r"]]
    assert np.allclose(s, [spec.a * x + spec.c for x in xs], atol=1e-9)
    assert np.allclose(r, [(spec.a * x + spec.c) % spec.m for x in xs], atol=1e-6)


def test_modulus_limit():
    with pytest.raises(CompileError):
        build_lcg_program(LcgSpec(3, 1, 300))
    prog = build_lcg_program(LcgSpec(3, 1, 300), max_modulus=512)
    assert list(generate(prog, [0], 5))[1:] == lcg_stream(LcgSpec(3, 1, 300), 5)


def test_position_limit():
    prog = build_lcg_program(LcgSpec(5, 3, 16), max_steps=10)
    generate(prog, [0], 10)
    with pytest.raises(DomainError):
        generate(prog, [0], 11)


def test_quantized_lcg():
    spec = LcgSpec(97, 31, 128, 1)
    prog = build_lcg_program(spec)
    got = generate(prog, [1], 200, PrecisionPolicy.quantized(24))
    assert list(got)[1:] == lcg_stream(spec, 200)


def test_low_margin_is_raised_not_rounded():
    # at 6 mantissa bits the value path cannot hold a x + c exactly
    spec = LcgSpec(201, 77, 256, 255)
    prog = build_lcg_program(spec)
    with pytest.raises(LowMarginError):
        generate(prog, [255], 50, PrecisionPolicy.quantized(6))


def test_identity_recurrence_and_period():
    prog = build_lcg_program(LcgSpec(1, 0, 16, 9))
    assert list(generate(prog, [9], 3)) == [9, 9, 9, 9]
    spec = LcgSpec(13, 1, 64, 0)
    tape = list(generate(build_lcg_program(spec), [0], 200))
    assert tape[1:] == lcg_stream(spec, 200)
    period = next(k for k in range(1, 201) if tape[k] == tape[0])
    assert 64 % period == 0
