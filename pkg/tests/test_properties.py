from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from prngformer.compile import LcgSpec, MtSpec, build_lcg_program
from prngformer.kernel import ARROW, generate, round_mantissa
from prngformer.oracles import lcg_jump, lcg_stream, temper, untemper
from prngformer.tape import Tape, tape_from_text, tape_to_text


@st.composite
def lcg_specs(draw, max_m=64):
    m = draw(st.integers(2, max_m))
    return LcgSpec(draw(st.integers(0, m - 1)), draw(st.integers(0, m - 1)), m, draw(st.integers(0, m - 1)))


@given(lcg_specs())
@settings(max_examples=25, deadline=None)
def test_compiled_lcg_matches_oracle(spec):
    tape = generate(build_lcg_program(spec), [spec.x0], 40)
    assert list(tape)[1:] == lcg_stream(spec, 40)


@given(lcg_specs(max_m=2**20), st.integers(0, 500))
def test_lcg_jump_matches_iteration(spec, k):
    stream = lcg_stream(spec, k)
    assert lcg_jump(spec, spec.x0, k) == (stream[-1] if k else spec.x0)


@given(st.integers(0, 2**32 - 1))
def test_untemper_inverts_mt19937_tempering(z):
    spec = MtSpec.mt19937()
    assert untemper(spec, temper(spec, z)) == z


@given(st.lists(st.one_of(st.integers(0, 10**6), st.just(ARROW)), max_size=50))
def test_tape_text_round_trip(tokens):
    tape = Tape(tokens)
    assert list(tape_from_text(tape_to_text(tape))) == list(tape)


@given(st.floats(-1e6, 1e6, allow_nan=False), st.integers(4, 40))
def test_round_mantissa_error_bound(x, bits):
    r = float(round_mantissa(x, bits))
    assert abs(r - x) <= abs(x) * 2.0 ** -(bits + 1)
    assert float(round_mantissa(r, bits)) == r
    assert np.sign(r) == np.sign(x) or r == 0.0
