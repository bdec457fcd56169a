from __future__ import annotations

import random

import pytest

from prngformer.compile.specs import CircuitNetlist, Gate, LcgSpec, MtSpec
from prngformer.errors import DecodeError, DomainError
from prngformer.oracles import (eval_circuit, lcg_jump, lcg_next, lcg_stream, mt_init, mt_next, mt_states,
                                mt_stream, read_kat, temper, twist_word, untemper)


def cpython_mt19937(seed, count):
    x = [seed & 0xFFFFFFFF]
    for i in range(1, 624):
        x.append((1812433253 * (x[-1] ^ (x[-1] >> 30)) + i) & 0xFFFFFFFF)
    rng = random.Random()
    rng.setstate((3, tuple(x + [624]), None))
    return [rng.getrandbits(32) for _ in range(count)]


def test_mt19937_first_outputs():
    out = mt_stream(MtSpec.mt19937(5489), 2)
    assert out == [3499211612, 581869302]


@pytest.mark.parametrize("seed", [0, 1, 42, 5489, 2**32 - 1])
def test_mt19937_against_cpython(seed):
    assert mt_stream(MtSpec.mt19937(seed), 1500) == cpython_mt19937(seed, 1500)


@pytest.mark.parametrize("seed", [1, 5489, 42])
def test_known_answer_files(data_dir, seed):
    header, values = read_kat(data_dir / f"mt19937_seed{seed}.txt")
    assert f"seed={seed}" in header
    assert len(values) == 1000
    assert mt_stream(MtSpec.mt19937(seed), 1000) == values


def test_read_kat_errors(tmp_path):
    p = tmp_path / "k.txt"
    p.write_text("1\n2\n")
    with pytest.raises(DecodeError):
        read_kat(p)
    p.write_text("# h\n1\nx\n")
    with pytest.raises(DecodeError) as info:
        read_kat(p)
    assert info.value.position == 3


def test_small_mt_regression():
    assert mt_stream(MtSpec.small(), 10) == [230, 111, 116, 193, 210, 3, 41, 27, 29, 118]


def test_in_place_update_touches_one_slot():
    spec = MtSpec.small()
    hist = mt_states(spec, 40)
    for b in range(1, 41):
        diff = [j for j in range(spec.n) if hist[b][j] != hist[b - 1][j]]
        assert set(diff) <= {(b - 1) % spec.n}


def test_split_bit_extremes():
    words = (0b10110010, 0b01101101, 0b11110000, 0b00001111)
    for r, source in ((0, 0), (8, 1)):
        spec = MtSpec.small(r=r, state=words, seed=None)
        t = words[source]
        z = words[spec.m % spec.n] ^ (t >> 1)
        if t & 1:
            z ^= spec.a
        assert twist_word(spec, words, 0) == z


@pytest.mark.parametrize("w", range(4, 13))
def test_tempering_is_a_bijection(w):
    u, s, t, l = max(1, w // 3), max(1, w // 4), max(1, w // 2), max(1, w // 2 + 1) % w or 1
    mask = (1 << w) - 1
    spec = MtSpec(w=w, n=4, m=1, r=1, a=1, u=u, s=s, t=t, l=l, b=0x5A5 & mask, c=0xC3C & mask)
    images = [temper(spec, z) for z in range(1 << w)]
    assert sorted(images) == list(range(1 << w))
    assert all(untemper(spec, y) == z for z, y in enumerate(images))


def test_untemper_mt19937_sample():
    spec = MtSpec.mt19937()
    rng = random.Random(3)
    for _ in range(200):
        z = rng.getrandbits(32)
        assert untemper(spec, temper(spec, z)) == z


def test_mt_state_wraps():
    spec = MtSpec.small()
    st = mt_init(spec)
    for _ in range(spec.n):
        _, st = mt_next(spec, st)
    assert st.index == 0


def test_lcg_examples():
    spec = LcgSpec(5, 3, 16, 7)
    assert lcg_stream(spec, 4) == [6, 1, 8, 11]
    assert lcg_next(spec, 11) == 10


def test_lcg_million_steps_against_big_integers():
    spec = LcgSpec(201, 77, 256, 13)
    x = spec.x0
    for _ in range(1_000_000):
        x = (spec.a * x + spec.c) % spec.m
    assert lcg_jump(spec, spec.x0, 1_000_000) == x
    k = 20_000
    ak = spec.a ** k
    exact = ak * spec.x0 + spec.c * (ak - 1) // (spec.a - 1)
    assert lcg_jump(spec, spec.x0, k) == exact % spec.m
    assert lcg_jump(LcgSpec(1, 5, 97), 3, 1000) == (3 + 5000) % 97


def test_lcg_spec_validation():
    with pytest.raises(DomainError):
        LcgSpec(1, 1, 1)
    with pytest.raises(DomainError):
        LcgSpec(20, 1, 16)
    with pytest.raises(DomainError):
        LcgSpec(3, 1, 16, 16)
    with pytest.raises(DomainError):
        LcgSpec(3, 1, 16, w=3)
    assert LcgSpec(3, 1, 16).w == 4
    assert LcgSpec(3, 1, 17).w == 5


def test_mt_spec_validation():
    with pytest.raises(DomainError):
        MtSpec.small(m=4)
    with pytest.raises(DomainError):
        MtSpec.small(r=9)
    with pytest.raises(DomainError):
        MtSpec.small(a=256)
    with pytest.raises(DomainError):
        MtSpec.small(u=8)
    with pytest.raises(DomainError):
        MtSpec.small(state=(1, 2, 3), seed=None)


def test_eval_circuit():
    nl = CircuitNetlist(["a", "b", "c"],
                        [Gate("n", "NOT", ["a"]), Gate("g1", "AND", ["n", "b"]), Gate("g2", "OR", ["g1", "c"]),
                         Gate("e", "AND", []), Gate("o", "OR", [])],
                        ["g2", "g1", "e", "o"])
    assert eval_circuit(nl, {"a": 0, "b": 1, "c": 0}) == [1, 1, 1, 0]
    assert eval_circuit(nl, {"a": 1, "b": 1, "c": 0}) == [0, 0, 1, 0]
    with pytest.raises(DomainError):
        eval_circuit(nl, {"a": 1})


def test_zero_state_is_a_fixed_point():
    spec = MtSpec.small(state=(0, 0, 0, 0), seed=None)
    assert mt_stream(spec, 50) == [0] * 50
    assert lcg_next(LcgSpec(1, 0, 16), 9) == 9
