from __future__ import annotations

import json

import numpy as np
import pytest

from prngformer.compile import LcgSpec, MtSpec, build_lcg_program, build_mt_program, parse_spec_text, spec_to_json
from prngformer.compile.specs import SpecError
from prngformer.errors import DecodeError
from prngformer.kernel import forward, programs_identical
from prngformer.serialize import atomic_write, dumps_program, load_program, loads_program, save_program
from prngformer.tape import ARROW, Tape, read_tape, tape_from_text, tape_to_text


def test_parse_lcg_and_round_trip():
    spec = parse_spec_text('{"kind": "lcg", "a": "0x05", "c": 3, "m": 16, "x0": 7}')
    assert spec == LcgSpec(5, 3, 16, 7)
    assert parse_spec_text(json.dumps(spec_to_json(spec))) == spec


def test_parse_mt_presets():
    assert parse_spec_text('{"kind": "mt", "preset": "mt19937", "seed": 1}') == MtSpec.mt19937(1)
    small = parse_spec_text('{"kind": "mt", "preset": "small", "r": 5}')
    assert small == MtSpec.small(r=5)
    assert parse_spec_text(json.dumps(spec_to_json(small))) == small


def test_spec_errors_carry_line_numbers():
    text = '{\n  "kind": "lcg",\n  "a": 3,\n  "c": 1,\n  "m": 1\n}'
    with pytest.raises(SpecError) as info:
        parse_spec_text(text)
    assert info.value.line == 5
    with pytest.raises(SpecError) as info:
        parse_spec_text('{\n "kind": "lcg",\n "a": }')
    assert info.value.line == 3
    with pytest.raises(SpecError):
        parse_spec_text('{"kind": "rng"}')
    with pytest.raises(SpecError):
        parse_spec_text('{"kind": "lcg", "a": 1, "c": 1, "m": 4}', kind="mt")
    with pytest.raises(SpecError):
        parse_spec_text('{"kind": "mt", "preset": "huge"}')
    with pytest.raises(SpecError):
        parse_spec_text('{"kind": "lcg", "a": "zz", "c": 1, "m": 4}')


def test_program_round_trip_is_bit_exact(tmp_path):
    for prog in (build_lcg_program(LcgSpec(201, 77, 256)), build_mt_program(MtSpec.small(), max_outputs=8)):
        again = loads_program(dumps_program(prog))
        assert programs_identical(prog, again)
        assert again.debug_channels == prog.debug_channels
        assert again.meta == json.loads(json.dumps(prog.meta))
        path = tmp_path / f"{prog.kind}.json"
        save_program(prog, path)
        assert programs_identical(prog, load_program(path))
        assert np.array_equal(forward(prog, [1, 2, 3]), forward(again, [1, 2, 3]))


def test_program_decode_errors():
    with pytest.raises(DecodeError):
        loads_program("{nope")
    with pytest.raises(DecodeError):
        loads_program('{"format": "something-else"}')
    text = dumps_program(build_lcg_program(LcgSpec(5, 3, 16)))
    data = json.loads(text)
    data["version"] = 99
    with pytest.raises(DecodeError):
        loads_program(json.dumps(data))
    data["version"] = 1
    data["schedule"] = [[1, 2]]
    with pytest.raises(DecodeError):
        loads_program(json.dumps(data))
    del data["layers"]
    with pytest.raises(DecodeError):
        loads_program(json.dumps(data))


def test_atomic_write_leaves_no_temp_files(tmp_path):
    target = tmp_path / "out.bin"
    atomic_write(target, b"\x00\x01")
    atomic_write(target, "text")
    assert target.read_text() == "text"
    assert [p.name for p in tmp_path.iterdir()] == ["out.bin"]


def test_tape_text_round_trip(tmp_path):
    tape = Tape([3, 0, ARROW, 17, ARROW])
    text = tape_to_text(tape)
    assert text == "3\n0\n=>\n17\n=>\n"
    assert list(tape_from_text("# comment\n" + text)) == list(tape)
    p = tmp_path / "t.txt"
    p.write_text(text)
    assert list(read_tape(p)) == list(tape)
    with pytest.raises(DecodeError) as info:
        tape_from_text("1\n2\nxyz\n")
    assert info.value.position == 3
    with pytest.raises(DecodeError):
        tape_from_text("-4\n")
    with pytest.raises(DecodeError):
        Tape([1, -2])
