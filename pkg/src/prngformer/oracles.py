"""Plain-integer reference implementations the compiled programs are checked against."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .compile.specs import CircuitNetlist, LcgSpec, MtSpec
from .errors import DecodeError, DomainError


def lcg_next(spec: LcgSpec, x: int) -> int:
    return (spec.a * x + spec.c) % spec.m


def lcg_stream(spec: LcgSpec, count: int, x: int | None = None) -> list[int]:
    x = spec.x0 if x is None else x
    out = []
    for _ in range(count):
        x = lcg_next(spec, x)
        out.append(x)
    return out


def lcg_jump(spec: LcgSpec, x: int, steps: int) -> int:
    """x_{k+steps} in closed form: a^k x + c (a^k - 1)/(a - 1), all mod m."""
    a, c, m = spec.a, spec.c, spec.m
    if a == 1:
        return (x + c * steps) % m
    big = (a - 1) * m
    ak = pow(a, steps, big)
    return (ak * x + c * ((ak - 1) // (a - 1))) % m


@dataclass(frozen=True)
class MtState:
    words: tuple
    index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "words", tuple(int(x) for x in self.words))
        if not 0 <= self.index < max(len(self.words), 1):
            raise DomainError("state index outside [0, n)")


def mt_init(spec: MtSpec) -> MtState:
    return MtState(spec.initial_state(), 0)


def twist_word(spec: MtSpec, words: Sequence[int], i: int) -> int:
    """The refreshed word z for slot i (rotation plus conditional a-XOR)."""
    n = spec.n
    t = (words[i] & spec.upper_mask) | (words[(i + 1) % n] & spec.lower_mask)
    z = words[(i + spec.m) % n] ^ (t >> 1)
    if t & 1:
        z ^= spec.a
    return z


def temper(spec: MtSpec, z: int) -> int:
    mask = (1 << spec.w) - 1
    y = z ^ (z >> spec.u)
    y ^= (y << spec.s) & spec.b
    y ^= (y << spec.t) & spec.c
    y ^= y >> spec.l
    return y & mask


def _undo_right(y: int, shift: int, w: int) -> int:
    x = y
    for _ in range(w // shift + 1):
        x = y ^ (x >> shift)
    return x


def _undo_left(y: int, shift: int, mask: int, w: int) -> int:
    x = y
    full = (1 << w) - 1
    for _ in range(w // shift + 1):
        x = y ^ ((x << shift) & mask & full)
    return x


def untemper(spec: MtSpec, y: int) -> int:
    y = _undo_right(y, spec.l, spec.w)
    y = _undo_left(y, spec.t, spec.c, spec.w)
    y = _undo_left(y, spec.s, spec.b, spec.w)
    return _undo_right(y, spec.u, spec.w)


def mt_next(spec: MtSpec, state: MtState) -> tuple[int, MtState]:
    """One in-place twist step at ``state.index`` followed by tempering."""
    i = state.index
    words = list(state.words)
    z = twist_word(spec, words, i)
    words[i] = z
    return temper(spec, z), MtState(tuple(words), (i + 1) % spec.n)


def mt_stream(spec: MtSpec, count: int, state: MtState | None = None) -> list[int]:
    st = mt_init(spec) if state is None else state
    out = []
    for _ in range(count):
        y, st = mt_next(spec, st)
        out.append(y)
    return out


def mt_states(spec: MtSpec, count: int) -> list[tuple]:
    """State words after 0, 1, ..., count steps."""
    st = mt_init(spec)
    hist = [st.words]
    for _ in range(count):
        _, st = mt_next(spec, st)
        hist.append(st.words)
    return hist


def eval_circuit(netlist: CircuitNetlist, assignment: Mapping[str, int]) -> list[int]:
    """Evaluate in topological order. Empty AND is 1 and empty OR is 0."""
    missing = [x for x in netlist.inputs if x not in assignment]
    if missing:
        raise DomainError(f"no value for inputs {missing}")
    val = {x: int(bool(assignment[x])) for x in netlist.inputs}
    for gid in netlist.topo_order():
        g = netlist.gate_index[gid]
        args = [val[a] for a in g.args]
        if g.kind == "AND":
            val[gid] = int(all(args))
        elif g.kind == "OR":
            val[gid] = int(any(args))
        else:
            val[gid] = 1 - args[0]
    return [val[o] for o in netlist.outputs]


def read_kat(path) -> tuple[str, list[int]]:
    """Known-answer file: one header line starting with '#', then one decimal word per line."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("#"):
        raise DecodeError(f"{path}: missing header line", 1)
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(int(line))
        except ValueError:
            raise DecodeError(f"{path}:{lineno}: not an integer: {line!r}", lineno) from None
    return lines[0][1:].strip(), values
