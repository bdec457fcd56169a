"""Source-side descriptions: LCG and MT parameter sets and circuit netlists."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Sequence

from ..errors import CompileError, DomainError

MT19937_PARAMS = dict(w=32, n=624, m=397, r=31, a=0x9908B0DF, u=11, s=7, b=0x9D2C5680, t=15,
                      c=0xEFC60000, l=18, f=1812433253)
SMALL_MT_PARAMS = dict(w=8, n=4, m=2, r=3, a=0x99, u=3, s=2, b=0x9D, t=4, c=0xEF, l=4, f=1812433253)


@dataclass(frozen=True)
class LcgSpec:
    a: int
    c: int
    m: int
    x0: int = 0
    w: int | None = None

    def __post_init__(self):
        for name in ("a", "c", "m", "x0"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int):
                raise DomainError(f"LCG parameter {name} must be an integer")
        if self.m < 2:
            raise DomainError(f"modulus m={self.m} must be >= 2")
        if not (0 <= self.a < self.m and 0 <= self.c < self.m):
            raise DomainError(f"need 0 <= a, c < m (a={self.a}, c={self.c}, m={self.m})")
        if not 0 <= self.x0 < self.m:
            raise DomainError(f"seed x0={self.x0} outside [0, m)")
        need = (self.m - 1).bit_length()
        if self.w is None:
            object.__setattr__(self, "w", max(1, need))
        elif (1 << self.w) < self.m:
            raise DomainError(f"w={self.w} bits cannot hold residues mod {self.m}")


@dataclass(frozen=True)
class MtSpec:
    """Generic Mersenne Twister parameters.

    ``state`` gives the n initial words directly; otherwise ``seed`` is
    expanded with the standard initializer ``x_i = f (x_{i-1} ^ (x_{i-1} >> (w-2))) + i``.
    """

    w: int
    n: int
    m: int
    r: int
    a: int
    u: int
    s: int
    t: int
    l: int
    b: int
    c: int
    f: int = 1812433253
    seed: int | None = 5489
    state: tuple | None = None

    def __post_init__(self):
        if self.w < 2:
            raise DomainError("word size w must be >= 2")
        if self.n < 2 or not 1 <= self.m < self.n:
            raise DomainError(f"need n >= 2 and 1 <= m < n (n={self.n}, m={self.m})")
        if not 0 <= self.r <= self.w:
            raise DomainError(f"split bit r={self.r} outside [0, w]")
        limit = 1 << self.w
        for name in ("a", "b", "c"):
            if not 0 <= getattr(self, name) < limit:
                raise DomainError(f"mask {name} does not fit in {self.w} bits")
        for name in ("u", "s", "t", "l"):
            if not 1 <= getattr(self, name) < self.w:
                raise DomainError(f"shift {name}={getattr(self, name)} outside [1, w)")
        if self.state is not None:
            st = tuple(int(x) for x in self.state)
            if len(st) != self.n or any(not 0 <= x < limit for x in st):
                raise DomainError(f"explicit state must hold {self.n} words below 2^{self.w}")
            object.__setattr__(self, "state", st)
        elif self.seed is None:
            raise DomainError("MT spec needs either a seed or an explicit state")

    @classmethod
    def mt19937(cls, seed: int = 5489) -> "MtSpec":
        return cls(seed=seed, **MT19937_PARAMS)

    @classmethod
    def small(cls, seed: int = 5489, **overrides) -> "MtSpec":
        params = dict(SMALL_MT_PARAMS, seed=seed)
        params.update(overrides)
        return cls(**params)

    @property
    def upper_mask(self) -> int:
        return ((1 << self.w) - 1) & ~((1 << self.r) - 1)

    @property
    def lower_mask(self) -> int:
        return (1 << self.r) - 1

    def initial_state(self) -> tuple:
        if self.state is not None:
            return self.state
        mask = (1 << self.w) - 1
        x = [self.seed & mask]
        for i in range(1, self.n):
            prev = x[-1]
            x.append((self.f * (prev ^ (prev >> (self.w - 2))) + i) & mask)
        return tuple(x)


# ---------------------------------------------------------------------------
# circuits

GATE_KINDS = ("AND", "OR", "NOT")


@dataclass(frozen=True)
class Gate:
    id: str
    kind: str
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if self.kind not in GATE_KINDS:
            raise CompileError(f"gate {self.id!r}: unknown kind {self.kind!r}")
        if self.kind == "NOT" and len(self.args) != 1:
            raise CompileError(f"NOT gate {self.id!r} needs exactly one argument")


@dataclass(frozen=True)
class CircuitNetlist:
    inputs: tuple
    gates: tuple
    outputs: tuple
    gate_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "gates", tuple(g if isinstance(g, Gate) else Gate(**g) for g in self.gates))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        names = list(self.inputs) + [g.id for g in self.gates]
        if len(set(names)) != len(names):
            raise CompileError("duplicate input or gate identifiers")
        known = set(names)
        for g in self.gates:
            for a in g.args:
                if a not in known:
                    raise CompileError(f"gate {g.id!r} references unknown signal {a!r}")
        for o in self.outputs:
            if o not in known:
                raise CompileError(f"output {o!r} is not an input or gate")
        object.__setattr__(self, "gate_index", {g.id: g for g in self.gates})

    def topo_order(self) -> list[str]:
        from graphlib import CycleError, TopologicalSorter

        ts = TopologicalSorter({g.id: [a for a in g.args if a in self.gate_index] for g in self.gates})
        try:
            return list(ts.static_order())
        except CycleError as exc:
            raise CompileError(f"netlist has a cycle through {exc.args[1]}") from None

    def levels(self) -> dict[str, int]:
        """Alternation depth: inputs 0, AND/OR one more than their deepest argument, NOT free."""
        lvl = {x: 0 for x in self.inputs}
        for gid in self.topo_order():
            g = self.gate_index[gid]
            deepest = max((lvl[a] for a in g.args), default=0)
            lvl[gid] = deepest if g.kind == "NOT" else deepest + 1
        return lvl

    @property
    def depth(self) -> int:
        lv = self.levels()
        return max((lv[g.id] for g in self.gates), default=0)

    def to_json(self) -> dict:
        return {"inputs": list(self.inputs),
                "gates": [{"id": g.id, "kind": g.kind, "args": list(g.args)} for g in self.gates],
                "outputs": list(self.outputs)}

    @classmethod
    def from_json(cls, data: dict) -> "CircuitNetlist":
        try:
            gates = [Gate(str(g["id"]), str(g["kind"]).upper(), [str(a) for a in g.get("args", [])])
                     for g in data["gates"]]
            return cls([str(x) for x in data["inputs"]], gates, [str(o) for o in data["outputs"]])
        except (KeyError, TypeError) as exc:
            raise CompileError(f"malformed netlist: missing or invalid field {exc}") from None


# ---------------------------------------------------------------------------
# JSON spec files


class SpecError(CompileError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


def _line_of(text: str, key: str) -> int | None:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _int_field(data: dict, key: str, text: str, default=None):
    if key not in data:
        if default is not None:
            return default
        raise SpecError(f"missing field {key!r}", 1)
    v = data[key]
    if isinstance(v, str):
        try:
            v = int(v, 0)
        except ValueError:
            raise SpecError(f"field {key!r} is not an integer: {v!r}", _line_of(text, key)) from None
    if isinstance(v, bool) or not isinstance(v, int):
        raise SpecError(f"field {key!r} must be an integer", _line_of(text, key))
    return v


def parse_spec_text(text: str, kind: str | None = None):
    """Parse a JSON spec into ``LcgSpec``, ``MtSpec`` or ``CircuitNetlist``.

    Integers may be written as JSON numbers or as strings such as ``"0x9908B0DF"``.
    ``{"preset": "mt19937"}`` and ``{"preset": "small"}`` name the built-in MT sets.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    if not isinstance(data, dict):
        raise SpecError("spec must be a JSON object", 1)
    kind = (kind or data.get("kind") or "").lower()
    if kind not in ("lcg", "mt", "circuit"):
        raise SpecError(f"unknown or missing spec kind {kind!r}", _line_of(text, "kind") or 1)
    if "kind" in data and str(data["kind"]).lower() != kind:
        raise SpecError(f"spec declares kind {data['kind']!r}, expected {kind!r}", _line_of(text, "kind"))
    if kind == "circuit":
        return CircuitNetlist.from_json(data)
    if kind == "lcg":
        vals = {k: _int_field(data, k, text) for k in ("a", "c", "m")}
        vals["x0"] = _int_field(data, "x0", text, 0)
        if "w" in data:
            vals["w"] = _int_field(data, "w", text)
        try:
            return LcgSpec(**vals)
        except DomainError as exc:
            key = next((k for k in ("m", "a", "c", "x0", "w") if k in str(exc).split("=")[0]), "m")
            raise SpecError(str(exc), _line_of(text, key) or 1) from None
    preset = data.get("preset")
    if preset is not None:
        base = {"mt19937": MT19937_PARAMS, "small": SMALL_MT_PARAMS}.get(str(preset).lower())
        if base is None:
            raise SpecError(f"unknown preset {preset!r}", _line_of(text, "preset"))
        params = dict(base)
    else:
        params = {}
    for key in ("w", "n", "m", "r", "a", "u", "s", "t", "l", "b", "c", "f"):
        if key in data:
            params[key] = _int_field(data, key, text)
        elif key not in params and key != "f":
            raise SpecError(f"missing field {key!r}", 1)
    if "state" in data:
        params["state"] = tuple(data["state"])
        params["seed"] = None
    else:
        params["seed"] = _int_field(data, "seed", text, 5489)
    try:
        return MtSpec(**params)
    except DomainError as exc:
        raise SpecError(str(exc), 1) from None


def spec_to_json(spec) -> dict:
    if isinstance(spec, LcgSpec):
        return {"kind": "lcg", "a": spec.a, "c": spec.c, "m": spec.m, "x0": spec.x0, "w": spec.w}
    if isinstance(spec, MtSpec):
        out = {"kind": "mt"}
        for key in ("w", "n", "m", "r", "a", "u", "s", "t", "l", "b", "c", "f"):
            out[key] = getattr(spec, key)
        if spec.state is not None:
            out["state"] = list(spec.state)
        else:
            out["seed"] = spec.seed
        return out
    if isinstance(spec, CircuitNetlist):
        return dict(kind="circuit", **spec.to_json())
    raise TypeError(f"not a spec: {spec!r}")
