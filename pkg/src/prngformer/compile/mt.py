"""Seventeen-layer Mersenne Twister program over a chain-of-thought tape.

Tape grammar (N = n + 2 tokens per block)::

    x_1 .. x_n  =>  ( y  x'_1 .. x'_n  => )*

Block b (b >= 1) holds the tempered output y_b, the full state after the
b-th in-place update (only slot ((b - 1) mod n) + 1 changes), then '=>'.
The token at position p = b N + k is y when k = 0, x'_k for 1 <= k <= n
and '=>' for k = n + 1.  A query at position i predicts position i + 1.

Layer plan (every layer uses the concatenation residual):

 1  FFN: cnt = floor(i / N), off = i mod N, b = floor((i + 1) / N), k = (i + 1) mod N
 2  FFN: t = (b - 1) mod n, t1 = b mod n, tm = (b - 1 + m) mod n,
         key parity cnt mod 2, query parity (b - 1) mod 2, off^2
 3  four heads fetch x[t], x[t1], x[tm] and the copy source x[k] from
    block b - 1; FFN forms the slot indicators is_y, is_ar, is_z
 4  upper/lower masking of the fetched words (re-binarised)
 5  OR of the masked halves
 6  a-vector gated by the low bit of the combined word
 7  x[tm] XOR (combined >> 1)
 8  ... XOR gated a-vector = z
 9-16  tempering: snap + shifted/masked copy, then XOR, four times
17  output selection among y, z, the copied word and the separator
"""
from __future__ import annotations

import math
import os

import numpy as np

from ..errors import CompileError, DecodeError
from ..gadgets import (gate_lambda, gate_units, mod_units, or_units, pow2_ceil, select_units, snap_units,
                       step_units, xor_units)
from ..kernel import Readout, WeightProgram
from ..layout import Layout, constant, relu
from ..oracles import mt_init, mt_next
from ..tape import ARROW, Tape
from .specs import MtSpec

DEFAULT_EPS_BUDGET = 0.1
BETA = 128.0
RECENCY_GAP = 40.0


def eps_budget_from_env(default: float = DEFAULT_EPS_BUDGET) -> float:
    raw = os.environ.get("PRNGFORMER_EPS_BUDGET")
    if raw is None or raw == "":
        return default
    try:
        value = float(raw)
    except ValueError:
        raise CompileError(f"PRNGFORMER_EPS_BUDGET={raw!r} is not a number") from None
    if not 0 < value < 0.25:
        raise CompileError("PRNGFORMER_EPS_BUDGET must lie in (0, 0.25)")
    return value


def default_max_outputs(spec: MtSpec) -> int:
    return 100 if spec.n > 64 else 256


def _names(prefix: str, w: int) -> list[str]:
    return [f"{prefix}{k}" for k in range(w)]


def build_mt_program(spec: MtSpec, max_outputs: int | None = None,
                     eps_budget: float | None = None) -> WeightProgram:
    if max_outputs is None:
        max_outputs = default_max_outputs(spec)
    if max_outputs < 1:
        raise CompileError("max_outputs must be >= 1")
    budget = eps_budget_from_env() if eps_budget is None else eps_budget
    # four chained XOR/select stages sit between consecutive snaps at most
    eps = budget / 4.0
    w, n = spec.w, spec.n
    N = n + 2
    p_max = (n + 1) + max_outputs * N
    q_pos = p_max // N
    b_max = q_pos

    lay = Layout.tokens(w)
    layers = []

    # 1: position bookkeeping
    d = lay.draft()
    mod_units(d, {"pos": 1.0}, N, q_pos, "off", quotient="cnt")
    mod_units(d, {"pos": 1.0, "one": 1.0}, N, q_pos, "k", quotient="b")
    layers.append(d.finish())

    # 2: state indices, parities, squared offset
    d = lay.draft()
    bm1 = {"b": 1.0, "one": -1.0}
    mod_units(d, bm1, n, max(0, (b_max - 1) // n), "t")
    mod_units(d, {"b": 1.0}, n, b_max // n, "t1")
    mod_units(d, {"b": 1.0, "one": spec.m - 1.0}, n, (b_max - 1 + spec.m) // n, "tm")
    mod_units(d, {"cnt": 1.0}, 2, q_pos // 2, "par_k")
    mod_units(d, bm1, 2, max(0, (b_max - 1) // 2), "par_q")
    for u in range(N - 1):
        relu(d, {"off": 1.0}, -float(u), {"offsq": 1.0 if u == 0 else 2.0})
    layers.append(d.finish())

    # 3: fetch heads. score/2 = -beta (off - o)^2 + beta (2 par_q - 1) par_k + gamma pos + const(o)
    gamma = pow2_ceil(RECENCY_GAP / (2 * N))
    beta = BETA
    if beta < gamma * 2 * N + RECENCY_GAP:
        raise CompileError("fetch logit scales are inconsistent")
    d = lay.draft()
    keys = [{"offsq": 1.0}, {"off": 1.0}, {"par_k": 1.0}, {"pos": 1.0}]
    targets = {"A": {"t": 1.0, "one": 1.0}, "B": {"t1": 1.0, "one": 1.0},
               "C": {"tm": 1.0, "one": 1.0}, "D": {"k": 1.0}}
    bits = [{f"b{j}": 1.0} for j in range(w)]
    for name, target in targets.items():
        q = [{"one": -2.0 * beta},
             {c: 4.0 * beta * v for c, v in target.items()},
             {"par_q": 4.0 * beta, "one": -2.0 * beta},
             {"one": 2.0 * gamma}]
        d.head(q, keys, bits, _names(name, w))
    constant(d, 1.0, {"is_y": 1.0})
    step_units(d, {"k": 1.0}, 1, {"is_y": -1.0})
    step_units(d, {"k": 1.0}, n + 1, {"is_ar": 1.0})
    diff = {"k": 1.0, "t": -1.0, "one": -1.0}
    step_units(d, diff, 0, {"is_z": 1.0})
    step_units(d, diff, 1, {"is_z": -1.0})
    layers.append(d.finish())

    # 4: (x[t] & upper), (x[t+1] & lower)
    d = lay.draft()
    for j in range(w):
        if (spec.upper_mask >> j) & 1:
            snap_units(d, {f"A{j}": 1.0}, {f"U{j}": 1.0})
        else:
            d.declare(f"U{j}")
        if (spec.lower_mask >> j) & 1:
            snap_units(d, {f"B{j}": 1.0}, {f"L{j}": 1.0})
        else:
            d.declare(f"L{j}")
    layers.append(d.finish())

    # 5: combined word
    d = lay.draft()
    for j in range(w):
        or_units(d, [{f"U{j}": 1.0}, {f"L{j}": 1.0}], {f"tw{j}": 1.0})
    layers.append(d.finish())

    # 6: a if the combined word is odd, else 0
    d = lay.draft()
    a_bits = [(spec.a >> j) & 1 for j in range(w)]
    select_units(d, [{"one": float(bit)} for bit in a_bits], [{} for _ in range(w)],
                 {"tw0": 2.0, "one": -1.0}, [{f"v{j}": 1.0} for j in range(w)], 1.0, 1.0, eps)
    layers.append(d.finish())

    # 7: x[t+m] ^ (combined >> 1)
    d = lay.draft()
    for j in range(w):
        other = {f"tw{j + 1}": 1.0} if j + 1 < w else {}
        xor_units(d, {f"C{j}": 1.0}, other, {f"P{j}": 1.0}, eps)
    layers.append(d.finish())

    # 8: z
    d = lay.draft()
    for j in range(w):
        xor_units(d, {f"P{j}": 1.0}, {f"v{j}": 1.0}, {f"z{j}": 1.0}, eps)
    layers.append(d.finish())

    # 9-16: tempering
    stages = [("z", "y1", lambda j: j + spec.u, None),
              ("y1", "y2", lambda j: j - spec.s, spec.b),
              ("y2", "y3", lambda j: j - spec.t, spec.c),
              ("y3", "y4", lambda j: j + spec.l, None)]
    for src, dst, source_bit, mask in stages:
        d = lay.draft()
        snapped = f"{src}s" if src != "z" else "zs"
        for j in range(w):
            snap_units(d, {f"{src}{j}": 1.0}, {f"{snapped}{j}": 1.0})
            sj = source_bit(j)
            keep = 0 <= sj < w and (mask is None or (mask >> j) & 1)
            if keep:
                snap_units(d, {f"{src}{sj}": 1.0}, {f"{dst}h{j}": 1.0})
            else:
                d.declare(f"{dst}h{j}")
        layers.append(d.finish())
        d = lay.draft()
        for j in range(w):
            xor_units(d, {f"{snapped}{j}": 1.0}, {f"{dst}h{j}": 1.0}, {f"{dst}{j}": 1.0}, eps)
        layers.append(d.finish())

    # 17: route y / z / copied word / nothing (separator)
    d = lay.draft()
    lam = gate_lambda(1.0, eps)
    outs = [{f"out{j}": 1.0} for j in range(w)]
    gate_units(d, [{f"y4{j}": 1.0} for j in range(w)], {"is_y": 2.0, "one": -1.0}, outs, 1.0, 1.0, lam)
    gate_units(d, [{f"zs{j}": 1.0} for j in range(w)], {"is_z": 2.0, "one": -1.0}, outs, 1.0, 1.0, lam)
    gate_units(d, [{f"D{j}": 1.0} for j in range(w)],
               {"one": 1.0, "is_y": -2.0, "is_ar": -2.0, "is_z": -2.0}, outs, 1.0, 1.0, lam)
    layers.append(d.finish())

    readout = np.zeros((len(lay), w + 1))
    for j in range(w):
        readout[lay[f"out{j}"], j] = 1.0
    readout[lay["is_ar"], w] = 1.0
    debug = {name: lay[name] for name in ("cnt", "off", "b", "k", "t", "t1", "tm", "is_y", "is_ar", "is_z")}
    debug.update({f"z{j}": lay[f"zs{j}"] for j in range(w)})
    meta = {"max_positions": p_max - 1, "n": n, "w": w, "block": N, "max_outputs": max_outputs,
            "eps_budget": budget, "eps_per_gadget": eps, "gamma": gamma, "beta": beta,
            "hidden_widths": [layer.ffn.hidden for layer in layers]}
    return WeightProgram(layers, w, Readout("bits", readout, np.zeros(w + 1)), kind="mt",
                         debug_channels=debug, meta=meta)


# ---------------------------------------------------------------------------
# tape codec


def encode_tape(spec: MtSpec, blocks: int) -> Tape:
    state = mt_init(spec)
    tokens = list(state.words) + [ARROW]
    for _ in range(blocks):
        y, state = mt_next(spec, state)
        tokens.append(y)
        tokens.extend(state.words)
        tokens.append(ARROW)
    return Tape(tokens)


def prompt_tape(spec: MtSpec) -> Tape:
    return encode_tape(spec, 0)


def decode_tape(tape, partial: bool = False) -> tuple[list[tuple], list[int]]:
    """Split a tape into the state after each block and the emitted outputs.

    The state length n is inferred from the first separator.  With
    ``partial=True`` a trailing incomplete block is ignored instead of rejected.
    """
    toks = list(tape)
    try:
        first = next(i for i, tok in enumerate(toks) if tok is ARROW)
    except StopIteration:
        raise DecodeError("tape has no '=>' separator", len(toks) + 1) from None
    n = first
    if n < 2:
        raise DecodeError("the first separator must follow at least two state words", first + 1)
    N = n + 2
    history = [tuple(toks[:n])]
    outputs = []
    pos = n + 1
    while pos < len(toks):
        block = toks[pos:pos + N]
        if len(block) < N:
            if partial:
                break
            raise DecodeError(f"incomplete block of {len(block)} tokens starting at position {pos + 1}", pos + 1)
        for off, tok in enumerate(block[:-1]):
            if tok is ARROW:
                raise DecodeError(f"unexpected '=>' at position {pos + off + 1}", pos + off + 1)
        if block[-1] is not ARROW:
            raise DecodeError(f"expected '=>' at position {pos + N}", pos + N)
        outputs.append(block[0])
        history.append(tuple(block[1:-1]))
        pos += N
    return history, outputs


def changed_slots(history: list[tuple]) -> list[list[int]]:
    """1-based state slots that differ between consecutive snapshots."""
    return [[j + 1 for j in range(len(a)) if a[j] != b[j]] for a, b in zip(history, history[1:])]


def arrow_count_before(position: int, n: int) -> int:
    """Separators strictly before 1-based ``position``: ceil((i - (n + 1)) / (n + 2))."""
    return max(0, math.ceil((position - (n + 1)) / (n + 2)))
