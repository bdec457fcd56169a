"""Constant-depth AND/OR/NOT netlists as one transformer layer per circuit level.

The prompt carries one input bit per token (bit 0 of each token).  Layer 0
isolates each bit in its own channel at its own position; layer 1 gathers
all of them onto the last position with a uniform-attention head and
evaluates the first gate level in its FFN; every further level adds one
FFN-only layer.  NOT is absorbed into the affine forms (``1 - x``).
"""
from __future__ import annotations

import numpy as np

from ..errors import CompileError, LowMarginError
from ..gadgets import and_units, or_units
from ..kernel import DEFAULT_MARGIN, Readout, WeightProgram, embed_tape, generate, readout_values, run_layers
from ..layout import Layout, relu
from .specs import CircuitNetlist


def _isolate_units(draft, p: int, out: str):
    """``out = b0 * I[pos = p]`` for a Boolean b0 and integer pos.

    With ``u(d) = ReLU(b0 - 2d) - ReLU(-2d) = b0 I[d <= 0]`` and ``d = pos - p``,
    the indicator is ``u(d) - u(d + 1)``.
    """
    for shift, sign in ((0.0, 1.0), (1.0, -1.0)):
        base = {"pos": -2.0, "one": 2.0 * (p - shift)}
        relu(draft, dict(base, b0=1.0), 0.0, {out: sign})
        relu(draft, base, 0.0, {out: -sign})


def compile_circuit(netlist: CircuitNetlist) -> WeightProgram:
    n_in = len(netlist.inputs)
    if n_in == 0:
        raise CompileError("a circuit needs at least one input bit")
    levels = netlist.levels()
    width = max(1, len(netlist.outputs))

    # literal form for every signal: NOT chains fold into 1 - x
    literal: dict[str, dict] = {x: {f"in:{x}": 1.0} for x in netlist.inputs}

    def lit(sig: str) -> dict:
        return literal[sig]

    lay = Layout.tokens(width)
    layers = []
    d = lay.draft()
    for idx, x in enumerate(netlist.inputs):
        _isolate_units(d, idx + 1, f"iso:{x}")
    layers.append(d.finish())

    by_level: dict[int, list[str]] = {}
    for gid in netlist.topo_order():
        by_level.setdefault(levels[gid], []).append(gid)
    top = max(levels.values(), default=0)

    def resolve_nots():
        for gid in netlist.topo_order():
            g = netlist.gate_index[gid]
            if g.kind == "NOT" and gid not in literal and g.args[0] in literal:
                neg = {k: -v for k, v in literal[g.args[0]].items()}
                neg["one"] = neg.get("one", 0.0) + 1.0
                literal[gid] = neg

    resolve_nots()
    d = lay.draft()
    d.head([{}], [{}], [{f"iso:{x}": float(n_in)} for x in netlist.inputs],
           [f"in:{x}" for x in netlist.inputs])
    for level in range(1, max(top, 1) + 1):
        if level > 1:
            d = lay.draft()
        for gid in by_level.get(level, []):
            g = netlist.gate_index[gid]
            if g.kind != "NOT":
                (and_units if g.kind == "AND" else or_units)(d, [lit(a) for a in g.args], {f"g:{gid}": 1.0})
                literal[gid] = {f"g:{gid}": 1.0}
        layers.append(d.finish())
        resolve_nots()

    matrix = np.zeros((len(lay), width + 1))
    bias = np.zeros(width + 1)
    for j, o in enumerate(netlist.outputs):
        for ch, coef in lit(o).items():
            if ch == "one":
                bias[j] += coef
            else:
                matrix[lay[ch], j] += coef
    return WeightProgram(layers, width, Readout("bits", matrix, bias), kind="circuit",
                         meta={"max_positions": n_in, "inputs": n_in, "depth": top,
                               "gates": len(netlist.gates)})


def circuit_prompt(bits) -> list[int]:
    return [int(b) for b in bits]


def run_circuit(program: WeightProgram, bits) -> list[int]:
    """Evaluate through ``generate`` and unpack the emitted token into output bits."""
    tape = generate(program, circuit_prompt(bits), 1)
    token = tape[-1]
    n_out = program.readout.matrix.shape[1] - 1
    return [(token >> j) & 1 for j in range(n_out)]


def run_circuit_batch(program: WeightProgram, assignments) -> np.ndarray:
    """Evaluate many input rows at once with one batched full forward pass.

    Returns an integer array (rows x outputs).  Raises ``LowMarginError``
    if any output channel lands within the decision margin of 0.5; its
    ``step`` is the offending row.
    """
    rows = np.asarray(assignments, dtype=np.int64)
    if rows.ndim != 2:
        raise ValueError("assignments must be a 2-d array of bits")
    base = embed_tape([0] * rows.shape[1], program.width)
    states = np.broadcast_to(base, (rows.shape[0],) + base.shape).copy()
    states[:, :, 0] = rows
    final = run_layers(program.layers, states)[:, -1, :]
    vals = readout_values(program, final)
    n_out = vals.shape[1] - 1
    bad = np.argwhere(~(np.abs(vals - 0.5) >= DEFAULT_MARGIN))
    if bad.size:
        r, ch = (int(v) for v in bad[0])
        raise LowMarginError(f"low-margin output for input row {r}: channel {ch} = {vals[r, ch]!r}",
                             r, ch, float(vals[r, ch]))
    return (vals[:, :n_out] > 0.5).astype(np.int64)
