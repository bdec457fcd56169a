"""Closed-form weight blocks for arithmetic and Boolean primitives.

Two layers of API live here:

* emitters (``step_units``, ``floor_units``, ``product_units``, ...) append
  hidden units or heads to a ``LayerDraft``; the compilers call these;
* builders (``build_product_unit``, ...) wrap one emitter into a standalone
  ``GadgetBlock`` whose input layout is ``operands..., pos, one``.

Every block runs through the real kernel via ``evaluate``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np
from scipy.special import ndtr

from .errors import CompileError, DomainError, StructuralError
from .kernel import EXACT, LayerSpec, PrecisionPolicy, run_layers
from .layout import DEFAULT_LAMBDA, Form, LayerDraft, Layout, bits, constant, identity, relu

SELF_LOGIT = 50.0


class GadgetKind(str, Enum):
    PRODUCT = "PRODUCT"
    RELU = "RELU"
    SELECT = "SELECT"
    FLOORDIV = "FLOORDIV"
    MOD = "MOD"
    CONST_AND = "CONST_AND"
    CONST_OR = "CONST_OR"
    CONST_XOR = "CONST_XOR"
    NOT = "NOT"
    SHL = "SHL"
    SHR = "SHR"
    VAR_AND = "VAR_AND"
    VAR_OR = "VAR_OR"
    VAR_XOR = "VAR_XOR"
    FANIN_AND = "FANIN_AND"
    FANIN_OR = "FANIN_OR"


@dataclass(frozen=True, eq=False)
class GadgetBlock:
    kind: GadgetKind
    layers: tuple
    in_channels: Mapping[str, int]
    out_channels: Mapping[str, int]
    eps_budget: float
    lipschitz: float = 1.0
    weight_bound: float = math.inf
    lemma: str = ""
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise StructuralError("a gadget needs at least one layer")
        if not self.eps_budget > 0:
            raise ValueError("eps_budget must be positive")
        d = self.layers[0].d_in
        if sorted(self.in_channels.values()) != list(range(d)):
            raise StructuralError("input channels must cover the first layer's input exactly")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.d_out != b.d_in:
                raise StructuralError("gadget layers do not chain")
        for name, ch in self.out_channels.items():
            if not 0 <= ch < self.layers[-1].d_out:
                raise StructuralError(f"output channel {name!r} out of range")

    def max_abs_weight(self) -> float:
        return max(float(np.max(np.abs(a))) for layer in self.layers for a in layer.weight_arrays() if a.size)


def _finish_block(kind, layout: Layout, n_in: int, layers, outs: Sequence[str], eps, **kw) -> GadgetBlock:
    in_channels = {name: layout[name] for name in layout.names[:n_in]}
    out_channels = {name: layout[name] for name in outs}
    return GadgetBlock(GadgetKind(kind), layers, in_channels, out_channels, eps, **kw)


def evaluate(block: GadgetBlock, inputs: Mapping[str, np.ndarray], policy: PrecisionPolicy = EXACT,
             seq_len: int = 16) -> dict[str, np.ndarray]:
    """Run ``block`` on a batch of input rows through the kernel.

    ``inputs`` maps operand channel names to equal-length 1-d arrays; ``pos``
    and ``one`` are filled in.  Rows are packed into causal sequences of
    ``seq_len`` with positions 1..seq_len.
    """
    names = [n for n in block.in_channels if n not in ("pos", "one")]
    missing = [n for n in names if n not in inputs]
    if missing:
        raise DomainError(f"missing gadget inputs: {missing}")
    cols = [np.asarray(inputs[n], dtype=np.float64).ravel() for n in names]
    count = len(cols[0]) if cols else 1
    if any(len(c) != count for c in cols):
        raise DomainError("gadget inputs differ in length")
    seqs = max(1, -(-count // seq_len))
    d_in = block.layers[0].d_in
    states = np.zeros((seqs * seq_len, d_in))
    for n, c in zip(names, cols):
        states[:count, block.in_channels[n]] = c
    states = states.reshape(seqs, seq_len, d_in)
    if "pos" in block.in_channels:
        states[:, :, block.in_channels["pos"]] = np.arange(1, seq_len + 1)
    if "one" in block.in_channels:
        states[:, :, block.in_channels["one"]] = 1.0
    out = run_layers(block.layers, states, policy).reshape(seqs * seq_len, -1)[:count]
    return {name: out[:, ch].copy() for name, ch in block.out_channels.items()}


# ---------------------------------------------------------------------------
# numeric helpers


def pow2_floor(x: float) -> float:
    return 2.0 ** math.floor(math.log2(x))


def pow2_ceil(x: float) -> float:
    return 2.0 ** math.ceil(math.log2(x))


def relu_gap(z: float, lam: float) -> float:
    """|GeLU(lam z)/lam - ReLU(z)| = |z| Phi(-lam |z|)."""
    return abs(z) * float(ndtr(-lam * abs(z)))


def gate_lambda(M: float, eps: float) -> float:
    """Smallest power-of-two sharpness keeping 4 ReLU gaps at argument >= M below eps."""
    need = max(math.sqrt(2.0 * math.log(max(2.0 * M / eps, math.e))), 1.0) / M
    lam = pow2_ceil(need)
    while 4.0 * relu_gap(M, lam) > eps:
        lam *= 2.0
    return lam


# ---------------------------------------------------------------------------
# emitters


def step_units(draft: LayerDraft, pre: Form, theta: float, out: Form, lam: float = DEFAULT_LAMBDA):
    """``out += I[u >= theta]`` for integer-valued ``u = pre . x``.

    ``I = ReLU(2(u - theta) + 3/2) - ReLU(2(u - theta) + 1/2)``; all ReLU
    arguments are half-integers, so the GeLU gap is below ``Phi(-lam / 2)``.
    """
    pre2 = {k: 2.0 * v for k, v in pre.items()}
    relu(draft, pre2, -2.0 * theta + 1.5, out, lam)
    relu(draft, pre2, -2.0 * theta + 0.5, {k: -v for k, v in out.items()}, lam)


def floor_units(draft: LayerDraft, pre: Form, n: int, q: int, out: Form, lam: float = DEFAULT_LAMBDA):
    """``out += floor(u / n)`` for integer ``u`` in ``[0, (q + 1) n)``."""
    for j in range(1, q + 1):
        step_units(draft, pre, j * n, out, lam)


def mod_units(draft: LayerDraft, pre: Form, n: int, q: int, out: str, quotient: str | None = None,
              lam: float = DEFAULT_LAMBDA):
    """``out = u - n floor(u / n)``; optionally also ``quotient = floor(u / n)``."""
    identity(draft, pre, {out: 1.0})
    target = {out: -float(n)}
    if quotient is not None:
        target[quotient] = 1.0
    if q == 0 and quotient is not None:
        draft.declare(quotient)
    floor_units(draft, pre, n, q, target, lam)


def product_params(M: float, eps: float) -> tuple[float, float]:
    """(delta, c) for the 4-unit product: error <= (2/3) delta^2 M^4 <= eps."""
    delta = pow2_floor(math.sqrt(eps / M ** 4))
    return delta, math.sqrt(math.pi / 2.0) / (4.0 * delta * delta)


def product_units(draft: LayerDraft, a: Form, b: Form, out: Form, M: float, eps: float):
    """``out += a * b`` with 4 hidden units.

    Uses ``GeLU(x) + GeLU(-x) = sqrt(2/pi) x^2 + O(x^4)`` on ``x = delta (a +/- b)``.
    """
    delta, c = product_params(M, eps)
    plus: dict = {}
    minus: dict = {}
    for k, v in a.items():
        plus[k] = plus.get(k, 0.0) + v
        minus[k] = minus.get(k, 0.0) + v
    for k, v in b.items():
        plus[k] = plus.get(k, 0.0) + v
        minus[k] = minus.get(k, 0.0) - v
    for form, sign in ((plus, 1.0), (minus, -1.0)):
        for s in (1.0, -1.0):
            draft.unit({k: s * delta * v for k, v in form.items()}, 0.0,
                       {k: sign * c * v for k, v in out.items()})
    return delta, c


def gate_units(draft: LayerDraft, xs: Sequence[Form], t: Form, outs: Sequence[Form], M: float, alpha: float,
               lam: float):
    """``outs[i] += xs[i]`` if ``t >= alpha`` and ``+= 0`` if ``t <= -alpha``.

    ``ReLU(x + P) - ReLU(P)`` with ``P = (2M / alpha) t``; d + 1 hidden units.
    """
    scale = 2.0 * M / alpha
    p = {k: scale * v for k, v in t.items()}
    shared: dict = {}
    for x, out in zip(xs, outs):
        pre = dict(p)
        for k, v in x.items():
            pre[k] = pre.get(k, 0.0) + v
        relu(draft, pre, 0.0, out, lam)
        for k, v in out.items():
            shared[k] = shared.get(k, 0.0) - v
    relu(draft, p, 0.0, shared, lam)


def select_units(draft: LayerDraft, xs: Sequence[Form], ys: Sequence[Form], t: Form, outs: Sequence[Form],
                 M: float, alpha: float, eps: float):
    """``outs[i] += xs[i] if t >= alpha else ys[i]`` (t <= -alpha); 2d + 2 hidden units."""
    lam = gate_lambda(M, eps)
    gate_units(draft, xs, t, outs, M, alpha, lam)
    gate_units(draft, ys, {k: -v for k, v in t.items()}, outs, M, alpha, lam)
    return lam


def snap_units(draft: LayerDraft, v: Form, out: Form, lam: float = DEFAULT_LAMBDA):
    """Re-binarise a near-Boolean value: ``ReLU(2v - 1/2) - ReLU(2v - 3/2)``."""
    v2 = {k: 2.0 * c for k, c in v.items()}
    relu(draft, v2, -0.5, out, lam)
    relu(draft, v2, -1.5, {k: -c for k, c in out.items()}, lam)


def and_units(draft: LayerDraft, terms: Sequence[Form], out: Form, lam: float = DEFAULT_LAMBDA):
    """k-ary AND on Boolean terms: ``ReLU(sum - (k - 1))``."""
    pre: dict = {}
    for term in terms:
        for k, v in term.items():
            pre[k] = pre.get(k, 0.0) + v
    pre["one"] = pre.get("one", 0.0) - (len(terms) - 1)
    relu(draft, pre, 0.0, out, lam)


def or_units(draft: LayerDraft, terms: Sequence[Form], out: Form, lam: float = DEFAULT_LAMBDA):
    """k-ary OR on Boolean terms: ``1 - ReLU(1 - sum)``."""
    pre: dict = {"one": 1.0}
    for term in terms:
        for k, v in term.items():
            pre[k] = pre.get(k, 0.0) - v
    constant(draft, 1.0, out)
    relu(draft, pre, 0.0, {k: -v for k, v in out.items()}, lam)


def xor_units(draft: LayerDraft, x: Form, y: Form, out: Form, eps: float):
    """XOR of two near-Boolean values as ``(x - y)^2`` through the product unit."""
    d = dict(x)
    for k, v in y.items():
        d[k] = d.get(k, 0.0) - v
    return product_units(draft, d, d, out, 1.0, eps)


def self_select_head(draft: LayerDraft, v: Sequence[Form], out: Sequence[str], logit: float = SELF_LOGIT):
    """A head that attends to its own position: logit ``B i j`` peaks at ``j = i``."""
    draft.head([{"pos": logit}], [{"pos": 1.0}], v, out)


# ---------------------------------------------------------------------------
# builders


def build_product_unit(M: float, eps: float) -> GadgetBlock:
    if M < 1 or not 0 < eps < 1:
        raise DomainError("product unit needs M >= 1 and 0 < eps < 1")
    layout = Layout(["a", "b", "pos", "one"])
    draft = layout.draft()
    delta, c = product_units(draft, {"a": 1.0}, {"b": 1.0}, {"f": 1.0}, M, eps)
    layer = draft.finish()
    return _finish_block("PRODUCT", layout, 4, [layer], ["f"], eps, lipschitz=2.0 * M,
                         weight_bound=math.sqrt(math.pi / 2.0) * M ** 4 / eps, lemma="multiplication",
                         meta={"M": M, "delta": delta, "c": c, "error_bound": (2.0 / 3.0) * delta ** 2 * M ** 4,
                               "weight_bound_formula": "sqrt(pi/2) M^4 / eps"})


def build_relu_unit(d: int = 1, lam: float = DEFAULT_LAMBDA) -> GadgetBlock:
    """Channel-wise ReLU via ``GeLU(lam z) / lam``; error ``<= 0.17 / lam`` everywhere."""
    names = bits("x", d)
    layout = Layout(names + ["pos", "one"])
    draft = layout.draft()
    for k in range(d):
        relu(draft, {f"x{k}": 1.0}, 0.0, {f"r{k}": 1.0}, lam)
    layer = draft.finish()
    return _finish_block("RELU", layout, d + 2, [layer], bits("r", d), 0.17 / lam, lipschitz=1.1,
                         weight_bound=lam, lemma="relu", meta={"lambda": lam})


def build_selector_unit(d: int, M: float, alpha: float, eps: float) -> GadgetBlock:
    if d < 1 or alpha <= 0 or eps <= 0 or M <= 0:
        raise DomainError("selector needs d >= 1 and positive M, alpha, eps")
    layout = Layout(bits("x", d) + bits("y", d) + ["t", "pos", "one"])
    draft = layout.draft()
    lam = select_units(draft, [{f"x{k}": 1.0} for k in range(d)], [{f"y{k}": 1.0} for k in range(d)],
                       {"t": 1.0}, [{f"o{k}": 1.0} for k in range(d)], M, alpha, eps)
    layer = draft.finish()
    return _finish_block("SELECT", layout, 2 * d + 3, [layer], bits("o", d), eps, lipschitz=1.0,
                         weight_bound=(2.0 * M / alpha) * (8.0 / eps + 2.0), lemma="selection",
                         meta={"M": M, "alpha": alpha, "lambda": lam,
                               "weight_bound_formula": "(2M/alpha)(8/eps + 2)"})


def _int_block(kind: str, n: int, q: int | None, eps: float):
    if n < 1:
        raise DomainError("n must be a positive integer")
    q = n if q is None else q
    layout = Layout(["i", "pos", "one"])
    draft = layout.draft()
    if kind == "FLOORDIV":
        floor_units(draft, {"i": 1.0}, n, q, {"floor": 1.0})
        if q == 0:
            draft.declare("floor")
        out = "floor"
    else:
        mod_units(draft, {"i": 1.0}, n, q, "mod")
        out = "mod"
    layer = draft.finish()
    lemma = "modulus"
    return _finish_block(kind, layout, 3, [layer], [out], eps, lipschitz=float(n + 1),
                         weight_bound=2.0 * DEFAULT_LAMBDA * n * (q + 1), lemma=lemma,
                         meta={"n": n, "domain": (0, (q + 1) * n - 1), "hidden": layer.ffn.hidden,
                               "weight_bound_formula": "2 lambda n (q + 1)"})


def build_floor_div_unit(n: int, q: int | None = None, eps: float = 1e-6) -> GadgetBlock:
    """floor(i / n) for integers i in [0, (q + 1) n); default q = n covers [1, n^2]."""
    return _int_block("FLOORDIV", n, q, eps)


def build_mod_unit(n: int, q: int | None = None, eps: float = 1e-6) -> GadgetBlock:
    return _int_block("MOD", n, q, eps)


CONST_KINDS = ("CONST_AND", "CONST_OR", "CONST_XOR", "NOT", "SHL", "SHR")


def _const_value_forms(kind: str, w: int, c) -> list[dict]:
    forms = []
    if kind in ("SHL", "SHR"):
        shift = int(c)
        if not 0 <= shift < w:
            raise DomainError(f"shift {shift} outside [0, {w})")
        for j in range(w):
            src = j - shift if kind == "SHL" else j + shift
            forms.append({f"x{src}": 1.0} if 0 <= src < w else {})
        return forms
    if kind == "NOT":
        return [{f"x{j}": -1.0, "one": 1.0} for j in range(w)]
    cb = const_bits(c, w)
    for j, bit in enumerate(cb):
        if kind == "CONST_AND":
            forms.append({f"x{j}": 1.0} if bit else {})
        elif kind == "CONST_OR":
            forms.append({"one": 1.0} if bit else {f"x{j}": 1.0})
        else:
            forms.append({f"x{j}": -1.0, "one": 1.0} if bit else {f"x{j}": 1.0})
    return forms


def const_bits(c, w: int) -> list[int]:
    """Accept an int (bit k = LSB k) or an explicit 0/1 sequence of length w."""
    if isinstance(c, (int, np.integer)):
        if not 0 <= int(c) < (1 << w):
            raise DomainError(f"constant {c} does not fit in {w} bits")
        return [(int(c) >> k) & 1 for k in range(w)]
    out = [int(b) for b in c]
    if len(out) != w or any(b not in (0, 1) for b in out):
        raise DomainError(f"constant must be {w} bits in {{0, 1}}")
    return out


def build_const_bool_layer(kind: str, w: int, c=0) -> GadgetBlock:
    """Single attention layer; the head attends to its own position and the value map does the work."""
    kind = str(kind.value if isinstance(kind, GadgetKind) else kind)
    if kind not in CONST_KINDS:
        raise DomainError(f"{kind} is not a constant Boolean gadget")
    layout = Layout(bits("x", w) + ["pos", "one"])
    draft = layout.draft()
    self_select_head(draft, _const_value_forms(kind, w, c), bits("o", w))
    layer = draft.finish()
    lemma = {"CONST_AND": "constant_and_variable", "CONST_OR": "constant_or_variable",
             "CONST_XOR": "constant_xor_variable", "NOT": "not_variable",
             "SHL": "constant_left_shift", "SHR": "constant_right_shift"}[kind]
    return _finish_block(kind, layout, w + 2, [layer], bits("o", w), 1e-9, lipschitz=1.0,
                         weight_bound=SELF_LOGIT, lemma=lemma, meta={"w": w, "c": c})


BINARY_KINDS = ("VAR_AND", "VAR_OR", "VAR_XOR")


def build_binary_bool_layer(kind: str, w: int, eps: float = 0.025) -> GadgetBlock:
    """Bitwise op on operand groups ``x``, ``y``: a self-attending head forms
    ``x + y`` (AND/OR) or ``x - y`` (XOR), then the FFN applies the nonlinearity."""
    kind = str(kind.value if isinstance(kind, GadgetKind) else kind)
    if kind not in BINARY_KINDS:
        raise DomainError(f"{kind} is not a binary Boolean gadget")
    layout = Layout(bits("x", w) + bits("y", w) + ["pos", "one"])
    draft = layout.draft()
    sign = -1.0 if kind == "VAR_XOR" else 1.0
    self_select_head(draft, [{f"x{j}": 1.0, f"y{j}": sign} for j in range(w)], bits("s", w))
    for j in range(w):
        s = {f"s{j}": 1.0}
        out = {f"o{j}": 1.0}
        if kind == "VAR_AND":
            relu(draft, {f"s{j}": 1.0, "one": -1.0}, 0.0, out)
        elif kind == "VAR_OR":
            or_units(draft, [s], out)
        else:
            product_units(draft, s, s, out, 1.0, eps)
    layer = draft.finish()
    lemma = {"VAR_AND": "variable_and_variable", "VAR_OR": "variable_or_variable",
             "VAR_XOR": "variable_xor_variable"}[kind]
    budget = eps if kind == "VAR_XOR" else 1e-6
    bound = math.sqrt(math.pi / 2.0) / eps if kind == "VAR_XOR" else max(SELF_LOGIT, DEFAULT_LAMBDA)
    return _finish_block(kind, layout, 2 * w + 2, [layer], bits("o", w), budget, lipschitz=2.0,
                         weight_bound=max(bound, SELF_LOGIT), lemma=lemma, meta={"w": w})


def build_fanin_gate(kind: str, k: int) -> GadgetBlock:
    kind = str(kind.value if isinstance(kind, GadgetKind) else kind)
    if kind not in ("FANIN_AND", "FANIN_OR"):
        raise DomainError(f"{kind} is not a fan-in gate")
    if k < 0:
        raise DomainError("fan-in must be >= 0")
    layout = Layout(bits("x", k) + ["pos", "one"])
    draft = layout.draft()
    terms = [{f"x{j}": 1.0} for j in range(k)]
    (and_units if kind == "FANIN_AND" else or_units)(draft, terms, {"o": 1.0})
    layer = draft.finish()
    return _finish_block(kind, layout, k + 2, [layer], ["o"], 1e-6, lipschitz=float(max(k, 1)),
                         weight_bound=DEFAULT_LAMBDA * max(k, 1), lemma="circuit_gate", meta={"k": k})


def pipeline_error_bound(blocks: Sequence[GadgetBlock]) -> float:
    """End-to-end error bound for gadgets applied in sequence.

    Block i contributes its own ``eps_budget`` amplified by the Lipschitz
    factors of every block after it.
    """
    total = 0.0
    for i, block in enumerate(blocks):
        gain = math.prod(b.lipschitz for b in blocks[i + 1:])
        total += block.eps_budget * gain
    return total


def check_layers(layers: Sequence[LayerSpec]) -> None:
    for a, b in zip(layers, layers[1:]):
        if a.d_out != b.d_in:
            raise CompileError("layer schedule does not chain")
