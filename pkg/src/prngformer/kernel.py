"""Decoder-only transformer forward pass over explicit weight programs.

Layer semantics (row vectors, causal attention):

    a   = sum_h softmax(x W_q^h (X W_k^h)^T / sqrt(d_k)) X W_v^h W_o^h
    add:     h = x + a,   out = h + FFN(h)
    concat:  h = [x, a],  out = [h, FFN(h)]
    FFN(h) = GeLU(h W_1 + b_1) W_2

GeLU is the exact Gaussian-CDF form ``x * Phi(x)``.  Under a quantized
``PrecisionPolicy`` every weight is rounded to the policy's mantissa width and
every matrix product and nonlinearity output is rounded again during the pass.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
from scipy.special import erfc

from .errors import DomainError, LowMarginError, StructuralError
from .tape import ARROW, Tape

RESIDUAL_MODES = ("add", "concat")
READOUT_KINDS = ("bits", "value")
DEFAULT_MARGIN = 0.25
# Logit gap used wherever attention has to single out one position.
SELECT_LOGIT = 50.0
# exp(x) underflows to exactly 0.0 below this, so such keys contribute nothing.
_EXP_FLOOR = -746.0


# ---------------------------------------------------------------------------
# numerics


def round_mantissa(x, mantissa_bits: int):
    """Round to the nearest float carrying ``mantissa_bits`` fraction bits (ties to even)."""
    x = np.asarray(x, dtype=np.float64)
    if mantissa_bits >= 52:
        return x.copy()
    m, e = np.frexp(x)
    scale = float(2 ** (mantissa_bits + 1))
    return np.ldexp(np.round(m * scale) / scale, e)


def gelu(x):
    x = np.asarray(x, dtype=np.float64)
    return x * 0.5 * erfc(-x / math.sqrt(2.0))


@dataclass(frozen=True)
class PrecisionPolicy:
    mode: str = "exact_double"
    mantissa_bits: int = 52

    def __post_init__(self):
        if self.mode not in ("exact_double", "quantized"):
            raise ValueError(f"unknown precision mode {self.mode!r}")
        if not 4 <= self.mantissa_bits <= 52:
            raise ValueError("mantissa_bits must lie in [4, 52]")

    @classmethod
    def quantized(cls, mantissa_bits: int) -> "PrecisionPolicy":
        return cls("quantized", mantissa_bits)

    @property
    def is_quantized(self) -> bool:
        return self.mode == "quantized"

    def round(self, x):
        if self.mode == "quantized":
            return round_mantissa(x, self.mantissa_bits)
        return x


EXACT = PrecisionPolicy()


# ---------------------------------------------------------------------------
# weight containers


def _frozen(a, ndim: int, what: str) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    if arr.ndim != ndim:
        raise StructuralError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise StructuralError(f"{what} has non-finite entries")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class HeadWeights:
    """One attention head. ``w_v`` may be wider or narrower than the query/key width."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    def __post_init__(self):
        for name in ("w_q", "w_k", "w_v", "w_o"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 2, name))
        d_in = self.w_q.shape[0]
        if self.w_k.shape != self.w_q.shape:
            raise StructuralError(f"w_k shape {self.w_k.shape} != w_q shape {self.w_q.shape}")
        if self.w_q.shape[1] < 1:
            raise StructuralError("query/key width must be at least 1")
        if self.w_v.shape[0] != d_in:
            raise StructuralError(f"w_v has {self.w_v.shape[0]} rows, expected {d_in}")
        if self.w_o.shape[0] != self.w_v.shape[1]:
            raise StructuralError(f"w_o has {self.w_o.shape[0]} rows, expected {self.w_v.shape[1]}")

    @property
    def d_in(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_k(self) -> int:
        return self.w_q.shape[1]

    @property
    def d_v(self) -> int:
        return self.w_v.shape[1]

    @property
    def d_out(self) -> int:
        return self.w_o.shape[1]


@dataclass(frozen=True, eq=False)
class FfnWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w1", _frozen(self.w1, 2, "w1"))
        object.__setattr__(self, "b1", _frozen(self.b1, 1, "b1"))
        object.__setattr__(self, "w2", _frozen(self.w2, 2, "w2"))
        hidden = self.w1.shape[1]
        if hidden < 1:
            raise StructuralError("FFN hidden width must be at least 1")
        if self.b1.shape != (hidden,):
            raise StructuralError(f"b1 shape {self.b1.shape} != ({hidden},)")
        if self.w2.shape[0] != hidden:
            raise StructuralError(f"w2 has {self.w2.shape[0]} rows, expected {hidden}")

    @classmethod
    def empty(cls, d_in: int) -> "FfnWeights":
        """A single dead hidden unit with no output channels."""
        return cls(np.zeros((d_in, 1)), np.zeros(1), np.zeros((1, 0)))

    @property
    def d_in(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def d_out(self) -> int:
        return self.w2.shape[1]


class _Lin:
    """Right-multiplication by a fixed matrix, skipping all-zero rows."""

    __slots__ = ("rows", "mat", "dense")

    def __init__(self, w: np.ndarray):
        rows = np.flatnonzero(np.any(w != 0.0, axis=1))
        self.dense = len(rows) == w.shape[0]
        self.rows = rows
        self.mat = np.ascontiguousarray(w if self.dense else w[rows])

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.dense:
            return x @ self.mat
        return x[..., self.rows] @ self.mat


class _HeadPlan:
    __slots__ = ("q", "k", "v", "o", "scale")

    def __init__(self, head: HeadWeights):
        self.q, self.k, self.v, self.o = _Lin(head.w_q), _Lin(head.w_k), _Lin(head.w_v), _Lin(head.w_o)
        self.scale = 1.0 / math.sqrt(head.d_k)


@dataclass(frozen=True, eq=False)
class LayerSpec:
    heads: tuple
    ffn: FfnWeights
    residual_mode: str
    d_in: int
    d_out: int

    def __post_init__(self):
        object.__setattr__(self, "heads", tuple(self.heads))
        if self.residual_mode not in RESIDUAL_MODES:
            raise StructuralError(f"unknown residual mode {self.residual_mode!r}")
        d_attn = None
        for h in self.heads:
            if h.d_in != self.d_in:
                raise StructuralError(f"head reads {h.d_in} channels, layer d_in is {self.d_in}")
            if d_attn is not None and h.d_out != d_attn:
                raise StructuralError("heads disagree on attention output width")
            d_attn = h.d_out
        d_attn = d_attn or 0
        if self.residual_mode == "add":
            if self.heads and d_attn != self.d_in:
                raise StructuralError("add mode needs attention output width == d_in")
            if self.ffn.d_in != self.d_in or self.ffn.d_out != self.d_in:
                raise StructuralError("add mode needs a d_in -> d_in FFN")
            if self.d_out != self.d_in:
                raise StructuralError("add mode keeps the width: d_out must equal d_in")
        else:
            if self.ffn.d_in != self.d_in + d_attn:
                raise StructuralError(
                    f"concat FFN reads {self.ffn.d_in} channels, expected d_in + d_attn = {self.d_in + d_attn}")
            if self.d_out != self.d_in + d_attn + self.ffn.d_out:
                raise StructuralError(
                    f"concat d_out {self.d_out} != d_in + d_attn + d_ffn = {self.d_in + d_attn + self.ffn.d_out}")

    @property
    def d_attn(self) -> int:
        return self.heads[0].d_out if self.heads else 0

    @cached_property
    def _plan(self):
        return [_HeadPlan(h) for h in self.heads], _Lin(self.ffn.w1), _Lin(self.ffn.w2)

    def weight_arrays(self):
        for h in self.heads:
            yield from (h.w_q, h.w_k, h.w_v, h.w_o)
        yield from (self.ffn.w1, self.ffn.b1, self.ffn.w2)


@dataclass(frozen=True, eq=False)
class Readout:
    """Linear map from the final hidden row to token channels.

    ``bits``: columns are the w data bits followed by the arrow flag.
    ``value``: columns are (integer token value, arrow flag); the token is the
    nearest integer, i.e. the argmax of the quadratic unembedding
    ``logit_v = 2 v r - v^2``.
    """

    kind: str
    matrix: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.kind not in READOUT_KINDS:
            raise StructuralError(f"unknown readout kind {self.kind!r}")
        object.__setattr__(self, "matrix", _frozen(self.matrix, 2, "readout matrix"))
        object.__setattr__(self, "bias", _frozen(self.bias, 1, "readout bias"))
        if self.bias.shape != (self.matrix.shape[1],):
            raise StructuralError("readout bias does not match matrix columns")
        if self.kind == "value" and self.matrix.shape[1] != 2:
            raise StructuralError("value readout has exactly two columns")


@dataclass(frozen=True, eq=False)
class WeightProgram:
    layers: tuple
    width: int
    readout: Readout
    kind: str = "generic"
    debug_channels: Mapping[str, int] = field(default_factory=dict)
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "debug_channels", dict(self.debug_channels))
        object.__setattr__(self, "meta", dict(self.meta))
        if self.width < 1:
            raise StructuralError("token width must be at least 1")
        d = self.embed_width
        for idx, layer in enumerate(self.layers):
            if layer.d_in != d:
                raise StructuralError(f"layer {idx} expects d_in={layer.d_in}, schedule provides {d}")
            d = layer.d_out
        if self.readout.matrix.shape[0] != d:
            raise StructuralError(f"readout consumes {self.readout.matrix.shape[0]} channels, final width is {d}")
        if self.readout.kind == "bits" and self.readout.matrix.shape[1] != self.width + 1:
            raise StructuralError("bit readout needs width + 1 columns")
        for name, ch in self.debug_channels.items():
            if not 0 <= ch < d:
                raise StructuralError(f"debug channel {name!r} index {ch} out of range")

    @property
    def embed_width(self) -> int:
        return self.width + 3

    @property
    def d_final(self) -> int:
        return self.layers[-1].d_out if self.layers else self.embed_width

    @property
    def schedule(self) -> list[tuple[int, int]]:
        return [(layer.d_in, layer.d_out) for layer in self.layers]

    def max_abs_weight(self) -> float:
        vals = [float(np.max(np.abs(a))) for layer in self.layers for a in layer.weight_arrays() if a.size]
        return max(vals, default=0.0)

    def head_counts(self) -> list[int]:
        return [len(layer.heads) for layer in self.layers]

    def hidden_widths(self) -> list[int]:
        return [layer.ffn.hidden for layer in self.layers]


def programs_identical(a: WeightProgram, b: WeightProgram) -> bool:
    """Bitwise equality of every weight, the schedule and the readout."""
    if a.width != b.width or a.kind != b.kind or len(a.layers) != len(b.layers):
        return False
    if a.readout.kind != b.readout.kind:
        return False
    pairs = [(a.readout.matrix, b.readout.matrix), (a.readout.bias, b.readout.bias)]
    for la, lb in zip(a.layers, b.layers):
        if (la.residual_mode, la.d_in, la.d_out, len(la.heads)) != (lb.residual_mode, lb.d_in, lb.d_out, len(lb.heads)):
            return False
        pairs.extend(zip(la.weight_arrays(), lb.weight_arrays()))
    return all(x.shape == y.shape and np.array_equal(x.view(np.uint64), y.view(np.uint64)) for x, y in pairs)


# ---------------------------------------------------------------------------
# embedding


def embed_token(token, position: int, width: int) -> np.ndarray:
    """Embedding row ``(bits LSB first, position, 1, arrow flag)`` of length ``width + 3``."""
    if position < 1:
        raise DomainError(f"position must be >= 1, got {position}")
    row = np.zeros(width + 3)
    row[width] = position
    row[width + 1] = 1.0
    if token is ARROW:
        row[width + 2] = 1.0
        return row
    value = int(token)
    if not 0 <= value < (1 << width):
        raise DomainError(f"token value {value} outside [0, 2^{width})")
    for k in range(width):
        row[k] = (value >> k) & 1
    return row


def embed_tape(tape, width: int, start: int = 1) -> np.ndarray:
    tokens = list(tape)
    out = np.zeros((len(tokens), width + 3))
    for i, tok in enumerate(tokens):
        out[i] = embed_token(tok, start + i, width)
    return out


# ---------------------------------------------------------------------------
# full (non-incremental) passes; leading batch dimensions are allowed


def _check_width(states: np.ndarray, d: int):
    if states.ndim < 2 or states.shape[-1] != d:
        raise StructuralError(f"states of shape {states.shape} do not match layer width {d}")
    if states.shape[-2] < 1:
        raise StructuralError("need at least one row")


def _softmax(logits: np.ndarray, policy: PrecisionPolicy) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    e = np.exp(logits - m)
    return policy.round(e / e.sum(axis=-1, keepdims=True))


def _causal_logits(plan: _HeadPlan, x: np.ndarray, policy: PrecisionPolicy):
    r = policy.round
    q, k = r(plan.q(x)), r(plan.k(x))
    logits = r((q @ np.swapaxes(k, -1, -2)) * plan.scale)
    t = x.shape[-2]
    mask = np.triu(np.ones((t, t), dtype=bool), 1)
    return np.where(mask, -np.inf, logits)


def attention_weights(layer: LayerSpec, head: int, states: np.ndarray, policy: PrecisionPolicy = EXACT):
    """The causal softmax matrix (T x T) of one head."""
    states = np.asarray(states, dtype=np.float64)
    _check_width(states, layer.d_in)
    plan = layer._plan[0][head]
    return _softmax(_causal_logits(plan, policy.round(states), policy), policy)


def attention_forward(layer: LayerSpec, states: np.ndarray, policy: PrecisionPolicy = EXACT) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    _check_width(states, layer.d_in)
    r = policy.round
    out = np.zeros(states.shape[:-1] + (layer.d_attn,))
    for plan in layer._plan[0]:
        p = _softmax(_causal_logits(plan, states, policy), policy)
        ctx = r(p @ r(plan.v(states)))
        out = r(out + r(plan.o(ctx)))
    return out


def _ffn(layer: LayerSpec, h: np.ndarray, policy: PrecisionPolicy) -> np.ndarray:
    _, lin1, lin2 = layer._plan
    r = policy.round
    pre = r(lin1(h) + layer.ffn.b1)
    return r(lin2(r(gelu(pre))))


def _combine(layer: LayerSpec, x: np.ndarray, a: np.ndarray, policy: PrecisionPolicy) -> np.ndarray:
    if layer.residual_mode == "concat":
        h = np.concatenate([x, a], axis=-1)
        return np.concatenate([h, _ffn(layer, h, policy)], axis=-1)
    h = policy.round(x + a) if layer.heads else x
    return policy.round(h + _ffn(layer, h, policy))


def layer_forward(layer: LayerSpec, states: np.ndarray, policy: PrecisionPolicy = EXACT) -> np.ndarray:
    states = np.asarray(states, dtype=np.float64)
    return _combine(layer, states, attention_forward(layer, states, policy), policy)


def run_layers(layers: Sequence[LayerSpec], states: np.ndarray, policy: PrecisionPolicy = EXACT) -> np.ndarray:
    x = policy.round(np.asarray(states, dtype=np.float64))
    for layer in layers:
        x = layer_forward(layer, x, policy)
    return x


def forward(program: WeightProgram, tape, policy: PrecisionPolicy = EXACT) -> np.ndarray:
    """Final hidden rows for every position of ``tape`` (a Tape, token list or embedded array)."""
    if isinstance(tape, np.ndarray):
        states = tape
    else:
        states = embed_tape(tape, program.width)
    if policy.is_quantized:
        program = quantize(program, policy)
    return run_layers(program.layers, states, policy)


def readout_values(program: WeightProgram, rows: np.ndarray, policy: PrecisionPolicy = EXACT) -> np.ndarray:
    r = policy.round
    return r(r(np.asarray(rows) @ program.readout.matrix) + program.readout.bias)


# ---------------------------------------------------------------------------
# incremental decoding


class _Buffer:
    """Append-only row store with amortised growth."""

    __slots__ = ("data", "n")

    def __init__(self, width: int, capacity: int = 256):
        self.data = np.empty((capacity, width))
        self.n = 0

    def extend(self, rows: np.ndarray):
        need = self.n + rows.shape[0]
        if need > self.data.shape[0]:
            grown = np.empty((max(need, 2 * self.data.shape[0]), self.data.shape[1]))
            grown[: self.n] = self.data[: self.n]
            self.data = grown
        self.data[self.n:need] = rows
        self.n = need

    def view(self) -> np.ndarray:
        return self.data[: self.n]


class DecodeSession:
    """Feeds tokens one chunk at a time, caching per-head keys and values.

    Rows already processed never change when later rows arrive (causal mask),
    so pushing a tape in pieces produces the same rows as one full pass.
    """

    def __init__(self, program: WeightProgram, policy: PrecisionPolicy = EXACT):
        if policy.is_quantized:
            program = quantize(program, policy)
        self.program = program
        self.policy = policy
        self.length = 0
        self._kv = [[(_Buffer(h.d_k), _Buffer(h.d_v)) for h in layer.heads] for layer in program.layers]

    def push(self, rows: np.ndarray) -> np.ndarray:
        r = self.policy.round
        x = r(np.atleast_2d(np.asarray(rows, dtype=np.float64)))
        _check_width(x, self.program.embed_width)
        past = self.length
        for layer, caches in zip(self.program.layers, self._kv):
            a = np.zeros((x.shape[0], layer.d_attn))
            for plan, (kbuf, vbuf) in zip(layer._plan[0], caches):
                q = r(plan.q(x))
                kbuf.extend(r(plan.k(x)))
                vbuf.extend(r(plan.v(x)))
                ctx = self._attend(plan, q, kbuf.view(), vbuf.view(), past)
                a = r(a + r(plan.o(ctx)))
            x = _combine(layer, x, a, self.policy)
        self.length += x.shape[0]
        return x

    def _attend(self, plan, q, keys, values, past):
        r = self.policy.round
        if q.shape[0] == 1:
            logits = r((keys @ q[0]) * plan.scale)
            m = logits.max()
            live = np.flatnonzero(logits - m > _EXP_FLOOR)
            e = np.exp(logits[live] - m)
            p = r(e / e.sum())
            return r(p @ values[live])[None, :]
        logits = r((q @ keys.T) * plan.scale)
        t_new, t_all = q.shape[0], keys.shape[0]
        mask = np.arange(t_all)[None, :] > (past + np.arange(t_new))[:, None]
        p = _softmax(np.where(mask, -np.inf, logits), self.policy)
        return r(p @ values)


def decode_readout(program: WeightProgram, values: np.ndarray, step: int = 0, margin: float = DEFAULT_MARGIN):
    """Turn one readout vector into a token, refusing low-margin channels."""
    values = np.asarray(values, dtype=np.float64)
    if program.readout.kind == "bits":
        dist = np.abs(values - 0.5)
        bad = np.flatnonzero(~(dist >= margin))
        if bad.size:
            ch = int(bad[0])
            raise LowMarginError(
                f"low-margin output at step {step}: channel {ch} = {float(values[ch])!r} is within {margin} of 0.5",
                step, ch, float(values[ch]))
        if values[-1] > 0.5:
            return ARROW
        bits = values[:-1] > 0.5
        return int(sum(1 << k for k in np.flatnonzero(bits)))
    value, flag = float(values[0]), float(values[1])
    if not abs(flag - 0.5) >= margin:
        raise LowMarginError(f"low-margin output at step {step}: arrow flag = {flag!r}", step, 1, flag)
    if flag > 0.5:
        return ARROW
    nearest = round(value) if math.isfinite(value) else None
    if nearest is None or not abs(value - nearest) <= 0.5 - margin:
        raise LowMarginError(f"low-margin output at step {step}: value {value!r} is not within "
                             f"{0.5 - margin} of an integer", step, 0, value)
    if not 0 <= nearest < (1 << program.width):
        raise LowMarginError(f"output value {nearest} at step {step} outside the token range", step, 0, value)
    return int(nearest)


def generate(program: WeightProgram, prompt, steps: int, policy: PrecisionPolicy = EXACT,
             margin: float = DEFAULT_MARGIN) -> Tape:
    """Append ``steps`` autoregressively generated tokens to ``prompt``."""
    prompt = prompt if isinstance(prompt, Tape) else Tape(prompt)
    if steps < 0:
        raise DomainError("steps must be >= 0")
    if len(prompt) == 0:
        raise DomainError("prompt must contain at least one token")
    limit = program.meta.get("max_positions")
    if limit is not None and len(prompt) + steps - 1 > limit:
        raise DomainError(f"program handles at most {limit} positions; "
                          f"prompt of {len(prompt)} + {steps} steps exceeds it")
    rows = embed_tape(prompt, program.width)
    if steps == 0:
        return prompt
    session = DecodeSession(program, policy)
    last = session.push(rows)[-1]
    tokens = list(prompt)
    for step in range(steps):
        token = decode_readout(session.program, readout_values(session.program, last, policy), step, margin)
        tokens.append(token)
        if step + 1 < steps:
            last = session.push(embed_token(token, len(tokens), program.width)[None, :])[-1]
    return Tape(tokens)


# ---------------------------------------------------------------------------
# program transforms


def quantize(program: WeightProgram, policy: PrecisionPolicy) -> WeightProgram:
    """Round every weight of ``program`` to the policy's mantissa width."""
    if not policy.is_quantized:
        raise ValueError("quantize() needs a quantized precision policy")
    r = policy.round
    layers = []
    for layer in program.layers:
        heads = [HeadWeights(r(h.w_q), r(h.w_k), r(h.w_v), r(h.w_o)) for h in layer.heads]
        ffn = FfnWeights(r(layer.ffn.w1), r(layer.ffn.b1), r(layer.ffn.w2))
        layers.append(LayerSpec(heads, ffn, layer.residual_mode, layer.d_in, layer.d_out))
    readout = Readout(program.readout.kind, r(program.readout.matrix), r(program.readout.bias))
    return WeightProgram(layers, program.width, readout, program.kind, program.debug_channels, program.meta)


def to_concat(program: WeightProgram) -> WeightProgram:
    """An equivalent program whose every layer uses the concatenation residual.

    The physical state grows by concatenation; a running projection ``P`` maps
    it back to the logical state the original layers expect.
    """
    proj = np.eye(program.embed_width)
    layers = []
    for layer in program.layers:
        d_phys = proj.shape[0]
        heads = [HeadWeights(proj @ h.w_q, proj @ h.w_k, proj @ h.w_v, h.w_o) for h in layer.heads]
        d_attn = layer.d_attn
        w1 = layer.ffn.w1
        if layer.residual_mode == "add":
            top = proj @ w1
            new_w1 = np.vstack([top, w1]) if d_attn else top
        else:
            d_log = layer.d_in
            new_w1 = np.vstack([proj @ w1[:d_log], w1[d_log:]])
        ffn = FfnWeights(new_w1, layer.ffn.b1, layer.ffn.w2)
        d_ffn = layer.ffn.d_out
        d_out = d_phys + d_attn + d_ffn
        layers.append(LayerSpec(heads, ffn, "concat", d_phys, d_out))
        if layer.residual_mode == "add":
            parts = [proj] + ([np.eye(d_attn)] if d_attn else []) + [np.eye(d_ffn)]
            proj = np.vstack(parts)
        else:
            grown = np.zeros((d_out, proj.shape[1] + d_attn + d_ffn))
            grown[:d_phys, : proj.shape[1]] = proj
            grown[d_phys:, proj.shape[1]:] = np.eye(d_attn + d_ffn)
            proj = grown
    readout = Readout(program.readout.kind, proj @ program.readout.matrix, program.readout.bias)
    return WeightProgram(layers, program.width, readout, program.kind, {}, program.meta)
