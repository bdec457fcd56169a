"""Named-channel bookkeeping for hand-built concatenation-residual layers.

A ``Layout`` tracks which hidden-state column holds which named quantity.
A ``LayerDraft`` collects attention heads and FFN hidden units written in
terms of channel names, then ``finish()`` lowers them to a ``LayerSpec``
and appends the new output channels to the layout.

Linear forms are plain dicts ``{channel_name: coefficient}``.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .errors import CompileError
from .kernel import FfnWeights, HeadWeights, LayerSpec

Form = Mapping[str, float]

DEFAULT_LAMBDA = 16.0


class Layout:
    def __init__(self, names: Sequence[str]):
        self.names: list[str] = []
        self.index: dict[str, int] = {}
        for name in names:
            self.add(name)

    @classmethod
    def tokens(cls, width: int) -> "Layout":
        """The embedding layout: bits ``b0..b{w-1}``, ``pos``, ``one``, ``flag``."""
        return cls([f"b{k}" for k in range(width)] + ["pos", "one", "flag"])

    def add(self, name: str) -> int:
        if name in self.index:
            raise CompileError(f"channel {name!r} defined twice")
        self.index[name] = len(self.names)
        self.names.append(name)
        return self.index[name]

    def __contains__(self, name: str) -> bool:
        return name in self.index

    def __getitem__(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise CompileError(f"unknown channel {name!r}") from None

    def __len__(self) -> int:
        return len(self.names)

    def draft(self) -> "LayerDraft":
        return LayerDraft(self)


def bits(prefix: str, width: int) -> list[str]:
    return [f"{prefix}{k}" for k in range(width)]


class LayerDraft:
    def __init__(self, layout: Layout):
        self.layout = layout
        self.d_in = len(layout)
        self._heads: list[tuple[list, list, list, list]] = []
        self._attn_names: list[str] = []
        self._units: list[tuple[dict, float, dict]] = []
        self._ffn_names: list[str] = []
        self._ffn_seen: set[str] = set()

    # attention -----------------------------------------------------------

    def head(self, q: Sequence[Form], k: Sequence[Form], v: Sequence[Form], out: Sequence[str]):
        """Add a head whose value dimension ``i`` lands in new channel ``out[i]``."""
        if len(q) != len(k) or not q:
            raise CompileError("query and key need the same nonzero number of forms")
        if len(v) != len(out):
            raise CompileError("one output channel per value form")
        for name in out:
            if name in self.layout or name in self._attn_names:
                raise CompileError(f"channel {name!r} defined twice")
        self._heads.append((list(q), list(k), list(v), list(out)))
        self._attn_names.extend(out)

    # feed-forward -----------------------------------------------------------

    def unit(self, pre: Form, bias: float, out: Form):
        """Add one hidden unit ``h = GeLU(pre . x + bias)``; channel ``c`` gains ``out[c] * h``."""
        for name in out:
            if name not in self._ffn_seen:
                if name in self.layout or name in self._attn_names:
                    raise CompileError(f"channel {name!r} defined twice")
                self._ffn_seen.add(name)
                self._ffn_names.append(name)
        self._units.append((dict(pre), float(bias), dict(out)))

    def declare(self, name: str):
        """Reserve an FFN output channel even if no unit writes to it (it reads as 0)."""
        self.unit({}, 0.0, {name: 0.0})

    # lowering -----------------------------------------------------------------

    def _col(self, name: str, local: Mapping[str, int]) -> int:
        if name in local:
            return local[name]
        return self.layout[name]

    def _dense(self, forms: Sequence[Form], rows: int, local) -> np.ndarray:
        w = np.zeros((rows, len(forms)))
        for j, form in enumerate(forms):
            for name, coef in form.items():
                w[self._col(name, local), j] += coef
        return w

    def finish(self) -> LayerSpec:
        d_attn = len(self._attn_names)
        attn_local = {name: self.d_in + i for i, name in enumerate(self._attn_names)}
        heads = []
        for q, k, v, out in self._heads:
            w_o = np.zeros((len(out), d_attn))
            for i, name in enumerate(out):
                w_o[i, attn_local[name] - self.d_in] = 1.0
            heads.append(HeadWeights(self._dense(q, self.d_in, {}), self._dense(k, self.d_in, {}),
                                     self._dense(v, self.d_in, {}), w_o))
        if self._units:
            h_in = self.d_in + d_attn
            w1 = self._dense([u[0] for u in self._units], h_in, attn_local)
            b1 = np.array([u[1] for u in self._units])
            cols = {name: i for i, name in enumerate(self._ffn_names)}
            w2 = np.zeros((len(self._units), len(self._ffn_names)))
            for j, (_, _, out) in enumerate(self._units):
                for name, coef in out.items():
                    w2[j, cols[name]] += coef
            ffn = FfnWeights(w1, b1, w2)
        else:
            ffn = FfnWeights.empty(self.d_in + d_attn)
        for name in self._attn_names + self._ffn_names:
            self.layout.add(name)
        return LayerSpec(heads, ffn, "concat", self.d_in, len(self.layout))


# ---------------------------------------------------------------------------
# elementary unit patterns


def scaled(form: Form, s: float) -> dict:
    return {k: v * s for k, v in form.items()}


def relu(draft: LayerDraft, pre: Form, bias: float, out: Form, lam: float = DEFAULT_LAMBDA):
    """``out += ReLU(pre . x + bias)`` using ``GeLU(lam z) / lam``.

    The error is ``|z| Phi(-lam |z|)``; it vanishes for arguments bounded away from 0.
    """
    draft.unit(scaled(pre, lam), bias * lam, scaled(out, 1.0 / lam))


def identity(draft: LayerDraft, pre: Form, out: Form, bias: float = 0.0):
    """``out += pre . x + bias`` exactly, via ``GeLU(z) - GeLU(-z) = z``."""
    draft.unit(dict(pre), bias, dict(out))
    draft.unit(scaled(pre, -1.0), -bias, scaled(out, -1.0))


def constant(draft: LayerDraft, value: float, out: Form):
    identity(draft, {"one": value}, out)


def copy(draft: LayerDraft, src: str, dst: str):
    identity(draft, {src: 1.0}, {dst: 1.0})
