"""One layer, one head: x -> (a x + c) mod m."""
from __future__ import annotations

import numpy as np

from ..errors import CompileError
from ..gadgets import mod_units, self_select_head
from ..kernel import Readout, WeightProgram
from ..layout import Layout
from .specs import LcgSpec

DEFAULT_MAX_MODULUS = 256
DEFAULT_MAX_STEPS = 100_000


def build_lcg_program(spec: LcgSpec, max_modulus: int = DEFAULT_MAX_MODULUS,
                      max_steps: int = DEFAULT_MAX_STEPS) -> WeightProgram:
    """The head reads its own token and forms ``s = a x + c`` on the value path;
    the FFN reduces ``s`` modulo ``m`` (``s < m^2``, so ``m - 1`` floor steps)."""
    if spec.m > max_modulus:
        raise CompileError(f"modulus {spec.m} exceeds the configured limit of {max_modulus} "
                           f"(the modulus unit needs O(m) hidden width)")
    w = spec.w
    layout = Layout.tokens(w)
    draft = layout.draft()
    value = {f"b{k}": float(spec.a << k) for k in range(w)}
    value["one"] = float(spec.c)
    self_select_head(draft, [value], ["s"])
    mod_units(draft, {"s": 1.0}, spec.m, spec.m - 1, "r")
    layer = draft.finish()
    readout = np.zeros((len(layout), 2))
    readout[layout["r"], 0] = 1.0
    return WeightProgram(
        [layer], w, Readout("value", readout, np.zeros(2)), kind="lcg",
        debug_channels={"s": layout["s"], "r": layout["r"]},
        meta={"max_positions": max_steps, "a": spec.a, "c": spec.c, "m": spec.m,
              "hidden_width": layer.ffn.hidden})
