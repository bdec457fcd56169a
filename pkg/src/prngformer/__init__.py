"""Compile PRNGs and Boolean circuits into explicit transformer weights."""
from __future__ import annotations

from .errors import (CompileError, DecodeError, DomainError, LowMarginError, PreconditionError,
                     StructuralError)
from .kernel import (EXACT, FfnWeights, HeadWeights, LayerSpec, PrecisionPolicy, Readout, WeightProgram,
                     attention_forward, embed_token, forward, generate, layer_forward, quantize, to_concat)
from .tape import ARROW, Tape

__version__ = "0.1.0"
