"""Compilers from source descriptions to weight programs."""
from __future__ import annotations

from .circuit import compile_circuit, run_circuit, run_circuit_batch
from .lcg import build_lcg_program
from .mt import build_mt_program, changed_slots, decode_tape, encode_tape, prompt_tape
from .specs import CircuitNetlist, Gate, LcgSpec, MtSpec, parse_spec_text, spec_to_json
