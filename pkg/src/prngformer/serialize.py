"""Versioned JSON format for weight programs.

Layout of a program file::

    {
      "format": "prngformer-weight-program",
      "version": 1,
      "kind": "mt",
      "width": 8,
      "schedule": [[11, 40], [40, 52], ...],        # (d_in, d_out) per layer
      "layers": [
        {"residual_mode": "concat", "d_in": 11, "d_out": 40,
         "heads": [{"w_q": M, "w_k": M, "w_v": M, "w_o": M}, ...],
         "ffn": {"w1": M, "b1": V, "w2": M}}, ...],
      "readout": {"kind": "bits", "matrix": M, "bias": V},
      "debug_channels": {"cnt": 17, ...},
      "meta": {...}
    }

A matrix ``M`` is ``{"shape": [r, c], "dense": [[...], ...]}`` or, when
mostly zero, ``{"shape": [r, c], "sparse": [[row, col, value], ...]}`` in
row-major order.  Floats are written with ``repr`` and therefore round-trip
bit-exactly.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .errors import DecodeError
from .kernel import FfnWeights, HeadWeights, LayerSpec, Readout, WeightProgram

FORMAT = "prngformer-weight-program"
VERSION = 1


def _matrix_to_json(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=np.float64)
    shape = list(a.shape)
    nz = np.argwhere(a != 0)
    if a.ndim == 2 and len(nz) * 3 < a.size:
        return {"shape": shape, "sparse": [[int(i), int(j), float(a[i, j])] for i, j in nz]}
    return {"shape": shape, "dense": a.tolist()}


def _matrix_from_json(obj, ndim: int, what: str) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in obj["shape"])
        if len(shape) != ndim:
            raise DecodeError(f"{what}: expected {ndim} dimensions, got {shape}")
        if "sparse" in obj:
            a = np.zeros(shape)
            for i, j, v in obj["sparse"]:
                a[int(i), int(j)] = float(v)
            return a
        a = np.array(obj["dense"], dtype=np.float64).reshape(shape)
        return a
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise DecodeError(f"{what}: malformed matrix ({exc})") from None


def program_to_json(program: WeightProgram) -> dict:
    layers = []
    for layer in program.layers:
        layers.append({
            "residual_mode": layer.residual_mode, "d_in": layer.d_in, "d_out": layer.d_out,
            "heads": [{k: _matrix_to_json(getattr(h, k)) for k in ("w_q", "w_k", "w_v", "w_o")}
                      for h in layer.heads],
            "ffn": {"w1": _matrix_to_json(layer.ffn.w1), "b1": layer.ffn.b1.tolist(),
                    "w2": _matrix_to_json(layer.ffn.w2)},
        })
    return {
        "format": FORMAT, "version": VERSION, "kind": program.kind, "width": program.width,
        "schedule": program.schedule, "layers": layers,
        "readout": {"kind": program.readout.kind, "matrix": _matrix_to_json(program.readout.matrix),
                    "bias": program.readout.bias.tolist()},
        "debug_channels": dict(program.debug_channels),
        "meta": _jsonable(program.meta),
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def program_from_json(data: dict) -> WeightProgram:
    if not isinstance(data, dict) or data.get("format") != FORMAT:
        raise DecodeError("not a weight-program file")
    if data.get("version") != VERSION:
        raise DecodeError(f"unsupported weight-program version {data.get('version')!r}")
    try:
        layers = []
        for idx, L in enumerate(data["layers"]):
            heads = [HeadWeights(*(_matrix_from_json(h[k], 2, f"layer {idx} {k}")
                                   for k in ("w_q", "w_k", "w_v", "w_o"))) for h in L["heads"]]
            ffn = FfnWeights(_matrix_from_json(L["ffn"]["w1"], 2, f"layer {idx} w1"),
                             np.array(L["ffn"]["b1"], dtype=np.float64),
                             _matrix_from_json(L["ffn"]["w2"], 2, f"layer {idx} w2"))
            layers.append(LayerSpec(heads, ffn, L["residual_mode"], int(L["d_in"]), int(L["d_out"])))
        r = data["readout"]
        readout = Readout(r["kind"], _matrix_from_json(r["matrix"], 2, "readout"),
                          np.array(r["bias"], dtype=np.float64))
        program = WeightProgram(layers, int(data["width"]), readout, data.get("kind", "generic"),
                                {k: int(v) for k, v in data.get("debug_channels", {}).items()},
                                data.get("meta", {}))
    except (KeyError, TypeError) as exc:
        raise DecodeError(f"weight-program file is missing field {exc}") from None
    if [list(s) for s in data.get("schedule", program.schedule)] != [list(s) for s in program.schedule]:
        raise DecodeError("stored dimension schedule disagrees with the layers")
    return program


def dumps_program(program: WeightProgram) -> str:
    return json.dumps(program_to_json(program), separators=(",", ":"))


def loads_program(text: str) -> WeightProgram:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"line {exc.lineno}: invalid JSON: {exc.msg}", exc.lineno) from None
    return program_from_json(data)


def atomic_write(path, data) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def save_program(program: WeightProgram, path) -> None:
    atomic_write(path, dumps_program(program))


def load_program(path) -> WeightProgram:
    return loads_program(Path(path).read_text())
