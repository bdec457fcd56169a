"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 validation error (bad spec, bad
file), 3 low-margin output or verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .compile.circuit import compile_circuit, run_circuit_batch
from .compile.lcg import DEFAULT_MAX_MODULUS, build_lcg_program
from .compile.mt import build_mt_program, decode_tape, encode_tape
from .compile.specs import CircuitNetlist, LcgSpec, MtSpec, SpecError, parse_spec_text
from .errors import CompileError, DecodeError, DomainError, LowMarginError, PreconditionError, StructuralError
from .kernel import EXACT, PrecisionPolicy, generate
from .oracles import eval_circuit, lcg_stream
from .serialize import atomic_write, load_program, save_program
from .stats.heatmap import heatmap_export
from .stats.nist import TESTS, BitStream, run_suite
from .tape import ARROW, Tape, read_tape, tape_from_text, tape_to_text

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_FAIL = 0, 1, 2, 3

BITSTREAM_HELP = """\
Input files for stats/heatmap may be:
  * a tape (one token per line, '=>' separators): only the emitted y words
    are used, each expanded least-significant bit first;
  * a text file of '0'/'1' characters (whitespace ignored);
  * a text file of decimal words, one per line ('#' lines ignored), expanded
    least-significant bit first;
  * anything else is read as raw bytes, each byte least-significant bit first.
Word width defaults to the smallest of 8/16/32/64 bits that holds every
number in the file; override it with --word-bits.
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    spec: Path | None = None
    inputs: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    steps: int = 0
    policy: PrecisionPolicy = EXACT
    alpha: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.steps < 0:
            raise UsageError("--steps must be >= 0")
        if not 0 < self.alpha < 1:
            raise UsageError("--alpha must lie in (0, 1)")
        paths = [Path(p).resolve() for p in self.inputs + self.outputs if p is not None]
        if len(set(paths)) != len(paths):
            raise UsageError("input and output paths must be distinct")


def _policy(bits):
    if bits is None:
        return EXACT
    if not 4 <= bits <= 52:
        raise UsageError("--mantissa-bits must lie in [4, 52]")
    return PrecisionPolicy.quantized(bits)


def _read_spec(path, kind=None):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc.strerror}") from None
    try:
        return parse_spec_text(text, kind)
    except SpecError as exc:
        raise SpecError(f"{path}:{exc.line or 1}: {str(exc).split(': ', 1)[-1]}", None) from None


def _compile(spec, args):
    if isinstance(spec, LcgSpec):
        return build_lcg_program(spec, max_modulus=args.max_modulus)
    if isinstance(spec, MtSpec):
        return build_mt_program(spec, max_outputs=args.max_outputs)
    return compile_circuit(spec)


# ---------------------------------------------------------------------------
# commands


def cmd_compile(args) -> int:
    RunConfig("compile", inputs=[args.spec], outputs=[args.out])
    spec = _read_spec(args.spec, args.kind)
    program = _compile(spec, args)
    save_program(program, args.out)
    summary = {"kind": program.kind, "layers": len(program.layers), "heads": program.head_counts(),
               "widths": [d for _, d in program.schedule], "hidden": program.hidden_widths(),
               "max_abs_weight": program.max_abs_weight(), "out": str(args.out)}
    print(json.dumps(summary))
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = RunConfig("generate", inputs=[args.program, args.prompt], outputs=[args.out] if args.out else [],
                    steps=args.steps, policy=_policy(args.mantissa_bits))
    program = load_program(args.program)
    prompt = read_tape(args.prompt)
    tape = generate(program, prompt, cfg.steps, cfg.policy)
    text = tape_to_text(tape)
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _first_divergence(got, want):
    for i, (a, b) in enumerate(zip(got, want)):
        if a != b:
            return i
    return None


def cmd_verify(args) -> int:
    cfg = RunConfig("verify", inputs=[args.program, args.spec], steps=args.steps,
                    policy=_policy(args.mantissa_bits), seed=args.seed)
    program = load_program(args.program)
    spec = _read_spec(args.spec)
    expected_kind = {LcgSpec: "lcg", MtSpec: "mt", CircuitNetlist: "circuit"}[type(spec)]
    if program.kind != expected_kind:
        raise UsageError(f"program kind {program.kind!r} does not match spec kind {expected_kind!r}")
    report = {"kind": expected_kind, "steps": cfg.steps}
    offset = 0
    try:
        if isinstance(spec, CircuitNetlist):
            rng = np.random.default_rng(cfg.seed)
            rows = rng.integers(0, 2, size=(cfg.steps, len(spec.inputs)))
            got = run_circuit_batch(program, rows).tolist() if cfg.steps else []
            want = [eval_circuit(spec, dict(zip(spec.inputs, r))) for r in rows.tolist()]
            div = _first_divergence(got, want)
            report["checked"] = len(want)
            index = div
        else:
            if isinstance(spec, LcgSpec):
                prompt = Tape([spec.x0])
                want = [spec.x0] + lcg_stream(spec, cfg.steps)
            else:
                prompt = encode_tape(spec, 0)
                blocks = -(-cfg.steps // (spec.n + 2))
                want = list(encode_tape(spec, blocks))[: len(prompt) + cfg.steps]
            offset = len(prompt) + 1
            tape = generate(program, prompt, cfg.steps, cfg.policy)
            got = list(tape)
            div = _first_divergence(got, want)
            index = None if div is None else div + 1
            report["checked"] = cfg.steps
    except LowMarginError as exc:
        # circuits report the failing input row; tapes the 1-based token position
        report.update(status="low-margin", error=str(exc), first_divergence=offset + exc.step)
        print(json.dumps(report))
        return EXIT_FAIL
    if div is None:
        report["status"] = "match"
        print(json.dumps(report))
        return EXIT_OK
    report.update(status="mismatch", first_divergence=index,
                  got=_tok(got[div]), expected=_tok(want[div]))
    print(json.dumps(report))
    return EXIT_FAIL


def _tok(t):
    return "=>" if t is ARROW else t


def load_bits(path, word_bits: int | None = None) -> BitStream:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        return BitStream.from_bytes(raw)
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.strip().startswith("#")]
    if not lines:
        raise DomainError(f"{path}: no data")
    if any(ln == "=>" for ln in lines):
        tape = tape_from_text(text)
        _, ys = decode_tape(tape, partial=True)
        if not ys:
            raise DomainError(f"{path}: tape contains no emitted words")
        numbers = [t for t in tape if t is not ARROW]
        return BitStream.from_words(ys, word_bits or _word_width(numbers))
    if all(set(ln) <= {"0", "1"} for ln in lines):
        return BitStream.from_text("".join(lines))
    try:
        words = [int(ln, 10) for ln in lines]
    except ValueError:
        return BitStream.from_bytes(raw)
    return BitStream.from_words(words, word_bits or _word_width(words))


def _word_width(numbers) -> int:
    top = max((int(x).bit_length() for x in numbers), default=1)
    for w in (8, 16, 32, 64):
        if top <= w:
            return w
    return top


def cmd_stats(args) -> int:
    cfg = RunConfig("stats", inputs=[args.input], outputs=[args.out] if args.out else [], alpha=args.alpha)
    tests = None
    if args.tests:
        tests = [t.strip() for t in args.tests.split(",") if t.strip()]
        unknown = [t for t in tests if t not in TESTS]
        if unknown:
            raise UsageError(f"unknown tests {unknown}; choose from {', '.join(TESTS)}")
    stream = load_bits(args.input, args.word_bits)
    reports = run_suite(stream, cfg.alpha, tests, block_size=args.block_size, serial_m=args.serial_m,
                        apen_m=args.apen_m)
    doc = {"bits": len(stream), "alpha": cfg.alpha,
           "parameter_defaults": "block_frequency M=128, serial m=2, approximate_entropy m=2 "
                                 "(package defaults, not taken from any published run)",
           "tests": [r.to_json() for r in reports]}
    text = json.dumps(doc, indent=2) + "\n"
    if args.out:
        atomic_write(args.out, text)
    for r in reports:
        status = "skip" if r.skipped else ("pass" if r.passed else "FAIL")
        detail = r.reason if r.skipped else f"p={r.p_value:.6g}"
        print(f"{r.name:22s} {status:5s} {detail}")
    if args.strict and any(r.passed is False for r in reports):
        return EXIT_FAIL
    return EXIT_OK


def cmd_heatmap(args) -> int:
    RunConfig("heatmap", inputs=[args.input], outputs=[args.out])
    stream = load_bits(args.input, args.word_bits)
    data = heatmap_export(stream, args.width, args.height, args.out)
    print(f"wrote {args.out}: {args.width}x{args.height} P5, {len(data)} bytes")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="prngformer", description="Compile PRNGs and circuits into transformer weights.",
                formatter_class=argparse.RawDescriptionHelpFormatter, epilog=BITSTREAM_HELP)
    p.add_argument("--seed", type=int, default=0, help="seed for any randomized corpus (default 0)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("compile", help="compile a spec file into a weight program")
    c.add_argument("--kind", choices=["lcg", "mt", "circuit"], required=True)
    c.add_argument("--spec", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--max-outputs", type=int, default=None, help="MT: outputs the program must support")
    c.add_argument("--max-modulus", type=int, default=DEFAULT_MAX_MODULUS, help="LCG: largest modulus allowed")
    c.set_defaults(func=cmd_compile)

    g = sub.add_parser("generate", help="extend a prompt tape autoregressively")
    g.add_argument("--program", required=True)
    g.add_argument("--prompt", required=True)
    g.add_argument("--steps", type=int, required=True)
    g.add_argument("--mantissa-bits", type=int, default=None, help="simulate reduced precision")
    g.add_argument("--out", default=None, help="tape file (default: stdout)")
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("verify", help="compare a program against the reference oracle")
    v.add_argument("--program", required=True)
    v.add_argument("--spec", required=True)
    v.add_argument("--steps", type=int, required=True,
                   help="tokens to generate (circuits: number of random input vectors)")
    v.add_argument("--mantissa-bits", type=int, default=None)
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("stats", help="run the randomness battery", epilog=BITSTREAM_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--alpha", type=float, default=0.01)
    s.add_argument("--tests", default=None, help=f"comma list from: {', '.join(TESTS)}")
    s.add_argument("--out", default=None, help="JSON report path")
    s.add_argument("--word-bits", type=int, default=None)
    s.add_argument("--block-size", type=int, default=128)
    s.add_argument("--serial-m", type=int, default=2)
    s.add_argument("--apen-m", type=int, default=2)
    s.add_argument("--strict", action="store_true", help="exit 3 if any test rejects")
    s.set_defaults(func=cmd_stats)

    h = sub.add_parser("heatmap", help="write the bit grid as a P5 image", epilog=BITSTREAM_HELP,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    h.add_argument("--in", dest="input", required=True)
    h.add_argument("--width", type=int, required=True)
    h.add_argument("--height", type=int, required=True)
    h.add_argument("--out", required=True)
    h.add_argument("--word-bits", type=int, default=None)
    h.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"prngformer: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LowMarginError as exc:
        print(f"prngformer: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (SpecError, CompileError, DecodeError, DomainError, StructuralError, PreconditionError,
            ValueError, OSError) as exc:
        print(f"prngformer: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
