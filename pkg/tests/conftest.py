from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from prngformer.compile import build_mt_program, MtSpec
from prngformer.compile.specs import CircuitNetlist, Gate

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA


@pytest.fixture(scope="session")
def small_mt_spec() -> MtSpec:
    return MtSpec.small()


@pytest.fixture(scope="session")
def small_mt_program(small_mt_spec):
    return build_mt_program(small_mt_spec, max_outputs=256)


def random_netlist(rng: np.random.Generator, n_in: int, n_gates: int, depth: int) -> CircuitNetlist:
    """A random AND/OR/NOT netlist whose alternation depth is at most ``depth``."""
    inputs = [f"x{i}" for i in range(n_in)]
    level = {x: 0 for x in inputs}
    gates = []
    for g in range(n_gates):
        gid = f"g{g}"
        kind = rng.choice(["AND", "OR", "NOT"], p=[0.4, 0.4, 0.2])
        pool = [s for s in level if level[s] < depth or kind == "NOT"]
        if kind == "NOT":
            arg = pool[rng.integers(len(pool))]
            gates.append(Gate(gid, "NOT", [arg]))
            level[gid] = level[arg]
            continue
        k = int(rng.integers(1, min(6, len(pool)) + 1))
        args = [pool[i] for i in rng.choice(len(pool), size=k, replace=False)]
        gates.append(Gate(gid, str(kind), args))
        level[gid] = 1 + max(level[a] for a in args)
    gate_ids = [g.id for g in gates]
    n_out = int(rng.integers(1, min(8, len(gate_ids)) + 1))
    outputs = [gate_ids[i] for i in rng.choice(len(gate_ids), size=n_out, replace=False)]
    return CircuitNetlist(inputs, gates, outputs)


# one summary line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
