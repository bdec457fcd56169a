"""Randomness tests and bitstream visualisation."""
from __future__ import annotations

from .heatmap import heatmap_bytes, heatmap_export
from .nist import (TESTS, BitStream, TestReport, approximate_entropy, block_frequency, cusum, longest_run,
                   monobit, run_suite, runs, serial, spectral_dft)
