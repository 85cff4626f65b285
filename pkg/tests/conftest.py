"""Shared fixtures and oracles for the test suite."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# lines collected by tests/test_acceptance.py and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def read_fixture(name: str) -> list[dict[str, str]]:
    with (FIXTURES / name).open(newline="") as fh:
        return list(csv.DictReader(fh))


def central_difference(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Numerical gradient of scalar f at array x (x is perturbed in place and restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max-norm relative difference, guarded for tiny gradients."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8))


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
