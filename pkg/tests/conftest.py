"""Shared fixtures: the n = 2 non-uniqueness pair at the middle of the catenoid window."""

from __future__ import annotations

import math

import pytest

from expander_entropy.expander_solver import ShootingSpec, catenoid_window, find_nonuniqueness_pair
from expander_entropy.geometry_core import RotCone

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> str:
    """Store and print one acceptance line."""
    line = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def spec2() -> ShootingSpec:
    return ShootingSpec(n=2)


@pytest.fixture(scope="session")
def window2(spec2):
    lo, hi, _ = catenoid_window(spec2)
    return lo, hi


@pytest.fixture(scope="session")
def midpoint(window2) -> float:
    return 0.5 * (window2[0] + window2[1])


@pytest.fixture(scope="session")
def all_pairs(spec2, midpoint):
    return find_nonuniqueness_pair(RotCone.double(2, midpoint), spec2)


@pytest.fixture(scope="session")
def pair(all_pairs):
    """Disk pair against the catenoid with the larger neck."""
    return all_pairs[-1]


@pytest.fixture(scope="session")
def graph_field(pair):
    from expander_entropy.normal_graph import build_graph_field

    return build_graph_field(pair)


@pytest.fixture(scope="session")
def oracle_result(pair):
    from expander_entropy.oracle import pair_oracle

    return pair_oracle(pair, rho_values=(5.0, 6.0, 8.0, 10.0, 12.0), R_values=(6.0, 8.0, 10.0, 12.0, 16.0, 20.0))


@pytest.fixture(scope="session")
def half_pi() -> float:
    return math.pi / 2


@pytest.fixture(scope="session")
def variation_grid(midpoint):
    return [midpoint + k * 1e-3 for k in range(-2, 3)]


@pytest.fixture(scope="session")
def variation_pairs(spec2, variation_grid):
    from expander_entropy.entropy import family_pairs

    return family_pairs(variation_grid, spec2)
