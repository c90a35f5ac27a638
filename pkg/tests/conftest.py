from __future__ import annotations

import numpy as np
import pytest

from cgmlab.conformal_gauss import build_cgm
from cgmlab.immersion import (catenoid, clifford_torus, ellipsoid, inverted_catenoid, neck_member,
                              round_sphere)

_CACHE: dict = {}


def cached_field(name: str, n_t: int, n_theta: int | None = None):
    """Conformal Gauss fields are deterministic; share them across tests."""
    key = (name, n_t, n_theta)
    if key not in _CACHE:
        imm = FIXTURE_FACTORIES[name]()
        _CACHE[key] = (imm, build_cgm(imm, imm.grid(n_t, n_theta)))
    return _CACHE[key]


FIXTURE_FACTORIES = {
    "round_sphere": round_sphere,
    "clifford_torus": clifford_torus,
    "catenoid": catenoid,
    "inverted_catenoid": inverted_catenoid,
    "ellipsoid": lambda: ellipsoid(2.0, 1.0, 1.0),
    "neck_0.2": lambda: neck_member(0.2),
    "neck_0.1": lambda: neck_member(0.1),
    "neck_0.05": lambda: neck_member(0.05),
}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# acceptance criteria report one line each; the summary is printed after the run
ACCEPTANCE_RESULTS: dict = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_RESULTS[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
