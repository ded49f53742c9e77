from __future__ import annotations

import pytest

from pmu_inertia.core import BaseConvention, DisturbanceScenario, GeneratorSpec, SystemSpec
from pmu_inertia.ingestion import shipped_path

# Generator inertia constants (s) and output (MW), IEEE 39-bus table.
TABLE_I = [
    ("G30", 4.2, 270),
    ("G31", 4.329, 585),
    ("G32", 4.475, 450),
    ("G33", 3.575, 632),
    ("G34", 4.433, 608),
    ("G35", 4.35, 1000),
    ("G36", 3.771, 560),
    ("G37", 3.471, 160),
    ("G38", 3.45, 245),
    ("G39", 5.0, 650),
]
PF = 0.9


def table1_generators(pf: float = PF) -> list[GeneratorSpec]:
    return [GeneratorSpec(gid, h, mw / pf, mw) for gid, h, mw in TABLE_I]


def ieee_system(load_damping: float = 0.0) -> SystemSpec:
    return SystemSpec(60.0, 5160 / PF, PF, table1_generators(), 5160.0, load_damping)


def ieee_trip(convention=BaseConvention.POST_EVENT_TOTAL) -> DisturbanceScenario:
    return DisturbanceScenario(1.0, 160.0, 5160.0, convention, "G37")


def lone_machine(h: float, f_nominal: float = 60.0, mw: float = 5160.0, **kw) -> SystemSpec:
    return SystemSpec(f_nominal, mw / PF, PF, [GeneratorSpec("eq", h, mw / PF, mw)], mw, **kw)


@pytest.fixture
def ieee_json():
    return shipped_path("ieee39.json")


@pytest.fixture
def iran_json():
    return shipped_path("iran_event.json")


_criteria: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    for key, value in report.user_properties:
        if key == "criterion":
            _criteria.append(("PASS" if report.passed else "FAIL", value))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for status, line in _criteria:
        terminalreporter.write_line(f"{status}  {line}")
