from __future__ import annotations

import numpy as np
import pytest

from critlab.scenario import ScenarioConfig, run_scenario

H = 0.05

SCENARIOS = {
    "disk_constant": ({"family": "disk", "params": {"r": 1.0}}, {"kind": "constant", "lambda": 1.0}),
    "ellipse_gelfand": ({"family": "ellipse", "params": {"a": 2.0, "b": 1.0}},
                        {"kind": "gelfand", "lambda": 1.0}),
    "superellipse_constant": ({"family": "superellipse", "params": {"p": 4.0}},
                              {"kind": "constant", "lambda": 1.0}),
    "superellipse_gelfand": ({"family": "superellipse", "params": {"p": 4.0}},
                             {"kind": "gelfand", "lambda": 1.0}),
    "stadium_constant": ({"family": "stadium", "params": {}}, {"kind": "constant", "lambda": 1.0}),
    "mixed_constant": ({"family": "mixed", "params": {}}, {"kind": "constant", "lambda": 1.0}),
    "dumbbell_0.9": ({"family": "dumbbell", "params": {"d": 1.1, "w": 0.9}},
                     {"kind": "constant", "lambda": 1.0}),
    "dumbbell_0.6": ({"family": "dumbbell", "params": {"d": 1.1, "w": 0.6}},
                     {"kind": "constant", "lambda": 1.0}),
    "dumbbell_0.35": ({"family": "dumbbell", "params": {"d": 1.1, "w": 0.35}},
                      {"kind": "constant", "lambda": 1.0}),
}
CONVEX = ("disk_constant", "ellipse_gelfand", "superellipse_constant", "superellipse_gelfand",
          "stadium_constant", "mixed_constant")

_CACHE: dict = {}
ACCEPTANCE_LINES: list[str] = []


def scenario_config(name: str, **kw) -> ScenarioConfig:
    dom, nl = SCENARIOS[name]
    return ScenarioConfig({"family": dom["family"], "params": dict(dom["params"])}, dict(nl),
                          mesh_h=kw.pop("mesh_h", H), name=name, **kw)


@pytest.fixture(scope="session")
def scenario():
    """Full in-memory scenario runs, cached for the whole session."""

    def get(name: str):
        if name not in _CACHE:
            _CACHE[name] = run_scenario(scenario_config(name), write=False)
        return _CACHE[name]

    return get


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
