import math

import pytest

from tmfa.optimizer import optimize_modulation, tune_equiripple
from tmfa.synth import FilterSpec, chebyshev_prototype, realize_ladder
from tmfa.system import Modulation, build_model

DESIGN_POINT = (75e6, 0.09, math.radians(56.0))


@pytest.fixture(scope="session")
def spec():
    return FilterSpec()


@pytest.fixture(scope="session")
def closed_form(spec):
    return realize_ladder(chebyshev_prototype(spec), spec)


@pytest.fixture(scope="session")
def tuned(spec, closed_form):
    """Default ladder tuned at 50 ohm (finite unloaded Q)."""
    return tune_equiripple(closed_form, spec)


@pytest.fixture(scope="session")
def lossless_tuned(spec):
    lad = realize_ladder(chebyshev_prototype(spec), spec, q_u=math.inf)
    return tune_equiripple(lad, spec)


@pytest.fixture(scope="session")
def model():
    return build_model()


@pytest.fixture(scope="session")
def optimum(model):
    return optimize_modulation(model, model.spec.f0)


@pytest.fixture(scope="session")
def optimum_modulation(optimum):
    return Modulation(*optimum.x)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str, seconds: float | None = None):
        timing = "" if seconds is None else f" [{seconds:.2f} s]"
        line = f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}: {detail}{timing}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
        terminalreporter.write_line(line)
