import copy
import warnings

import numpy as np
import pytest

from olfc import simulate
from olfc.scenario import ScenarioWarning, load_document, parse_scenario


def build(name="case6_nominal", mutate=None, strict=False):
    """Parse a bundled scenario after optionally editing its document in place."""
    doc, label = load_document(name)
    doc = copy.deepcopy(doc)
    if mutate is not None:
        mutate(doc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScenarioWarning)
        return parse_scenario(doc, label, strict)


@pytest.fixture
def doc_nominal():
    doc, _ = load_document("case6_nominal")
    return copy.deepcopy(doc)


@pytest.fixture(scope="session")
def nominal():
    return build("case6_nominal")


@pytest.fixture(scope="session")
def nominal_run(nominal):
    return simulate(nominal)


@pytest.fixture(scope="session")
def open_loop_run():
    return simulate(build("case6_open_loop"))


@pytest.fixture(scope="session")
def unstable_run():
    return simulate(build("case6_unstable"))


@pytest.fixture(scope="session")
def unit_gain_run():
    def gain_one(doc):
        for o in doc["controllers"]["overrides"]:
            o["gain"] = 1.0
    return simulate(build("case6_unstable", gain_one))


@pytest.fixture(scope="session")
def alt_reading_unstable_run():
    return simulate(build("case6_droop_reading_unstable"))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_VERDICTS = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line: ``verdict(n, ok, detail)`` then assert ``ok``."""
    store = request.config.stash.setdefault(_VERDICTS, {})

    def record(number, title, ok, detail):
        store[number] = (title, bool(ok), detail)
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_VERDICTS, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        title, ok, detail = store[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
