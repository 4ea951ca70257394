import dataclasses
import time

import numpy as np
import pytest

from tvblf import config, sim


@pytest.fixture(scope="session")
def bundled_doc():
    return config.load_bundled()


@pytest.fixture(scope="session")
def bundled(bundled_doc):
    return config.build(bundled_doc)


@pytest.fixture(scope="session")
def bundled_run(bundled):
    """The full 60 s run of the bundled configuration, shared across modules.

    Returns ``(trajectory, summary)``; the wall time is kept on the summary's
    ``wall_seconds`` attribute for the runtime criterion.
    """
    start = time.perf_counter()
    tr, summary = sim.run(bundled.sim)
    summary.wall_seconds = time.perf_counter() - start
    return tr, summary


@pytest.fixture
def short_cfg(bundled):
    return dataclasses.replace(bundled.sim, T=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


# acceptance verdicts, one line per criterion in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
