import functools

import numpy as np
import pytest

from lagrflow import families


@functools.lru_cache(maxsize=None)
def catalog_flowmap(family: str):
    """Catalog instances are immutable after construction, so share them."""
    return families.build_flowmap(family)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


FAMILY_IDS = [d.id for d in families.list_families()]


# one summary line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
