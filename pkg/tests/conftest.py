from __future__ import annotations

import shutil
from pathlib import Path

import pytest
from click.testing import CliRunner

from moascan.catalog import default_catalog
from moascan.config import load_config
from moascan.resources import data_path

VULDROID = data_path("vuldroid")
CONFIG = VULDROID / "vuldroid.yaml"
CASSETTES = VULDROID / "cassettes"

# criterion number -> (title, passed); filled by tests/test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[str, bool]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {title}")


@pytest.fixture(scope="session")
def catalog():
    return default_catalog()


@pytest.fixture(scope="session")
def settings():
    return load_config(CONFIG)


@pytest.fixture(scope="session")
def corpus(settings):
    return settings.collect_corpus()


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def vuldroid_copy(tmp_path) -> Path:
    """Writable copy of the bundled fixture directory."""
    target = tmp_path / "vuldroid"
    shutil.copytree(VULDROID, target)
    return target
