import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).resolve().parent / "fixtures"
DEMO = ROOT / "demo"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def demo_dir():
    return DEMO


@pytest.fixture(autouse=True)
def _private_workdir(tmp_path, monkeypatch):
    # keep evaluator scratch space inside each test's tmp dir
    monkeypatch.setenv("DARWIN_WORKDIR", str(tmp_path / "work"))


VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(name: str, passed: bool, detail: str = "") -> bool:
        line = f"{'PASS' if passed else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        VERDICTS.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
