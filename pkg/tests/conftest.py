"""Shared fixtures: synthetic corpora and (optional) real-dataset discovery."""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from synthkdd import generate_corpus

# The real public 10% file cannot ship with the repo (~75 MB); tests that
# need it look here and skip with instructions when it is absent.
REAL_DATA_ENV = "NETAD_KDD10"
REAL_DATA_CANDIDATES = (
    "data/kddcup.data_10_percent",
    "data/kddcup.data_10_percent.gz",
)


def real_kdd10_path() -> Path | None:
    env = os.environ.get(REAL_DATA_ENV)
    if env and Path(env).is_file():
        return Path(env)
    root = Path(__file__).resolve().parent.parent
    for cand in REAL_DATA_CANDIDATES:
        if (root / cand).is_file():
            return root / cand
    return None


def require_real_kdd10() -> Path:
    path = real_kdd10_path()
    if path is None:
        pytest.skip(
            "public KDD Cup 99 10% file not available; set NETAD_KDD10 or place "
            "kddcup.data_10_percent(.gz) under data/ (see README)")
    return path


@pytest.fixture(scope="session")
def quick_corpus(tmp_path_factory) -> Path:
    """Small synthetic corpus (~2.5k rows) for fast pipeline tests."""
    path = tmp_path_factory.mktemp("data") / "quick.kdd"
    counts = {"normal": 500, "dos": 1800, "probe": 120, "r2l": 60, "u2r": 20}
    return generate_corpus(path, counts, seed=101)


@pytest.fixture(scope="session")
def mirror_corpus(tmp_path_factory) -> Path:
    """Synthetic corpus sized like a 5% stratified subsample of the 10% file."""
    path = tmp_path_factory.mktemp("data") / "mirror.kdd"
    return generate_corpus(path, seed=7)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    from acceptance_report import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, status, detail in RESULTS:
        line = f"{status:<5} {criterion}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
