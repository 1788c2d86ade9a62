from __future__ import annotations

import copy
from pathlib import Path

import pytest

from patchevo.corpus import ingest_mbox, ingest_syzbot_export, link_corpus, read_commits

FIXTURES = Path(__file__).resolve().parent / "fixtures"

# filled by test_acceptance.py, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def load_fixture_corpus():
    return link_corpus(
        ingest_syzbot_export(FIXTURES / "syzbot_export.jsonl"),
        ingest_mbox(FIXTURES / "threads.mbox"),
        read_commits(FIXTURES / "commits.jsonl"),
    )


@pytest.fixture(scope="session")
def _fixture_corpus():
    return load_fixture_corpus()


@pytest.fixture
def fixture_corpus(_fixture_corpus):
    """The three-bug corpus (HFS+ five-version warning, kcov/NFC, L2TP deadlock)."""
    return copy.deepcopy(_fixture_corpus)


@pytest.fixture
def bug_by_id(fixture_corpus):
    return {b.bug_id: b for b in fixture_corpus.bugs}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
