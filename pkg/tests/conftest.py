import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def recorder_source() -> str:
    return (FIXTURES / "fig3" / "soundrecorder" / "RecorderService.java").read_text()


@pytest.fixture(scope="session")
def fixture_artifacts():
    """Corpus, index, small topic model and config for the fixture projects."""
    from snipsearch.index import build_index
    from snipsearch.pipeline import PipelineConfig, train_topic_model
    from snipsearch.segment import read_manifest, segment_tree

    snippets = list(segment_tree(FIXTURES / "projects", read_manifest(FIXTURES / "manifest.tsv")))
    config = PipelineConfig(n_cand=20, k=5, topics=4, lda_iterations=30, seed=7)
    return snippets, build_index(snippets), train_topic_model(snippets, config), config


# criterion number -> (passed, description, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, desc, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {n:>2}. {desc}: {detail}")
