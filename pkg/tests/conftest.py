from __future__ import annotations

from pathlib import Path

import pytest

from corpus_helpers import FixtureCorpus, build_fixture_corpus

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def vlm_table_output() -> str:
    """Fenced 8-triple extraction output used as the repair corpus."""
    return (DATA_DIR / "vlm_table_output.txt").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def llm_example_input() -> str:
    """The 16-cell worked example input of the table-to-text prompt."""
    return (DATA_DIR / "llm_example_input.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def llm_example_output() -> str:
    """The 16 golden sentences for the worked example."""
    return (DATA_DIR / "llm_example_output.txt").read_text(encoding="utf-8")


@pytest.fixture()
def corpus(tmp_path: Path) -> FixtureCorpus:
    return build_fixture_corpus(tmp_path / "corpus")
