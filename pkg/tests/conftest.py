from __future__ import annotations

from pathlib import Path

import pytest

from meshtalk.library import parse_library

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"
SCENARIOS = FIXTURES / "scenarios"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def scenarios_dir() -> Path:
    return SCENARIOS


@pytest.fixture(scope="session")
def travel_doc() -> str:
    return (FIXTURES / "travel.library.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def travel_library(travel_doc):
    return parse_library(travel_doc)


@pytest.fixture(scope="session")
def homework_library():
    return parse_library((FIXTURES / "homework.library.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def chat_library():
    return parse_library((FIXTURES / "chat.library.json").read_text(encoding="utf-8"))
