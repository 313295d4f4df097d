from __future__ import annotations

from pathlib import Path

import pytest

from secdiv.mir import parse_function

CORPUS = Path(__file__).resolve().parent.parent / "src" / "secdiv" / "corpus"


def corpus_path(name: str) -> Path:
    return CORPUS / f"{name}.mir"


def load(name: str):
    return parse_function(corpus_path(name).read_text())


@pytest.fixture
def masked_xor():
    return load("masked_xor")


@pytest.fixture
def check_bit():
    return load("check_bit")


@pytest.fixture
def straightline():
    return load("straightline")


def all_corpus_names() -> list[str]:
    return sorted(p.stem for p in CORPUS.glob("*.mir"))
