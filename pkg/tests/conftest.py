from __future__ import annotations

import json
from pathlib import Path

import pytest

from llmcoder.corpus import Corpus, Document, estimate_tokens
from llmcoder.promptbook import parse_promptbook

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def reference_book_source() -> str:
    return (DATA_DIR / "literature_review.json").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def reference_book(reference_book_source):
    return parse_promptbook(reference_book_source)


def make_book(variables: list[dict], role: str = "You are a careful coder.") -> str:
    return json.dumps(
        {"id": "test-book", "version": "1", "role": role, "variables": variables}
    )


def make_corpus(texts: dict[str, str]) -> Corpus:
    docs = tuple(
        Document(
            id=doc_id,
            text=text,
            source=f"<memory:{doc_id}>",
            token_estimate=estimate_tokens(text),
        )
        for doc_id, text in texts.items()
    )
    return Corpus(documents=docs)


@pytest.fixture()
def tiny_book_source() -> str:
    return make_book(
        [
            {
                "name": "AN_TOPIC",
                "task": "annotation",
                "instruction": "Main topic - sports, politics, science.",
                "type": "categorical",
                "categories": ["sports", "politics", "science"],
            },
            {
                "name": "AN_POSITIVE",
                "task": "annotation",
                "instruction": "Is the tone positive? (1 = Yes, 0 = No).",
                "type": "binary",
            },
            {
                "name": "SU_QUOTE",
                "task": "summarization",
                "instruction": "Copy a verbatim sentence supporting the tone. Return N/A if none.",
                "type": "string",
                "verbatim": True,
            },
            {
                "name": "IE_SCORE",
                "task": "extraction",
                "instruction": "Numeric score mentioned in the text.",
                "type": "decimal",
            },
        ]
    )


@pytest.fixture()
def tiny_book(tiny_book_source):
    return parse_promptbook(tiny_book_source)
