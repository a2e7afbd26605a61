"""Corpus ingestion, token budgeting, and reproducible dev/eval sampling.

Documents come either from a folder of .txt/.md files (id = file stem) or from
a delimited table with a header row. Token footprints use the word-based
heuristic of one token per 0.75 words. Sampling uses a Fisher-Yates shuffle
driven by random.Random(seed).random(), the one generator primitive whose
output sequence is guaranteed stable across Python versions.
"""

from __future__ import annotations

import csv
import hashlib
import math
import random
import warnings
from dataclasses import dataclass, field
from pathlib import Path

TOKENS_PER_WORD = 1 / 0.75

_INGEST_SUFFIXES = (".txt", ".md")


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    source: str
    token_estimate: int
    metadata: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Corpus:
    documents: tuple[Document, ...]

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(d.id for d in self.documents)

    def document(self, doc_id: str) -> Document:
        for d in self.documents:
            if d.id == doc_id:
                return d
        raise KeyError(doc_id)

    @property
    def manifest_digest(self) -> str:
        """Stable digest over the ordered (id, content hash) pairs."""
        h = hashlib.sha256()
        for d in self.documents:
            h.update(d.id.encode("utf-8"))
            h.update(b"\x00")
            h.update(hashlib.sha256(d.text.encode("utf-8")).digest())
            h.update(b"\x01")
        return h.hexdigest()


def estimate_tokens(text: str) -> int:
    """ceil(word_count / 0.75); words are maximal whitespace-delimited runs."""
    words = len(text.split())
    return math.ceil(words * TOKENS_PER_WORD) if words else 0


def _make_document(doc_id: str, text: str, source: str, metadata: dict[str, str] | None = None) -> Document:
    return Document(
        id=doc_id,
        text=text,
        source=source,
        token_estimate=estimate_tokens(text),
        metadata=metadata or {},
    )


def ingest_dir(path: str | Path, on_unreadable: str = "fail") -> Corpus:
    """One Document per .txt/.md file, id = file stem, lexicographic order.

    ``on_unreadable`` is "fail" (default) or "skip" (skip with a warning).
    Duplicate stems (a.txt next to a.md) are always an error.
    """
    if on_unreadable not in ("fail", "skip"):
        raise ValueError(f"on_unreadable must be 'fail' or 'skip', got {on_unreadable!r}")
    root = Path(path)
    if not root.is_dir():
        raise CorpusError(f"corpus directory not found: {root}")
    files = sorted(
        (p for p in root.iterdir() if p.is_file() and p.suffix.lower() in _INGEST_SUFFIXES),
        key=lambda p: p.name,
    )
    seen: dict[str, str] = {}
    docs: list[Document] = []
    for p in files:
        if p.stem in seen:
            raise CorpusError(f"duplicate document id '{p.stem}' from {seen[p.stem]} and {p.name}")
        seen[p.stem] = p.name
        try:
            text = p.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            if on_unreadable == "fail":
                raise CorpusError(f"unreadable file {p}: {exc}") from exc
            warnings.warn(f"skipping unreadable file {p}: {exc}", stacklevel=2)
            continue
        docs.append(_make_document(p.stem, text, str(p)))
    if not docs:
        warnings.warn(f"ingested empty corpus from {root}", stacklevel=2)
    return Corpus(documents=tuple(docs))


def ingest_table(
    path: str | Path,
    id_column: str,
    text_column: str,
    on_empty_text: str = "fail",
) -> Corpus:
    """One Document per row of a comma-separated file with a header row.

    Columns other than the id and text columns become document metadata.
    ``on_empty_text`` is "fail" (default) or "skip".
    """
    if on_empty_text not in ("fail", "skip"):
        raise ValueError(f"on_empty_text must be 'fail' or 'skip', got {on_empty_text!r}")
    p = Path(path)
    if not p.is_file():
        raise CorpusError(f"corpus table not found: {p}")
    with p.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (id_column, text_column):
            if col not in header:
                raise CorpusError(f"missing column '{col}' in {p} (header: {', '.join(header)})")
        docs: list[Document] = []
        seen: dict[str, int] = {}
        for rownum, row in enumerate(reader, start=2):
            doc_id = (row.get(id_column) or "").strip()
            if not doc_id:
                raise CorpusError(f"empty id in row {rownum} of {p}")
            if doc_id in seen:
                raise CorpusError(
                    f"duplicate id '{doc_id}' in rows {seen[doc_id]} and {rownum} of {p}"
                )
            seen[doc_id] = rownum
            text = row.get(text_column) or ""
            if not text.strip():
                if on_empty_text == "fail":
                    raise CorpusError(f"empty text cell in row {rownum} of {p}")
                warnings.warn(f"skipping row {rownum} of {p}: empty text", stacklevel=2)
                continue
            metadata = {
                k: (v or "") for k, v in row.items() if k not in (id_column, text_column) and k is not None
            }
            docs.append(_make_document(doc_id, text, f"{p}:{rownum}", metadata))
    if not docs:
        warnings.warn(f"ingested empty corpus from {p}", stacklevel=2)
    return Corpus(documents=tuple(docs))


def _shuffled(items: list, rng: random.Random) -> list:
    # Fisher-Yates with indices from rng.random(); pinned here so splits
    # replicate across platforms and Python versions.
    out = list(items)
    for i in range(len(out) - 1, 0, -1):
        j = int(rng.random() * (i + 1))
        out[i], out[j] = out[j], out[i]
    return out


def _largest_remainder(total: int, sizes: dict[str, int]) -> dict[str, int]:
    """Allocate ``total`` draws across strata proportionally to ``sizes``."""
    n = sum(sizes.values())
    quotas = {s: total * size / n for s, size in sizes.items()}
    alloc = {s: int(q) for s, q in quotas.items()}
    leftover = total - sum(alloc.values())
    by_remainder = sorted(sizes, key=lambda s: (-(quotas[s] - alloc[s]), s))
    for s in by_remainder[:leftover]:
        alloc[s] += 1
    return alloc


@dataclass(frozen=True)
class SplitResult:
    dev: Corpus
    eval: Corpus


def sample_split(
    corpus: Corpus,
    n_dev: int,
    n_eval: int,
    strategy: str = "simple",
    stratify_by: str | None = None,
    seed: int = 0,
) -> SplitResult:
    """Draw disjoint development and evaluation samples.

    strategy "simple" shuffles the whole corpus; "stratified" allocates
    proportionally per value of the ``stratify_by`` metadata key using
    largest-remainder rounding, then samples within each stratum. Identical
    seeds produce identical splits.
    """
    if n_dev < 0 or n_eval < 0:
        raise CorpusError("sample sizes must be non-negative")
    if n_dev + n_eval > len(corpus):
        raise CorpusError(
            f"insufficient documents: requested {n_dev}+{n_eval} from a corpus of {len(corpus)}"
        )
    rng = random.Random(seed)

    if strategy == "simple":
        order = _shuffled(list(corpus.documents), rng)
        dev = order[:n_dev]
        eva = order[n_dev : n_dev + n_eval]
    elif strategy == "stratified":
        if not stratify_by:
            raise CorpusError("stratified sampling requires a stratify_by key")
        strata: dict[str, list[Document]] = {}
        for d in corpus.documents:
            if stratify_by not in d.metadata:
                raise CorpusError(f"document '{d.id}' lacks stratification key '{stratify_by}'")
            strata.setdefault(d.metadata[stratify_by], []).append(d)
        sizes = {s: len(ds) for s, ds in strata.items()}
        dev_alloc = _largest_remainder(n_dev, sizes)
        eval_alloc = _largest_remainder(n_eval, sizes)
        short = [
            s for s in sorted(sizes) if dev_alloc[s] + eval_alloc[s] > sizes[s]
        ]
        if short:
            raise CorpusError(
                "strata smaller than their allocation: "
                + ", ".join(
                    f"{s} (size {sizes[s]}, needs {dev_alloc[s]}+{eval_alloc[s]})" for s in short
                )
            )
        dev, eva = [], []
        for s in sorted(strata):
            order = _shuffled(strata[s], rng)
            dev.extend(order[: dev_alloc[s]])
            eva.extend(order[dev_alloc[s] : dev_alloc[s] + eval_alloc[s]])
    else:
        raise CorpusError(f"unknown sampling strategy {strategy!r}")

    dev_sorted = tuple(sorted(dev, key=lambda d: d.id))
    eval_sorted = tuple(sorted(eva, key=lambda d: d.id))
    return SplitResult(dev=Corpus(documents=dev_sorted), eval=Corpus(documents=eval_sorted))


def sample(corpus: Corpus, n: int, seed: int = 0) -> Corpus:
    """Random n-document subset (the sampler behind pilot runs)."""
    if n <= 0:
        raise CorpusError("sample size must be positive")
    return sample_split(corpus, n_dev=n, n_eval=0, strategy="simple", seed=seed).dev
