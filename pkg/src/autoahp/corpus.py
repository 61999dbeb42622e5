"""Corpus ingestion, paragraph segmentation, and embedding.

Documents come from a directory of .txt/.md files or from .jsonl records
with fields {id, text, title?}. Segmentation splits on blank lines and
forward-merges fragments shorter than a configurable minimum, because tiny
fragments destabilize the downstream clustering.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .agents.base import Provider
from .errors import CorpusError, ProviderError

log = logging.getLogger(__name__)

DEFAULT_MIN_PARAGRAPH_CHARS = 40

_BLANK_LINE_RE = re.compile(r"\n\s*\n")


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    body: str

    def __post_init__(self):
        if not self.id:
            raise CorpusError("document id must be non-empty")
        if not self.body.strip():
            raise CorpusError(f"document {self.id!r} has an empty body")


@dataclass(frozen=True)
class Paragraph:
    doc_id: str
    index: int
    text: str

    def __post_init__(self):
        if self.index < 0:
            raise CorpusError("paragraph index must be non-negative")
        if not self.text.strip():
            raise CorpusError(
                f"paragraph {self.doc_id}#{self.index} has empty text"
            )


@dataclass
class EmbeddedCorpus:
    """Paragraphs with a parallel (n, k) matrix of unit-norm vectors."""

    paragraphs: list[Paragraph]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if len(self.paragraphs) != self.vectors.shape[0]:
            raise CorpusError(
                f"{len(self.paragraphs)} paragraphs but "
                f"{self.vectors.shape[0]} vectors"
            )
        if len(self.paragraphs) < 2:
            raise CorpusError("an embedded corpus needs at least 2 paragraphs")
        if self.vectors.ndim != 2:
            raise CorpusError("vectors must form a 2-D matrix")
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise CorpusError("embedding vectors must be unit-norm within 1e-9")
        self.vectors.setflags(write=False)

    @property
    def k(self) -> int:
        return int(self.vectors.shape[1])

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "paragraphs": [
                {"doc_id": p.doc_id, "index": p.index, "text": p.text}
                for p in self.paragraphs
            ],
            "vectors": self.vectors.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EmbeddedCorpus":
        try:
            paragraphs = [
                Paragraph(doc_id=p["doc_id"], index=int(p["index"]), text=p["text"])
                for p in data["paragraphs"]
            ]
            vectors = np.asarray(data["vectors"], dtype=float)
            k = int(data["k"])
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"malformed embedded corpus document: {exc}") from exc
        if vectors.ndim != 2 or vectors.shape[1] != k:
            raise CorpusError("embedded corpus vectors do not match declared k")
        return cls(paragraphs=paragraphs, vectors=vectors)


def _documents_from_jsonl(path: Path) -> list[Document]:
    documents = []
    with path.open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(
                    f"{path.name}:{lineno}: invalid JSON record: {exc}"
                ) from exc
            if not isinstance(record, dict) or "id" not in record or "text" not in record:
                raise CorpusError(
                    f"{path.name}:{lineno}: record must carry 'id' and 'text'"
                )
            doc_id = str(record["id"])
            documents.append(
                Document(
                    id=doc_id,
                    title=str(record.get("title", doc_id)),
                    body=str(record["text"]),
                )
            )
    return documents


def ingest_corpus(path: str | Path) -> list[Document]:
    """Load documents from a directory (.txt/.md/.jsonl) or a single file.

    Ids derive from filenames or record keys and the result is sorted by id,
    so repeated runs see the same corpus in the same order.
    """
    root = Path(path)
    if not root.exists():
        raise CorpusError(f"corpus path does not exist: {root}")

    files = [root] if root.is_file() else sorted(
        p for p in root.iterdir()
        if p.is_file() and p.suffix.lower() in (".txt", ".md", ".jsonl")
    )

    documents: list[Document] = []
    for file in files:
        if file.suffix.lower() == ".jsonl":
            documents.extend(_documents_from_jsonl(file))
        else:
            body = file.read_text(encoding="utf-8")
            if not body.strip():
                raise CorpusError(f"document file {file.name} is empty")
            documents.append(Document(id=file.name, title=file.stem, body=body))

    if not documents:
        raise CorpusError(f"empty corpus: no readable documents under {root}")
    seen: set[str] = set()
    for doc in documents:
        if doc.id in seen:
            raise CorpusError(f"duplicate document id: {doc.id!r}")
        seen.add(doc.id)
    return sorted(documents, key=lambda d: d.id)


def segment_paragraphs(
    doc: Document, min_chars: int = DEFAULT_MIN_PARAGRAPH_CHARS
) -> list[Paragraph]:
    """Split a document on blank lines into trimmed paragraph units.

    Units shorter than ``min_chars`` are merged into the following unit, or
    into the preceding one when they end the document.
    """
    units = [u.strip() for u in _BLANK_LINE_RE.split(doc.body) if u.strip()]
    if not units:
        raise CorpusError(f"document {doc.id!r} reduces to zero paragraphs")

    merged: list[str] = []
    buffer = ""
    for unit in units:
        buffer = f"{buffer} {unit}".strip() if buffer else unit
        if len(buffer) >= min_chars:
            merged.append(buffer)
            buffer = ""
    if buffer:
        if merged:
            merged[-1] = f"{merged[-1]} {buffer}"
        else:
            merged.append(buffer)

    return [
        Paragraph(doc_id=doc.id, index=i, text=text)
        for i, text in enumerate(merged)
    ]


def segment_corpus(
    documents: Sequence[Document], min_chars: int = DEFAULT_MIN_PARAGRAPH_CHARS
) -> list[Paragraph]:
    paragraphs: list[Paragraph] = []
    for doc in documents:
        paragraphs.extend(segment_paragraphs(doc, min_chars=min_chars))
    return paragraphs


def embed(
    paragraphs: Sequence[Paragraph],
    provider: Provider,
    batch_size: int = 64,
    max_workers: int = 1,
) -> EmbeddedCorpus:
    """Embed paragraphs through the provider, preserving order.

    Batches are independent, so they may run concurrently; results are
    reassembled in paragraph order regardless.
    """
    if len(paragraphs) < 2:
        raise CorpusError("embedding requires at least 2 paragraphs")
    texts = [p.text for p in paragraphs]
    batches = [
        (start, texts[start : start + batch_size])
        for start in range(0, len(texts), batch_size)
    ]

    def run(batch):
        start, chunk = batch
        try:
            return provider.embed_texts(chunk)
        except ProviderError as exc:
            first = paragraphs[start]
            raise CorpusError(
                f"embedding failed at paragraph {first.doc_id}#{first.index}: {exc}"
            ) from exc

    if max_workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(b) for b in batches]

    k = results[0].shape[1]
    for (start, _), block in zip(batches, results):
        if block.shape[1] != k:
            first = paragraphs[start]
            raise CorpusError(
                f"embedding dimension mismatch at paragraph "
                f"{first.doc_id}#{first.index}: {block.shape[1]} != {k}"
            )
    return EmbeddedCorpus(paragraphs=list(paragraphs), vectors=np.vstack(results))


def save_embedded_corpus(corpus: EmbeddedCorpus, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(corpus.to_dict(), indent=2), encoding="utf-8"
    )


def load_embedded_corpus(path: str | Path) -> EmbeddedCorpus:
    file = Path(path)
    if not file.exists():
        raise CorpusError(f"embedded corpus artifact missing: {file}")
    try:
        data = json.loads(file.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"embedded corpus artifact is not valid JSON: {exc}") from exc
    return EmbeddedCorpus.from_dict(data)
