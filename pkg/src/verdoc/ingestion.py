"""Corpus loading, token counting, first-page extraction and chunking.

The default token is whitespace-delimited; a different tokenizer can be
passed anywhere a token count matters. Chunk windows are defined over the
token sequence, so rejoining chunk tokens (dropping each chunk's leading
overlap) reproduces the document's token sequence exactly.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

from .errors import EmptyCorpusError, InvalidChunkParamsError

logger = logging.getLogger(__name__)

PAGE_TOKENS = 500
CHUNK_SIZE = 512
CHUNK_OVERLAP = 50

CORPUS_EXTENSIONS = (".md", ".txt")

Tokenizer = Callable[[str], list]


def whitespace_tokenize(text: str) -> list:
    return text.split()


def count_tokens(text: str, tokenizer: Tokenizer = whitespace_tokenize) -> int:
    return len(tokenizer(text))


@dataclass
class RawDocument:
    source_path: str
    text: str
    token_count: int = 0

    def __post_init__(self):
        if not self.token_count:
            self.token_count = count_tokens(self.text)


@dataclass
class Chunk:
    """One token window of a document version.

    ``token_span`` is half-open over the token sequence; consecutive chunks
    of one document overlap by exactly the configured overlap except that
    the final chunk may be shorter.
    """

    document: str
    version: str
    ordinal: int
    text: str
    token_span: tuple

    @property
    def key(self) -> str:
        return f"{self.document}@{self.version}#c{self.ordinal:04d}"


def chunk_document(
    doc: RawDocument,
    chunk_size: int = CHUNK_SIZE,
    overlap: int = CHUNK_OVERLAP,
    *,
    document: str = "",
    version: str = "",
    tokenizer: Tokenizer = whitespace_tokenize,
) -> list:
    """Split a document into overlapping token windows.

    Windows start at multiples of ``chunk_size - overlap``; a window is
    emitted while it contributes tokens beyond the previous window's
    overlap, so every token lands in at least one chunk and ordinals are
    dense from zero.
    """
    if chunk_size <= 0 or overlap < 0 or overlap >= chunk_size:
        raise InvalidChunkParamsError(
            f"need 0 <= overlap < chunk_size, got chunk_size={chunk_size} overlap={overlap}"
        )
    tokens = tokenizer(doc.text)
    total = len(tokens)
    stride = chunk_size - overlap
    chunks = []
    start = 0
    while start == 0 or start + overlap < total:
        end = min(start + chunk_size, total)
        chunks.append(
            Chunk(
                document=document,
                version=version,
                ordinal=len(chunks),
                text=" ".join(tokens[start:end]),
                token_span=(start, end),
            )
        )
        if end >= total:
            break
        start += stride
    return chunks


_TOKEN_RUN = re.compile(r"\S+")


def first_pages(doc: RawDocument, pages: int, page_tokens: int = PAGE_TOKENS) -> str:
    """The first ``pages * page_tokens`` whitespace tokens of the document.

    Returns the original text up to the end of the last included token, so
    line structure survives (heading-sensitive consumers rely on it).
    """
    if pages < 1:
        raise InvalidChunkParamsError(f"pages must be >= 1, got {pages}")
    budget = pages * page_tokens
    end = len(doc.text)
    for count, match in enumerate(_TOKEN_RUN.finditer(doc.text), start=1):
        if count == budget:
            end = match.end()
            break
    return doc.text[:end]


@dataclass
class CorpusReport:
    documents: list = field(default_factory=list)
    unreadable: list = field(default_factory=list)  # (path, reason)


def load_corpus(root_path, *, report: Optional[CorpusReport] = None) -> list:
    """Load every .md/.txt file under ``root_path``, path-sorted.

    Unreadable files are reported (and logged) per file without aborting
    the load; an empty result raises ``EmptyCorpusError``.
    """
    root = Path(root_path)
    if not root.is_dir():
        raise EmptyCorpusError(f"corpus root {root} is not a directory")
    paths = sorted(
        (p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in CORPUS_EXTENSIONS),
        key=lambda p: p.as_posix(),
    )
    documents = []
    for path in paths:
        try:
            text = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            logger.warning("skipping unreadable file %s: %s", path, exc)
            if report is not None:
                report.unreadable.append((str(path), str(exc)))
            continue
        if not text.strip():
            logger.warning("skipping empty file %s", path)
            if report is not None:
                report.unreadable.append((str(path), "empty file"))
            continue
        documents.append(RawDocument(source_path=str(path), text=text))
    if not documents:
        raise EmptyCorpusError(f"no readable .md/.txt documents under {root}")
    if report is not None:
        report.documents = documents
    return documents
