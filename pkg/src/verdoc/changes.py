"""Change detection: line diff plus implicit and explicit change records.

``line_diff`` computes a minimal LCS edit script over lines and groups it
into maximal contiguous hunks. Lines are matched after stripping trailing
whitespace (re-rendered Markdown often only touches trailing spaces) but
hunk text keeps lines verbatim; applying the hunks therefore reproduces
the new text byte-exactly whenever unchanged lines are byte-identical.

Implicit records come from diffing adjacent version texts and summarizing
the hunks in one completion per version pair; explicit records come from
one completion over a changelog document. Either path optionally embeds
and inserts the records into a vector index so change queries can search
them semantically.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from . import prompts
from ._kernels import OP_DELETE, OP_INSERT, OP_MATCH, lcs_ops
from .errors import ExplicitExtractionError, SchemaViolationError
from .gateway import CompletionRequest, Gateway, ResponseSchema, parse_json_reply
from .graph import ChangeKind, ChangeOrigin, ChangeRecord
from .ingestion import RawDocument
from .vector_index import IndexEntry, VectorIndex
from .versions import VersionLabel, compare_versions, parse_version

logger = logging.getLogger(__name__)

DESCRIPTION_LIMIT = 200


class HunkKind(str, Enum):
    ADDED_LINES = "added_lines"
    REMOVED_LINES = "removed_lines"
    REPLACED_LINES = "replaced_lines"


@dataclass
class DiffHunk:
    """A maximal contiguous block of line edits.

    Spans are half-open 0-based line ranges; ``old_span`` is absent for
    pure additions and ``new_span`` for pure removals. Texts join the
    affected lines verbatim with newlines.
    """

    id: str
    kind: HunkKind
    old_span: Optional[tuple]
    new_span: Optional[tuple]
    old_text: str
    new_text: str


_KIND_TO_CHANGE = {
    HunkKind.ADDED_LINES: ChangeKind.ADDED,
    HunkKind.REMOVED_LINES: ChangeKind.REMOVED,
    HunkKind.REPLACED_LINES: ChangeKind.MODIFIED,
}


def _codes(old_lines: list, new_lines: list) -> tuple:
    """Map rstripped lines to their lexicographic rank over both files.

    Rank order equals lexicographic order, which is what the kernel's
    tie-break compares; this keeps diff(a, b) and diff(b, a) symmetric.
    """
    stripped_old = [line.rstrip() for line in old_lines]
    stripped_new = [line.rstrip() for line in new_lines]
    rank = {line: i for i, line in enumerate(sorted(set(stripped_old) | set(stripped_new)))}
    a = np.fromiter((rank[line] for line in stripped_old), dtype=np.int64, count=len(stripped_old))
    b = np.fromiter((rank[line] for line in stripped_new), dtype=np.int64, count=len(stripped_new))
    return a, b


def line_diff(old_text: str, new_text: str, hunk_prefix: str = "h") -> list:
    """Minimal LCS-based line diff grouped into hunks, ordered by position."""
    if old_text == new_text:
        return []
    old_lines = old_text.split("\n")
    new_lines = new_text.split("\n")
    a, b = _codes(old_lines, new_lines)
    ops = lcs_ops(a, b)

    hunks: list = []
    i = j = 0
    pos = 0
    total = len(ops)
    while pos < total:
        if ops[pos] == OP_MATCH:
            i += 1
            j += 1
            pos += 1
            continue
        old_start, new_start = i, j
        while pos < total and ops[pos] != OP_MATCH:
            if ops[pos] == OP_DELETE:
                i += 1
            else:
                j += 1
            pos += 1
        removed = old_lines[old_start:i]
        added = new_lines[new_start:j]
        if removed and added:
            kind = HunkKind.REPLACED_LINES
        elif added:
            kind = HunkKind.ADDED_LINES
        else:
            kind = HunkKind.REMOVED_LINES
        hunks.append(
            DiffHunk(
                id=f"{hunk_prefix}{len(hunks):04d}",
                kind=kind,
                old_span=(old_start, i) if removed else None,
                new_span=(new_start, j) if added else None,
                old_text="\n".join(removed),
                new_text="\n".join(added),
            )
        )
    return hunks


def apply_hunks(old_text: str, hunks: list) -> str:
    """Reconstruct the new text by replaying hunks over the old text."""
    old_lines = old_text.split("\n")
    out: list = []
    cursor = 0
    consumed_new = 0
    for hunk in hunks:
        if hunk.old_span is not None:
            gap = hunk.old_span[0] - cursor
        else:
            gap = hunk.new_span[0] - consumed_new
        out.extend(old_lines[cursor : cursor + gap])
        cursor += gap
        consumed_new += gap
        if hunk.old_span is not None:
            cursor += hunk.old_span[1] - hunk.old_span[0]
        if hunk.new_span is not None:
            # "".split("\n") == [""]: a single empty added line survives
            out.extend(hunk.new_text.split("\n"))
            consumed_new += hunk.new_span[1] - hunk.new_span[0]
    out.extend(old_lines[cursor:])
    return "\n".join(out)


def deterministic_description(hunk: DiffHunk) -> str:
    """First non-empty line of the hunk, truncated; used when no LLM ran."""
    body = hunk.new_text if hunk.new_text else hunk.old_text
    for line in body.splitlines():
        if line.strip():
            return line.strip()[:DESCRIPTION_LIMIT]
    return ""


def index_change_record(
    record: ChangeRecord,
    description_vector,
    vector_index: Optional[VectorIndex],
    category: str,
    source: str = "",
) -> None:
    """Insert a change record into the vector index.

    The metadata carries every record field (evidence comma-joined) plus
    the source file for explicit records, so a record can be rebuilt from
    its entry without re-running extraction.
    """
    if vector_index is None:
        return
    metadata = {
        "category": category,
        "document": record.document,
        "version": record.to_version.raw,
        "to_version": record.to_version.raw,
        "from_version": "" if record.from_version is None else record.from_version.raw,
        "origin": record.origin.value,
        "record_kind": record.kind.value,
        "evidence": ",".join(record.evidence),
        "source": source,
    }
    vector_index.insert(
        IndexEntry(
            key=record.id,
            vector=description_vector,
            metadata=metadata,
            text=record.description,
        )
    )


def record_from_entry(entry) -> ChangeRecord:
    """Rebuild a change record from its vector index entry."""
    md = entry.metadata
    evidence = md.get("evidence", "")
    return ChangeRecord(
        id=entry.key,
        document=md["document"],
        from_version=None if not md.get("from_version") else parse_version(md["from_version"]),
        to_version=parse_version(md["to_version"]),
        kind=ChangeKind(md["record_kind"]),
        description=entry.text,
        origin=ChangeOrigin(md["origin"]),
        evidence=evidence.split(",") if evidence else [],
    )


def extract_implicit_changes(
    document: str,
    prev: tuple,
    nxt: tuple,
    gateway: Gateway,
    vector_index: Optional[VectorIndex] = None,
    category: str = "",
    document_title: str = "",
) -> list:
    """Diff two adjacent version texts and emit one record per hunk group.

    ``prev`` and ``nxt`` are (VersionLabel, text) pairs with prev < nxt.
    One completion summarizes all hunks of the pair; the reply may merge
    adjacent hunks when it returns a valid partition of hunk indices,
    otherwise every hunk gets its own record with the deterministic
    first-line description.
    """
    (prev_label, prev_text) = prev
    (next_label, next_text) = nxt
    if compare_versions(prev_label, next_label) >= 0:
        raise ValueError(f"versions not ascending: {prev_label.raw} .. {next_label.raw}")
    prefix = f"change:{document}@{prev_label.raw}->{next_label.raw}#h"
    hunks = line_diff(prev_text, next_text, hunk_prefix=prefix)
    if not hunks:
        return []

    groups = _summarize_hunks(hunks, document_title or document, prev_label, next_label, gateway)
    records = []
    for ordinal, (kind, description, members) in enumerate(groups):
        record = ChangeRecord(
            id=f"change:{document}@{prev_label.raw}->{next_label.raw}#r{ordinal:04d}",
            document=document,
            from_version=prev_label,
            to_version=next_label,
            kind=kind,
            description=description,
            origin=ChangeOrigin.IMPLICIT,
            evidence=[hunks[m].id for m in members],
        )
        records.append(record)
    if vector_index is not None and records:
        vectors = gateway.embed([r.description for r in records])
        for record, vector in zip(records, vectors):
            index_change_record(record, vector, vector_index, category)
    return records


def _summarize_hunks(
    hunks: list,
    document_title: str,
    prev_label: VersionLabel,
    next_label: VersionLabel,
    gateway: Gateway,
) -> list:
    """Return (kind, description, hunk_indices) groups covering every hunk."""
    fallback = [
        (_KIND_TO_CHANGE[h.kind], deterministic_description(h) or h.id, [i])
        for i, h in enumerate(hunks)
    ]
    prompt = prompts.IMPLICIT_CHANGES_PROMPT.format(
        from_version=prev_label.raw,
        to_version=next_label.raw,
        document=document_title,
        hunks=prompts.format_hunks(hunks),
    )
    try:
        reply = gateway.complete(
            CompletionRequest(prompt=prompt, response_schema=ResponseSchema.CHANGE_SUMMARY)
        )
        data = parse_json_reply(reply)
    except SchemaViolationError as exc:
        logger.warning("hunk summarization failed, using per-hunk records: %s", exc)
        return fallback
    groups = []
    seen: set = set()
    for item in data["changes"]:
        members = item.get("hunks")
        if members is None:
            return fallback
        members = [m for m in members if 0 <= m < len(hunks)]
        if not members or any(m in seen for m in members):
            return fallback
        seen.update(members)
        description = item["description"].strip()[:DESCRIPTION_LIMIT]
        if not description:
            description = deterministic_description(hunks[members[0]]) or hunks[members[0]].id
        groups.append((ChangeKind(item["kind"]), description, sorted(members)))
    if seen != set(range(len(hunks))):
        return fallback  # merge mapping must partition the hunks
    return groups


def extract_explicit_changes(
    changelog: RawDocument,
    attrs,
    document: str,
    gateway: Gateway,
    vector_index: Optional[VectorIndex] = None,
    category: str = "",
) -> list:
    """Extract per-version change items from a changelog document.

    ``attrs`` must classify the document as a changelog. Versions are kept
    as parsed labels; records carry no from_version (the graph attaches
    them to the chain-adjacent pair at insertion time).
    """
    if attrs.doc_type != "changelog":
        raise ValueError(f"{changelog.source_path} is not classified as a changelog")
    version_hint = f" for version {attrs.version.raw}" if attrs.version is not None else ""
    prompt = prompts.EXPLICIT_CHANGES_PROMPT.format(
        version_hint=version_hint,
        doc_begin=prompts.DOC_BEGIN,
        text=changelog.text,
        doc_end=prompts.DOC_END,
    )
    try:
        reply = gateway.complete(
            CompletionRequest(prompt=prompt, response_schema=ResponseSchema.CHANGE_SUMMARY)
        )
        data = parse_json_reply(reply)
    except SchemaViolationError as exc:
        raise ExplicitExtractionError(
            f"changelog extraction failed for {changelog.source_path}: {exc}"
        ) from exc
    source_tag = hashlib.sha1(changelog.source_path.encode("utf-8")).hexdigest()[:8]
    records = []
    for item in data["changes"]:
        raw_version = item.get("version")
        if not raw_version or not str(raw_version).strip():
            continue
        description = item["description"].strip()
        if not description:
            continue
        label = parse_version(str(raw_version))
        records.append(
            ChangeRecord(
                id=f"change:{document}@{label.raw}#x{source_tag}-{len(records):04d}",
                document=document,
                from_version=None,
                to_version=label,
                kind=ChangeKind(item["kind"]),
                description=description,
                origin=ChangeOrigin.EXPLICIT,
                evidence=[],
            )
        )
    if not records:
        logger.warning("changelog %s yielded no parseable change items", changelog.source_path)
    if vector_index is not None and records:
        vectors = gateway.embed([r.description for r in records])
        for record, vector in zip(records, vectors):
            index_change_record(record, vector, vector_index, category)
    return records
