"""Documents, fixed-size text chunking, and figure knowledge units.

A corpus is a set of source documents plus the knowledge units derived from
them. Text is split into character-window chunks whose spans exactly cover
the original text; figure caption/description pairs are registered as
first-class units so they can be embedded and retrieved like any chunk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable

from .errors import ConfigurationError, ManifestError, ValidationError


class UnitKind(str, Enum):
    TEXT_CHUNK = "text_chunk"
    FIGURE = "figure"


#: Separator between a figure's caption and its generated description when
#: they are merged into a single embeddable content string.
FIGURE_CONTENT_SEPARATOR = "\n"


@dataclass(frozen=True)
class SourceDocument:
    """One raw document: pre-extracted text plus source metadata."""

    doc_id: str
    title: str
    origin: str
    text: str
    page_count: int = 0
    published_year: int | None = None


@dataclass(frozen=True)
class KnowledgeUnit:
    """One retrievable item: a text chunk or a figure caption/description pair.

    ``content`` is what gets embedded. For text chunks it is the chunk text
    and ``char_span`` locates it in the parent document; for figures it is
    the caption and description joined by :data:`FIGURE_CONTENT_SEPARATOR`.
    """

    unit_id: str
    doc_id: str
    kind: UnitKind
    ordinal: int
    content: str
    caption: str | None = None
    description: str | None = None
    char_span: tuple[int, int] | None = None


@dataclass(frozen=True)
class ChunkingPolicy:
    """Character-window chunking parameters.

    ``chunk_size`` bounds every chunk's length. ``overlap`` characters of each
    chunk are repeated at the start of the next one. A cut falling mid-word
    moves backward to the nearest whitespace within ``snap_window`` characters
    (0 disables snapping).
    """

    chunk_size: int = 1200
    overlap: int = 0
    snap_window: int = 100

    def validate(self) -> None:
        if self.chunk_size <= 0:
            raise ConfigurationError(f"chunk_size must be positive, got {self.chunk_size}")
        if not 0 <= self.overlap < self.chunk_size:
            raise ConfigurationError(
                f"overlap must be in [0, chunk_size), got overlap={self.overlap} "
                f"chunk_size={self.chunk_size}"
            )
        if not 0 <= self.snap_window < self.chunk_size:
            raise ConfigurationError(
                f"snap_window must be in [0, chunk_size), got snap_window={self.snap_window} "
                f"chunk_size={self.chunk_size}"
            )


def unit_id_for(doc_id: str, kind: UnitKind, ordinal: int) -> str:
    """Deterministic unit id: parent document + kind + position."""
    return f"{doc_id}:{kind.value}:{ordinal}"


def _snap_cut(text: str, cut: int, window: int, floor: int) -> int:
    """Move ``cut`` backward to the nearest whitespace position within ``window``.

    A position j is a whitespace cut when text[j] is whitespace (the next
    chunk then starts on that whitespace). Never moves at or below ``floor``,
    so chunks stay non-empty. Returns ``cut`` unchanged when no whitespace is
    in range.
    """
    lo = max(cut - window, floor + 1)
    for j in range(cut, lo - 1, -1):
        if text[j].isspace():
            return j
    return cut


def chunk_document(doc: SourceDocument, policy: ChunkingPolicy) -> list[KnowledgeUnit]:
    """Split a document's text into chunk units under ``policy``.

    Chunk spans cover the text exactly: with overlap 0 they partition
    [0, len). Every chunk content length is <= policy.chunk_size. Empty text
    yields an empty list.
    """
    policy.validate()
    text = doc.text
    n = len(text)
    units: list[KnowledgeUnit] = []
    start = 0
    ordinal = 0
    while start < n:
        hard = start + policy.chunk_size
        if hard >= n:
            end = n
        else:
            end = _snap_cut(text, hard, policy.snap_window, start)
        units.append(
            KnowledgeUnit(
                unit_id=unit_id_for(doc.doc_id, UnitKind.TEXT_CHUNK, ordinal),
                doc_id=doc.doc_id,
                kind=UnitKind.TEXT_CHUNK,
                ordinal=ordinal,
                content=text[start:end],
                char_span=(start, end),
            )
        )
        ordinal += 1
        if end >= n:
            break
        # max() guards against pathological overlap/snap combinations; for
        # overlap + snap_window < chunk_size it never triggers.
        start = max(end - policy.overlap, start + 1)
    return units


def make_figure_unit(doc_id: str, ordinal: int, caption: str, description: str) -> KnowledgeUnit:
    """Build a figure knowledge unit from a caption/description pair."""
    if not caption:
        raise ValidationError("figure caption must be non-empty")
    if not description:
        raise ValidationError("figure description must be non-empty")
    return KnowledgeUnit(
        unit_id=unit_id_for(doc_id, UnitKind.FIGURE, ordinal),
        doc_id=doc_id,
        kind=UnitKind.FIGURE,
        ordinal=ordinal,
        content=caption + FIGURE_CONTENT_SEPARATOR + description,
        caption=caption,
        description=description,
    )


#: Callable that turns an image path into a (caption, description) pair,
#: used for manifest figure entries that carry only ``image_path``.
DescribeImage = Callable[[str], tuple[str, str]]


def parse_manifest_record(record: dict, line: int) -> SourceDocument:
    """Validate one manifest object and build its document."""
    for field in ("doc_id", "title", "origin", "text"):
        if field not in record:
            raise ManifestError(f"missing field {field!r}", line)
    page_count = record.get("page_count", 0)
    if not isinstance(page_count, int) or page_count < 0:
        raise ManifestError(f"page_count must be a nonnegative integer, got {page_count!r}", line)
    return SourceDocument(
        doc_id=str(record["doc_id"]),
        title=str(record["title"]),
        origin=str(record["origin"]),
        text=str(record["text"]),
        page_count=page_count,
        published_year=record.get("published_year"),
    )


def _figure_units_for(
    record: dict,
    doc_id: str,
    line: int,
    describe_image: DescribeImage | None,
) -> list[KnowledgeUnit]:
    figures = record.get("figures") or []
    if not isinstance(figures, list):
        raise ManifestError("figures must be a list", line)
    units: list[KnowledgeUnit] = []
    for ordinal, entry in enumerate(figures):
        if not isinstance(entry, dict):
            raise ManifestError(f"figure entry {ordinal} must be an object", line)
        caption = entry.get("caption") or ""
        description = entry.get("description") or ""
        if not description:
            image_path = entry.get("image_path")
            if not image_path:
                raise ManifestError(
                    f"figure entry {ordinal} needs a description or an image_path", line
                )
            if describe_image is None:
                raise ManifestError(
                    f"figure entry {ordinal} has only image_path and no vision "
                    "backend is configured to describe it",
                    line,
                )
            generated_caption, description = describe_image(image_path)
            caption = caption or generated_caption
        if not caption:
            raise ManifestError(f"figure entry {ordinal} is missing a caption", line)
        try:
            units.append(make_figure_unit(doc_id, ordinal, caption, description))
        except ValidationError as exc:
            raise ManifestError(f"figure entry {ordinal}: {exc}", line) from exc
    return units


def _collect(
    numbered_records: list[tuple[int, dict]],
    policy: ChunkingPolicy,
    describe_image: DescribeImage | None,
) -> tuple[list[SourceDocument], list[KnowledgeUnit]]:
    docs: list[SourceDocument] = []
    units: list[KnowledgeUnit] = []
    seen_ids: set[str] = set()
    for line_no, record in numbered_records:
        if not isinstance(record, dict):
            raise ManifestError("record must be an object", line_no)
        doc = parse_manifest_record(record, line_no)
        if doc.doc_id in seen_ids:
            raise ManifestError(f"duplicate doc_id {doc.doc_id!r}", line_no)
        seen_ids.add(doc.doc_id)
        figure_units = _figure_units_for(record, doc.doc_id, line_no, describe_image)
        if not doc.text and not figure_units:
            raise ManifestError(f"document {doc.doc_id!r} has empty text and no figures", line_no)
        docs.append(doc)
        units.extend(chunk_document(doc, policy))
        units.extend(figure_units)
    return docs, units


def load_corpus(
    path: str | Path,
    policy: ChunkingPolicy | None = None,
    describe_image: DescribeImage | None = None,
) -> tuple[list[SourceDocument], list[KnowledgeUnit]]:
    """Load a newline-delimited JSON corpus manifest.

    Each line is one document object with fields
    {doc_id, title, origin, text, page_count?, published_year?, figures?}.
    Returns the documents and all derived knowledge units (text chunks per
    ``policy``, then figure units, in document order).
    """
    policy = policy or ChunkingPolicy()
    policy.validate()
    numbered: list[tuple[int, dict]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", line_no) from exc
            numbered.append((line_no, record))
    return _collect(numbered, policy, describe_image)


def load_inline(
    records: list[dict],
    policy: ChunkingPolicy | None = None,
    describe_image: DescribeImage | None = None,
) -> tuple[list[SourceDocument], list[KnowledgeUnit]]:
    """Same as load_corpus for already-parsed record objects; the record's
    position (1-based) stands in for the line number in error messages."""
    policy = policy or ChunkingPolicy()
    policy.validate()
    return _collect(list(enumerate(records, start=1)), policy, describe_image)
