"""Free-form table parsing, flattening, and numerical-question detection."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

# Keywords that flag a question as numerical. Matching is plain
# case-insensitive substring matching, so "number" also hits "numbers";
# multi-word keywords like "the most" rely on this.
NUMERICAL_KEYWORDS = (
    "how many",
    "number",
    "the most",
    "difference",
    "count",
    "highest",
    "average",
    "at least",
    "rank",
    "lowest",
    "percentage",
    "sum",
    "compare",
    "frequency",
)


class EmptyGrid(ValueError):
    """Raised when a raw grid has no rows at all."""


class EmptyHeader(ValueError):
    """Raised when the header row has zero cells."""


@dataclass(frozen=True)
class Table:
    """A rectangular free-form table. Every row has exactly len(headers) cells."""

    title: str
    headers: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    source_id: str = ""

    def __post_init__(self):
        if not self.headers:
            raise EmptyHeader("table must have at least one header cell")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.headers):
                raise ValueError(f"row {i} has {len(row)} cells, expected {len(self.headers)}")


@dataclass(frozen=True)
class Question:
    text: str
    id: str = ""

    def __post_init__(self):
        if not self.text.strip():
            raise ValueError("question text is empty")


@dataclass(frozen=True)
class KeywordHit:
    keyword: str
    count: int


@dataclass(frozen=True)
class ParsedTable:
    """parse_table result: the table plus any rectangularization warnings."""

    table: Table
    warnings: tuple[str, ...] = field(default=())


def parse_table(raw_grid: list[list[str]], title: str = "", source_id: str = "") -> ParsedTable:
    """Build a Table from a raw grid whose first row is the header row.

    Ragged rows are rectangularized: short rows are right-padded with ""
    and long rows are clipped, each recorded as a warning.
    """
    if not raw_grid:
        raise EmptyGrid("grid has no rows")
    header_row = [str(c) for c in raw_grid[0]]
    if not header_row:
        raise EmptyHeader("header row has zero cells")
    width = len(header_row)
    warnings = []
    rows = []
    for i, raw_row in enumerate(raw_grid[1:], start=1):
        cells = [str(c) for c in raw_row]
        if len(cells) < width:
            warnings.append(f"row {i}: padded from {len(cells)} to {width} cells")
            cells = cells + [""] * (width - len(cells))
        elif len(cells) > width:
            warnings.append(f"row {i}: clipped from {len(cells)} to {width} cells")
            cells = cells[:width]
        rows.append(tuple(cells))
    table = Table(title=title, headers=tuple(header_row), rows=tuple(rows), source_id=source_id)
    return ParsedTable(table=table, warnings=tuple(warnings))


def _escape_cell(cell: str) -> str:
    return cell.replace("\\", "\\\\").replace("\n", "\\n").replace("|", "\\|")


def _unescape_cell(cell: str) -> str:
    out = []
    i = 0
    while i < len(cell):
        ch = cell[i]
        if ch == "\\" and i + 1 < len(cell):
            nxt = cell[i + 1]
            if nxt == "n":
                out.append("\n")
            else:
                out.append(nxt)
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def flatten_table(table: Table) -> str:
    """Serialize a table to prompt text: cells joined by " | ", rows by newlines.

    "|" inside a cell becomes "\\|", a newline becomes a literal "\\n", and
    backslashes are doubled so the encoding stays reversible.
    """
    lines = [" | ".join(_escape_cell(c) for c in table.headers)]
    for row in table.rows:
        lines.append(" | ".join(_escape_cell(c) for c in row))
    return "\n".join(lines)


def unflatten_table(text: str, title: str = "", source_id: str = "") -> Table:
    """Inverse of flatten_table for tables produced by it."""
    lines = text.split("\n")
    grids = [tuple(_unescape_cell(c) for c in line.split(" | ")) for line in lines]
    return Table(title=title, headers=grids[0], rows=tuple(grids[1:]), source_id=source_id)


def schema_text(title: str, headers: tuple[str, ...]) -> str:
    """Title plus headers only, with no cell contents. Used by the answer
    selection and trust evaluation prompts."""
    header_line = " | ".join(_escape_cell(c) for c in headers)
    if title:
        return f"Title: {title}\nColumns: {header_line}"
    return f"Columns: {header_line}"


def table_schema(table: Table) -> str:
    return schema_text(table.title, table.headers)


def is_numerical_question(
    q: Question, keywords: tuple[str, ...] = NUMERICAL_KEYWORDS
) -> tuple[bool, list[KeywordHit]]:
    """Classify a question as numerical by keyword presence.

    Returns (flag, hits) where hits carry per-keyword occurrence counts in
    keyword-list order. The flag is per-question presence: true iff at
    least one keyword occurs.
    """
    if not keywords:
        raise ValueError("keyword list must be non-empty")
    text = q.text.casefold()
    hits = []
    for kw in keywords:
        n = _count_occurrences(text, kw.casefold())
        if n:
            hits.append(KeywordHit(keyword=kw, count=n))
    return bool(hits), hits


def _count_occurrences(text: str, needle: str) -> int:
    return len(re.findall(re.escape(needle), text))


def keyword_counts(questions, keywords: tuple[str, ...] = NUMERICAL_KEYWORDS) -> dict[str, int]:
    """Per-keyword question counts over a collection (one count per
    question containing the keyword, regardless of repeats within it)."""
    counts = {kw: 0 for kw in keywords}
    for q in questions:
        _, hits = is_numerical_question(q, keywords)
        for hit in hits:
            counts[hit.keyword] += 1
    return counts
