"""Abbreviation database: loading, canonical-key lookup and in-text expansion."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

from .errors import FormatError, UnknownLevel
from .taxonomy import LabelSet, Taxonomy, default_taxonomy

HEADER = ["abbreviation", "expansion", "levels", "source"]
MAX_SPAN_TOKENS = 6

_NON_KEY = re.compile(r"[^A-Z0-9]")
_SPLIT = re.compile(r"(\s+|/)")


def canonical_key(token: str) -> str:
    return _NON_KEY.sub("", token.upper())


@dataclass(frozen=True)
class AbbrevEntry:
    abbreviation: str
    expansion: str
    levels: LabelSet
    source: str = ""

    @property
    def key(self) -> str:
        return canonical_key(self.abbreviation)


@dataclass(frozen=True)
class Substitution:
    """One matched span of the raw title.

    ``start``/``end`` index the raw string, ``out_start``/``out_end`` the
    expanded one. Ambiguous matches keep the source text and carry every
    candidate entry.
    """

    start: int
    end: int
    source: str
    replacement: str
    out_start: int
    out_end: int
    entries: tuple[AbbrevEntry, ...]
    ambiguous: bool = False

    @property
    def entry(self) -> AbbrevEntry | None:
        return None if self.ambiguous else self.entries[0]


class Expansion(NamedTuple):
    text: str
    spans: list[Substitution]


@dataclass
class AbbrevDb:
    entries: list[AbbrevEntry] = field(default_factory=list)
    index: dict[str, list[AbbrevEntry]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.index:
            for entry in self.entries:
                self.index.setdefault(entry.key, []).append(entry)
        self._max_key = max((len(k) for k in self.index), default=0)
        self._by_expansion: dict[str, list[AbbrevEntry]] = {}
        for entry in self.entries:
            self._by_expansion.setdefault(entry.expansion, []).append(entry)

    def __len__(self):
        return len(self.entries)

    def keys(self) -> set[str]:
        return set(self.index)

    def lookup(self, expression: str) -> list[AbbrevEntry]:
        return list(self.index.get(canonical_key(expression), ()))

    def by_expansion(self, expansion: str) -> list[AbbrevEntry]:
        return list(self._by_expansion.get(expansion, ()))

    def expand(self, raw_title: str) -> Expansion:
        return expand_expression(self, raw_title)


def _parse_levels(cell: str, taxonomy: Taxonomy, lineno: int, path) -> LabelSet:
    names = [n.strip() for n in cell.split(";") if n.strip()]
    if not names:
        raise FormatError("entry has no levels", lineno, path)
    ids = set()
    for name in names:
        try:
            ids.add(taxonomy.parse_level(name).id)
        except UnknownLevel:
            raise UnknownLevel(f"{name} (line {lineno})") from None
    return LabelSet(frozenset(ids), 1)


def parse_db(text: str, taxonomy: Taxonomy | None = None, path=None) -> AbbrevDb:
    taxonomy = taxonomy or default_taxonomy()
    entries = []
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.rstrip("\r\n").split("\t")
        if not header_seen:
            if [c.strip().lower() for c in cells[:3]] != HEADER[:3]:
                raise FormatError("missing header 'abbreviation<TAB>expansion<TAB>levels<TAB>source'",
                                  lineno, path)
            header_seen = True
            continue
        if len(cells) < 3 or len(cells) > 4:
            raise FormatError(f"expected 3 or 4 tab-separated fields, got {len(cells)}", lineno, path)
        abbr, expansion, levels = (c.strip() for c in cells[:3])
        source = cells[3].strip() if len(cells) == 4 else ""
        if not abbr or not canonical_key(abbr):
            raise FormatError("empty abbreviation", lineno, path)
        if not expansion:
            raise FormatError("empty expansion", lineno, path)
        entries.append(AbbrevEntry(abbr, expansion.upper(), _parse_levels(levels, taxonomy, lineno, path),
                                   source))
    if not header_seen:
        raise FormatError("missing header", None, path)
    return AbbrevDb(entries)


def load_db(path: str | Path | None = None, taxonomy: Taxonomy | None = None) -> AbbrevDb:
    """Read a DB TSV file; the shipped seed database when ``path`` is None."""
    if path is None:
        text = resources.files(__package__).joinpath("data/abbreviations.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_db(text, taxonomy, path)


def expand_expression(db: AbbrevDb, raw_title: str) -> Expansion:
    """Replace abbreviations in ``raw_title`` by their expansions.

    Tokens are split on whitespace and slash. Runs of up to MAX_SPAN_TOKENS
    consecutive tokens are tried longest first against the canonical-key
    index, so "ASN TO BSN" and spaced forms like "A S" match as one unit.
    Keys whose entries disagree on the expansion are left in place and
    reported as ambiguous.
    """
    parts = _SPLIT.split(raw_title)
    tokens = []  # (text, start, end, key)
    pos = 0
    for i, part in enumerate(parts):
        if i % 2 == 0 and part:
            tokens.append((part, pos, pos + len(part), canonical_key(part)))
        pos += len(part)

    max_span = min(MAX_SPAN_TOKENS, db._max_key)
    out = []
    spans = []
    cursor = 0  # raw position copied so far
    out_len = 0
    i = 0
    while i < len(tokens):
        match = None
        if tokens[i][3]:
            for n in range(min(max_span, len(tokens) - i), 0, -1):
                if not tokens[i + n - 1][3]:
                    continue
                key = "".join(t[3] for t in tokens[i:i + n])
                if len(key) > db._max_key:
                    continue
                found = db.index.get(key)
                if found:
                    match = (n, found)
                    break
        if match is None:
            i += 1
            continue
        n, found = match
        start, end = tokens[i][1], tokens[i + n - 1][2]
        source = raw_title[start:end]
        prefix = raw_title[cursor:start]
        out.append(prefix)
        out_len += len(prefix)
        expansions = {e.expansion for e in found}
        ambiguous = len(expansions) > 1
        replacement = source if ambiguous else found[0].expansion
        out.append(replacement)
        spans.append(Substitution(start, end, source, replacement, out_len, out_len + len(replacement),
                                  tuple(found), ambiguous))
        out_len += len(replacement)
        cursor = end
        i += n
    out.append(raw_title[cursor:])
    return Expansion("".join(out), spans)
