"""Prefix/keyword rule baseline in the style of hand-written title parsers.

The default table deliberately reproduces the "leading A means Associate"
behaviour so the hybrid pipeline has something realistic to beat.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .abbrevdb import canonical_key
from .errors import FormatError
from .taxonomy import LabelSet, Taxonomy, default_taxonomy


@dataclass(frozen=True)
class RuleTable:
    prefix_rules: tuple[tuple[str, int], ...]
    keyword_rules: tuple[tuple[str, int], ...]
    default: int


def load_rules(path: str | Path | None = None, taxonomy: Taxonomy | None = None) -> RuleTable:
    taxonomy = taxonomy or default_taxonomy()
    if path is None:
        text = resources.files(__package__).joinpath("data/rules.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    prefixes, keywords, default = [], [], None
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = [c.strip() for c in line.split("\t")]
        if len(cells) != 3:
            raise FormatError("expected 'kind<TAB>pattern<TAB>level'", lineno, path)
        kind, pattern, level = cells
        if not header_seen and kind.lower() == "kind":
            header_seen = True
            continue
        level_id = taxonomy.parse_level(level).id
        if kind == "prefix":
            prefixes.append((canonical_key(pattern), level_id))
        elif kind == "keyword":
            keywords.append((canonical_key(pattern), level_id))
        elif kind == "default":
            default = level_id
        else:
            raise FormatError(f"unknown rule kind {kind!r}", lineno, path)
    if default is None:
        default = taxonomy.parse_level("Certificate<1yr").id
    return RuleTable(tuple(prefixes), tuple(keywords), default)


def classify_rules(rules: RuleTable, expression: str) -> LabelSet:
    key = canonical_key(expression)
    for pattern, level in rules.keyword_rules:
        if pattern and pattern in key:
            return LabelSet(frozenset({level}), 1)
    for pattern, level in rules.prefix_rules:
        if key.startswith(pattern):
            return LabelSet(frozenset({level}), 1)
    return LabelSet(frozenset({rules.default}), 1)
