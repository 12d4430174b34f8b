"""Degree levels, multi-label sets and the graded coarsenings.

Grade 1 holds the thirteen fine-grained levels; each further grade merges
categories of the previous one. Coarse categories are numbered by rank, so at
grades 2-4 a category's id equals its rank.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable

from .errors import EmptyLabelSet, FormatError, InvalidDirection, UnknownLevel

GRADES = (1, 2, 3, 4)


@dataclass(frozen=True)
class DegreeLevel:
    id: int
    name: str
    order_rank: int


@dataclass(frozen=True)
class LabelSet:
    members: frozenset
    grade: int = 1

    def __post_init__(self):
        object.__setattr__(self, "members", frozenset(int(m) for m in self.members))

    def __iter__(self):
        return iter(sorted(self.members))

    def __len__(self):
        return len(self.members)

    def __contains__(self, item):
        return item in self.members


def _name_key(name: str) -> str:
    return re.sub(r"[^0-9a-z<]", "", name.casefold())


class Taxonomy:
    """Category names, ranks and coarsening maps for all grades."""

    def __init__(self, levels: list[DegreeLevel], steps: dict[int, list[tuple[str, str]]]):
        ids = sorted(l.id for l in levels)
        if ids != list(range(len(levels))):
            raise FormatError("level ids must be dense from 0")
        ranks = [l.order_rank for l in levels]
        if len(set(ranks)) != len(ranks):
            raise FormatError("level ranks must be distinct")
        self.levels = tuple(sorted(levels, key=lambda l: l.id))
        self._names = {1: tuple(l.name for l in self.levels)}
        # dense 0..n-1 ranks per grade
        order = sorted(range(len(levels)), key=lambda i: self.levels[i].order_rank)
        self._ranks = {1: tuple(order.index(i) for i in range(len(levels)))}
        self._step = {}
        for grade in GRADES[1:]:
            rows = steps.get(grade)
            if not rows:
                raise FormatError(f"no coarsening rows for grade {grade}")
            self._build_step(grade, rows)
        self._maps = {}
        for g in GRADES:
            self._maps[(g, g)] = tuple(range(self.category_count(g)))
            for h in GRADES:
                if h > g:
                    prev = self._maps[(g, h - 1)]
                    self._maps[(g, h)] = tuple(self._step[h][c] for c in prev)

    def _build_step(self, grade: int, rows: list[tuple[str, str]]):
        src_names = self._names[grade - 1]
        src_ranks = self._ranks[grade - 1]
        lookup = {_name_key(n): i for i, n in enumerate(src_names)}
        target_of = {}
        for src, dst in rows:
            key = _name_key(src)
            if key not in lookup:
                raise FormatError(f"grade{grade}: unknown grade-{grade - 1} category {src!r}")
            if lookup[key] in target_of:
                raise FormatError(f"grade{grade}: duplicate row for {src!r}")
            target_of[lookup[key]] = dst.strip()
        missing = [src_names[i] for i in range(len(src_names)) if i not in target_of]
        if missing:
            raise FormatError(f"grade{grade}: no mapping for {missing}")
        # order targets by the lowest rank they absorb
        first_rank = {}
        for i, dst in target_of.items():
            first_rank[dst] = min(first_rank.get(dst, src_ranks[i]), src_ranks[i])
        targets = sorted(first_rank, key=first_rank.get)
        tid = {name: k for k, name in enumerate(targets)}
        step = tuple(tid[target_of[i]] for i in range(len(src_names)))
        by_rank = sorted(range(len(src_names)), key=lambda i: src_ranks[i])
        mapped = [step[i] for i in by_rank]
        if mapped != sorted(mapped):
            raise FormatError(
                f"grade{grade}: merged categories must be contiguous in rank order"
            )
        self._names[grade] = tuple(targets)
        self._ranks[grade] = tuple(range(len(targets)))
        self._step[grade] = step

    def category_count(self, grade: int) -> int:
        return len(self._names[_check_grade(grade)])

    def category_names(self, grade: int) -> tuple[str, ...]:
        return self._names[_check_grade(grade)]

    def rank(self, category: int, grade: int = 1) -> int:
        return self._ranks[_check_grade(grade)][category]

    def mapping(self, grade_from: int, grade_to: int) -> tuple[int, ...]:
        if grade_to < grade_from:
            raise InvalidDirection(f"cannot refine grade {grade_from} to grade {grade_to}")
        return self._maps[(_check_grade(grade_from), _check_grade(grade_to))]

    def parse_level(self, name: str) -> DegreeLevel:
        key = _name_key(name)
        for level in self.levels:
            if _name_key(level.name) == key:
                return level
        raise UnknownLevel(name)

    def category_id(self, name: str, grade: int = 1) -> int:
        key = _name_key(name)
        for i, n in enumerate(self.category_names(grade)):
            if _name_key(n) == key:
                return i
        raise UnknownLevel(name)

    def labelset(self, names: Iterable[str], grade: int = 1) -> LabelSet:
        return LabelSet(frozenset(self.category_id(n, grade) for n in names), grade)

    def names_of(self, labels: LabelSet) -> list[str]:
        names = self.category_names(labels.grade)
        return [names[i] for i in sorted(labels.members, key=lambda c: self.rank(c, labels.grade))]

    def format_labels(self, labels: LabelSet) -> str:
        return ";".join(self.names_of(labels))

    def collapse(self, labels: LabelSet, target: int) -> LabelSet:
        if target < labels.grade:
            raise InvalidDirection(f"cannot refine grade {labels.grade} to grade {target}")
        m = self.mapping(labels.grade, target)
        return LabelSet(frozenset(m[c] for c in labels.members), target)

    def highest_level(self, labels: LabelSet) -> int:
        if not labels.members:
            raise EmptyLabelSet("label set is empty")
        return max(labels.members, key=lambda c: self.rank(c, labels.grade))


def _check_grade(grade: int) -> int:
    if grade not in GRADES:
        raise InvalidDirection(f"grade must be one of {GRADES}, got {grade!r}")
    return grade


_LEVEL_RE = re.compile(r"^\s*(\d+)\s*\|\s*(.+?)\s*\|\s*(-?\d+)\s*$")
_STEP_RE = re.compile(r"^grade([234])\s*:\s*(.+?)\s*->\s*(.+?)\s*$")


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    """Parse a taxonomy config file; the shipped default when ``path`` is None."""
    if path is None:
        text = resources.files(__package__).joinpath("data/taxonomy.cfg").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    levels: list[DegreeLevel] = []
    steps: dict[int, list[tuple[str, str]]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            continue
        if section == "levels":
            key, sep, value = line.partition("=")
            m = _LEVEL_RE.match(value)
            if not sep or key.strip() != "level" or not m:
                raise FormatError(f"bad level row {line!r}", lineno, path)
            levels.append(DegreeLevel(int(m.group(1)), m.group(2), int(m.group(3))))
        elif section == "coarsening":
            m = _STEP_RE.match(line)
            if not m:
                raise FormatError(f"bad coarsening row {line!r}", lineno, path)
            steps.setdefault(int(m.group(1)), []).append((m.group(2), m.group(3)))
        elif section is None and "=" in line:
            continue  # top-level settings such as version
        else:
            raise FormatError(f"unexpected line {line!r}", lineno, path)
    try:
        return Taxonomy(levels, steps)
    except FormatError as exc:
        raise FormatError(str(exc), None, path) from None


@lru_cache(maxsize=1)
def default_taxonomy() -> Taxonomy:
    return load_taxonomy()
