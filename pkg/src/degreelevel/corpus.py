"""Corpus CSV ingestion and a seeded synthetic generator of noisy degree titles."""

from __future__ import annotations

import csv
import logging
import math
import re
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .abbrevdb import AbbrevDb, AbbrevEntry, canonical_key
from .errors import EmptyDb, FormatError, InvalidConfig, UnknownLevel
from .neural import FeatureVector
from .taxonomy import LabelSet, Taxonomy, default_taxonomy

log = logging.getLogger(__name__)

CSV_HEADER = ["degree_title", "program_years", "semesters_completed", "labels"]
INGESTED, SYNTHETIC = "ingested", "synthetic"
_GRADE_DIRECTIVE = re.compile(r"^#\s*grade\s*=\s*(\d+)\s*$")


@dataclass(frozen=True)
class DegreeRecord:
    raw_title: str
    program_years: float | None
    semesters_completed: float | None
    gold: LabelSet | None
    provenance: str = INGESTED
    flagged: bool = False

    @property
    def features(self) -> FeatureVector:
        return FeatureVector(self.program_years, self.semesters_completed)

    @property
    def usable(self) -> bool:
        return not self.flagged and self.gold is not None and len(self.gold) > 0


# -- CSV ----------------------------------------------------------------------

def _number(cell: str, row: int, path, column: str) -> float | None:
    cell = cell.strip()
    if not cell:
        return None
    try:
        value = float(cell)
    except ValueError:
        raise FormatError(f"{column}: not a number: {cell!r}", row, path) from None
    if not math.isfinite(value) or value < 0:
        raise FormatError(f"{column}: must be a finite value >= 0, got {cell!r}", row, path)
    return value


def corpus_grade(path: str | Path) -> int:
    """Grade declared by a leading ``#grade=N`` line; 1 when absent."""
    with open(path, encoding="utf-8", newline="") as f:
        first = f.readline().strip()
    m = _GRADE_DIRECTIVE.match(first)
    return int(m.group(1)) if m else 1


def load_corpus(path: str | Path, taxonomy: Taxonomy | None = None,
                require_labels: bool = False) -> list[DegreeRecord]:
    """Parse a corpus CSV.

    Rows whose label cell is empty or names an unknown level are kept but
    flagged (``usable`` is False) and reported with a warning. With
    ``require_labels`` the labels column must exist.
    """
    taxonomy = taxonomy or default_taxonomy()
    grade = corpus_grade(path)
    records, flagged = [], 0
    with open(path, encoding="utf-8", newline="") as f:
        lines = [line for line in f if not _GRADE_DIRECTIVE.match(line.strip())]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise FormatError("empty corpus file", 1, path)
    header = [h.strip().lower() for h in header]
    if header[:3] != CSV_HEADER[:3] or (len(header) > 3 and header[3] != "labels"):
        raise FormatError("header must be " + ",".join(CSV_HEADER), 1, path)
    has_labels = len(header) == 4
    if require_labels and not has_labels:
        raise FormatError("corpus has no labels column", 1, path)
    for row_no, row in enumerate(reader, 2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise FormatError(f"expected {len(header)} fields, got {len(row)}", row_no, path)
        title = row[0].strip()
        if not title:
            raise FormatError("empty degree title", row_no, path)
        years = _number(row[1], row_no, path, "program_years")
        sems = _number(row[2], row_no, path, "semesters_completed")
        gold, bad = None, not has_labels
        if has_labels:
            names = [n.strip() for n in row[3].split(";") if n.strip()]
            try:
                gold = taxonomy.labelset(names, grade) if names else None
            except UnknownLevel as exc:
                log.warning("row %d: unknown label %s; excluded", row_no, exc)
            if gold is None or len(gold) == 0:
                gold, bad = None, True
                if names == []:
                    log.warning("row %d: empty labels (missing); excluded", row_no)
        flagged += bad and has_labels
        records.append(DegreeRecord(title, years, sems, gold, INGESTED, bad))
    log.info("loaded %d rows from %s (%d excluded)", len(records), path, flagged)
    return records


def _fmt_num(v: float | None) -> str:
    if v is None:
        return ""
    return repr(float(v)) if v != int(v) else str(int(v))


def write_corpus(records: Sequence[DegreeRecord], path: str | Path,
                 taxonomy: Taxonomy | None = None, grade: int | None = None) -> None:
    """Write records in the corpus CSV format; grades above 1 are declared
    by a leading ``#grade=N`` line."""
    taxonomy = taxonomy or default_taxonomy()
    grades = {r.gold.grade for r in records if r.gold is not None}
    if grade is not None:
        grades.add(grade)
    if len(grades) > 1:
        raise ValueError("records mix label grades")
    grade = grades.pop() if grades else 1
    with open(path, "w", encoding="utf-8", newline="") as f:
        if grade != 1:
            f.write(f"#grade={grade}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            labels = taxonomy.format_labels(r.gold) if r.gold is not None else ""
            w.writerow([r.raw_title, _fmt_num(r.program_years), _fmt_num(r.semesters_completed), labels])


def regrade(records: Sequence[DegreeRecord], target: int, taxonomy: Taxonomy | None = None) -> list[DegreeRecord]:
    taxonomy = taxonomy or default_taxonomy()
    out = []
    for r in records:
        gold = taxonomy.collapse(r.gold, target) if r.gold is not None else None
        out.append(DegreeRecord(r.raw_title, r.program_years, r.semesters_completed, gold,
                                r.provenance, r.flagged))
    return out


# -- noise --------------------------------------------------------------------

MAJOR_SUFFIXES = ("IN NURSING", "CERTIFICATE (PSVC)", "IN BUSINESS", "IN EDUCATION", "IN ACCOUNTING",
                  "IN COMPUTER SCIENCE", "IN PSYCHOLOGY", "IN CRIMINAL JUSTICE", "IN GENERAL STUDIES",
                  "IN BIOLOGY", "IN MANAGEMENT")
SLASH_QUALIFIERS = ("MRP", "CIS", "BUS", "NURS", "ACCT", "GEN", "TRANSFER")
SPANISH_TITLES = (("BACHILLERATO EN ADM DE EMPRESA", "Bachelor"),
                  ("BACHILLERATO EN CIENCIAS", "Bachelor"),
                  ("LICENCIATURA EN EDUCACION", "Bachelor"),
                  ("MAESTRIA EN ADMINISTRACION DE EMPRESAS", "Master"),
                  ("DOCTORADO EN CIENCIAS", "Doctorate-Research"),
                  ("GRADO ASOCIADO EN ENFERMERIA", "Associate"))
JOINED_DESIGNATIONS = (("DTA/MRP", "Associate"), ("AST/MRP", "Associate"))

# nominal program length in years per grade-1 level
NOMINAL_YEARS = {"Certificate<1yr": 0.5, "Certificate1-2yr": 1.5, "Certificate2-4yr": 3.0, "Diploma": 1.0,
                 "Associate": 2.0, "Bachelor": 4.0, "Post-Baccalaureate Certificate": 1.0, "Master": 2.0,
                 "Specialist": 3.0, "Post-Master Certificate": 1.0, "Doctorate-Research": 5.0,
                 "Doctorate-Professional": 4.0, "Doctorate-Other": 4.0}


@dataclass
class NoiseConfig:
    """Per-operator probabilities plus generator mix settings."""

    punctuation_insert: float = 0.3
    space_insert: float = 0.1
    star_prefix: float = 0.05
    abbreviate: float = 0.1
    typo: float = 0.15
    major_suffix: float = 0.2
    slash_join: float = 0.1
    multi_degree_join: float = 0.05
    abbreviation_render: float = 0.6
    spanish_rate: float = 0.02
    joined_designation_rate: float = 0.005
    missing_rate: float = 0.1
    associate_share: float = 0.4
    bachelor_share: float = 0.3
    rng_seed: int = 42

    def __post_init__(self):
        for f in fields(self):
            if f.name == "rng_seed":
                continue
            v = getattr(self, f.name)
            if not 0.0 <= v <= 1.0:
                raise InvalidConfig(f"{f.name} must lie in [0, 1], got {v!r}")
        if self.associate_share + self.bachelor_share > 1.0:
            raise InvalidConfig("associate_share + bachelor_share must not exceed 1")

    @classmethod
    def silent(cls, **overrides) -> "NoiseConfig":
        """All perturbation operators off."""
        base = dict(punctuation_insert=0.0, space_insert=0.0, star_prefix=0.0, abbreviate=0.0, typo=0.0,
                    major_suffix=0.0, slash_join=0.0, multi_degree_join=0.0)
        base.update(overrides)
        return cls(**base)


_ABBREV_TOKEN = re.compile(r"^[A-Z]{2,6}$")


def _is_abbrev(token: str, db: AbbrevDb | None) -> bool:
    if not _ABBREV_TOKEN.match(token):
        return False
    return db is None or token in db.index


def _dot(token: str) -> str:
    return ".".join(token) + "."


def _typo(word: str, rng: np.random.Generator) -> str:
    letters = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    i = int(rng.integers(len(word)))
    op = int(rng.integers(4))
    if op == 0:
        return word[:i] + word[i + 1:]
    if op == 1:
        return word[:i] + letters[rng.integers(26)] + word[i:]
    if op == 2:
        repl = letters[rng.integers(26)]
        return word[:i] + repl + word[i + 1:]
    if i == len(word) - 1:
        i -= 1
    return word[:i] + word[i + 1] + word[i] + word[i + 2:]


def shorthand_map(db: AbbrevDb | None) -> dict[str, str]:
    """Full word -> short-hand spelling, from single-word short-hand entries."""
    out = {}
    if db is None:
        return out
    for e in db.entries:
        if e.source == "short-hand" and " " not in e.expansion and e.expansion not in out:
            out[e.expansion] = canonical_key(e.abbreviation)
    return out


def perturb_traced(expression: str, cfg: NoiseConfig, rng: np.random.Generator,
                   db: AbbrevDb | None = None, partner: str | None = None) -> tuple[str, list[str]]:
    """Apply each operator independently with its probability.

    Returns the new text and the names of the operators that fired. The
    multi-degree join needs a ``partner`` title and is skipped without one.
    """
    ops = []
    tokens = expression.split(" ")

    if cfg.abbreviate and rng.random() < cfg.abbreviate:
        short = shorthand_map(db)
        hits = [i for i, t in enumerate(tokens) if t in short]
        if hits:
            i = hits[int(rng.integers(len(hits)))]
            tokens[i] = short[tokens[i]]
            ops.append("abbreviate")

    if cfg.typo and rng.random() < cfg.typo:
        hits = [i for i, t in enumerate(tokens) if len(t) >= 5 and t.isalpha()]
        if hits:
            i = hits[int(rng.integers(len(hits)))]
            tokens[i] = _typo(tokens[i], rng)
            ops.append("typo")

    abbrev_idx = [i for i, t in enumerate(tokens) if _is_abbrev(t, db)]
    if abbrev_idx and cfg.punctuation_insert and rng.random() < cfg.punctuation_insert:
        for i in abbrev_idx:
            tokens[i] = _dot(tokens[i])
        ops.append("punctuation-insert")
    if abbrev_idx and cfg.space_insert and rng.random() < cfg.space_insert:
        t = tokens[abbrev_idx[0]]
        # "AS" -> "A S", "A.S." -> "A. S."
        tokens[abbrev_idx[0]] = ". ".join(t[:-1].split(".")) + "." if t.endswith(".") else " ".join(t)
        ops.append("space-insert")

    text = " ".join(tokens)
    if cfg.slash_join and rng.random() < cfg.slash_join:
        text = f"{text}/{SLASH_QUALIFIERS[int(rng.integers(len(SLASH_QUALIFIERS)))]}"
        ops.append("slash-join")
    if cfg.major_suffix and rng.random() < cfg.major_suffix:
        text = f"{text} {MAJOR_SUFFIXES[int(rng.integers(len(MAJOR_SUFFIXES)))]}"
        ops.append("major-suffix")
    if cfg.star_prefix and rng.random() < cfg.star_prefix:
        text = ("*" if rng.random() < 0.5 else ".") + text
        ops.append("star-prefix")
    if partner is not None and cfg.multi_degree_join and rng.random() < cfg.multi_degree_join:
        text = text + ("/" if rng.random() < 0.5 else " AND ") + partner
        ops.append("multi-degree-join")
    return text, ops


def perturb(expression: str, cfg: NoiseConfig, rng: np.random.Generator,
            db: AbbrevDb | None = None, partner: str | None = None) -> str:
    return perturb_traced(expression, cfg, rng, db, partner)[0]


# -- generator --------------------------------------------------------------------

def _pools(db: AbbrevDb, taxonomy: Taxonomy) -> dict[int, list[AbbrevEntry]]:
    pools: dict[int, list[AbbrevEntry]] = {}
    for e in db.entries:
        if e.source == "short-hand" or " " not in e.expansion:
            continue
        if len(db.index.get(e.key, ())) > 1 and len({x.expansion for x in db.index[e.key]}) > 1:
            continue  # an ambiguous key gives no recoverable gold
        for level in e.levels:
            pools.setdefault(level, []).append(e)
    return pools


def _level_weights(cfg: NoiseConfig, taxonomy: Taxonomy, available: Sequence[int]) -> np.ndarray:
    assoc = taxonomy.category_id("Associate")
    bach = taxonomy.category_id("Bachelor")
    rest = [l for l in available if l not in (assoc, bach)]
    w = np.zeros(len(available))
    for i, l in enumerate(available):
        if l == assoc:
            w[i] = cfg.associate_share
        elif l == bach:
            w[i] = cfg.bachelor_share
        else:
            w[i] = (1.0 - cfg.associate_share - cfg.bachelor_share) / max(len(rest), 1)
    return w / w.sum()


def _render(entry: AbbrevEntry, cfg: NoiseConfig, rng: np.random.Generator) -> str:
    if rng.random() < cfg.abbreviation_render:
        parts = re.split(r"(\s+|/)", entry.abbreviation.upper())
        return "".join(canonical_key(p) if i % 2 == 0 else p for i, p in enumerate(parts))
    return entry.expansion


def _features(gold: LabelSet, taxonomy: Taxonomy, cfg: NoiseConfig,
              rng: np.random.Generator) -> tuple[float | None, float | None]:
    nominal = max(NOMINAL_YEARS.get(taxonomy.levels[l].name, 2.0) for l in gold)
    years = max(0.25, nominal + 0.15 * nominal * rng.standard_normal())
    years = round(years * 4) / 4
    sems = max(0.0, round(2 * years + rng.normal(0.0, 1.0)))
    if rng.random() < cfg.missing_rate:
        years = None
    if rng.random() < cfg.missing_rate:
        sems = None
    return years, sems


def generate_synthetic(db: AbbrevDb, n: int, cfg: NoiseConfig | None = None,
                       taxonomy: Taxonomy | None = None) -> list[DegreeRecord]:
    """``n`` noisy titles whose gold labels come from the sampled DB entries.

    Deterministic given ``cfg.rng_seed``.
    """
    cfg = cfg or NoiseConfig()
    taxonomy = taxonomy or default_taxonomy()
    if n < 1:
        raise ValueError("n must be >= 1")
    if db is None or len(db) == 0:
        raise EmptyDb("cannot generate from an empty database")
    pools = _pools(db, taxonomy)
    if not pools:
        raise EmptyDb("database has no usable multi-word entries")
    levels = sorted(pools)
    weights = _level_weights(cfg, taxonomy, levels)
    rng = np.random.default_rng(cfg.rng_seed)

    def draw():
        level = levels[int(rng.choice(len(levels), p=weights))]
        pool = pools[level]
        return pool[int(rng.integers(len(pool)))]

    records = []
    for _ in range(n):
        u = rng.random()
        if u < cfg.spanish_rate:
            title, name = SPANISH_TITLES[int(rng.integers(len(SPANISH_TITLES)))]
            text, gold = title, taxonomy.labelset([name])
        elif u < cfg.spanish_rate + cfg.joined_designation_rate:
            title, name = JOINED_DESIGNATIONS[int(rng.integers(len(JOINED_DESIGNATIONS)))]
            text, gold = title, taxonomy.labelset([name])
        else:
            entry = draw()
            gold = entry.levels
            partner = None
            if cfg.multi_degree_join:
                other = draw()
                partner = perturb(_render(other, cfg, rng), NoiseConfig.silent(
                    punctuation_insert=cfg.punctuation_insert, rng_seed=cfg.rng_seed), rng, db)
            text, ops = perturb_traced(_render(entry, cfg, rng), cfg, rng, db, partner)
            if "multi-degree-join" in ops:
                gold = LabelSet(gold.members | other.levels.members, 1)
        years, sems = _features(gold, taxonomy, cfg, rng)
        records.append(DegreeRecord(text, years, sems, gold, SYNTHETIC))
    return records
