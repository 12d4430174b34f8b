"""Title normalization: tokenizing, spell correction, stop words, lemmas."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Iterable, Mapping

from .abbrevdb import AbbrevDb, canonical_key, expand_expression
from .errors import FormatError, InvalidDistance

WORD, SURVIVOR, NUMBER, ARTIFACT = "word", "abbreviation-survivor", "number", "punctuation-artifact"
RAW, EXPANDED, CORRECTED, LEMMATIZED = "raw", "db-expansion", "spell-corrected", "lemmatized"

# separators between tokens; anything else non-alphanumeric is stripped inside a token
_TOKEN_SPLIT = re.compile(r"[\s/,;&+()\[\]\-]+")


@dataclass(frozen=True)
class Token:
    text: str
    kind: str = WORD
    origin: str = RAW


def tokenize(raw: str, origin: str = RAW) -> list[Token]:
    """Uppercase and split a title; "A.S." becomes the single token "AS"."""
    tokens = []
    for piece in _TOKEN_SPLIT.split(raw.upper()):
        text = canonical_key(piece)
        if not text:
            continue  # punctuation artifact
        kind = NUMBER if text.isdigit() else WORD
        tokens.append(Token(text, kind, origin))
    return tokens


# -- spell correction -------------------------------------------------------

def osa_distance(a: str, b: str) -> int:
    """Optimal-string-alignment Damerau-Levenshtein distance."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    prev2 = None
    prev = list(range(lb + 1))
    for i in range(1, la + 1):
        cur = [i] + [0] * lb
        ca = a[i - 1]
        for j in range(1, lb + 1):
            cost = 0 if ca == b[j - 1] else 1
            v = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost)
            if i > 1 and j > 1 and ca == b[j - 2] and a[i - 2] == b[j - 1]:
                v = min(v, prev2[j - 2] + 1)
            cur[j] = v
        prev2, prev = prev, cur
    return prev[lb]


def deletes(word: str, max_distance: int) -> set[str]:
    """All strings reachable from ``word`` by at most ``max_distance`` deletions."""
    out = {word}
    n = len(word)
    for d in range(1, min(max_distance, n) + 1):
        for drop in combinations(range(n), d):
            out.add("".join(c for i, c in enumerate(word) if i not in drop))
    return out


@dataclass
class SpellIndex:
    dictionary: dict[str, int]
    delete_index: dict[str, list[str]]
    max_edit_distance: int

    def __post_init__(self):
        self._cache: dict[str, tuple[str, int] | None] = {}

    def __contains__(self, word):
        return word in self.dictionary

    def lookup(self, word: str) -> tuple[str, int] | None:
        """Closest dictionary word and its distance, or None beyond the limit.

        Ties go to the more frequent word, then the lexicographically smaller.
        """
        if word in self._cache:
            return self._cache[word]
        if word in self.dictionary:
            best = (word, 0)
        else:
            best = None
            best_rank = None
            seen = set()
            for variant in deletes(word, self.max_edit_distance):
                for cand in self.delete_index.get(variant, ()):
                    if cand in seen:
                        continue
                    seen.add(cand)
                    if abs(len(cand) - len(word)) > self.max_edit_distance:
                        continue
                    d = osa_distance(word, cand)
                    if d > self.max_edit_distance:
                        continue
                    rank = (d, -self.dictionary[cand], cand)
                    if best_rank is None or rank < best_rank:
                        best_rank, best = rank, (cand, d)
        self._cache[word] = best
        return best


def build_spell_index(dictionary: Mapping[str, int], max_edit_distance: int = 2) -> SpellIndex:
    if max_edit_distance not in (0, 1, 2):
        raise InvalidDistance(f"max_edit_distance must be 0, 1 or 2, got {max_edit_distance!r}")
    words = {}
    for word, freq in dictionary.items():
        if freq <= 0:
            raise ValueError(f"frequency of {word!r} must be positive")
        words[word] = int(freq)
    index: dict[str, list[str]] = {}
    for word in sorted(words):
        for variant in deletes(word, max_edit_distance):
            index.setdefault(variant, []).append(word)
    return SpellIndex(words, index, max_edit_distance)


def correct_token(index: SpellIndex, token: Token, protected: Iterable[str] = ()) -> Token:
    if token.kind == NUMBER or token.text in protected or token.text in index.dictionary:
        return token
    hit = index.lookup(token.text)
    if hit is None:
        return Token(token.text, SURVIVOR, token.origin)
    return Token(hit[0], WORD, CORRECTED)


def strip_stop_words(tokens: list[Token], stop: Iterable[str], protected: Iterable[str] = ()) -> list[Token]:
    drop = set(stop) - set(protected)
    return [t for t in tokens if t.text not in drop]


def lemmatize(lemma_table: Mapping[str, str], token: Token) -> Token:
    lemma = lemma_table.get(token.text)
    if lemma is None or lemma == token.text:
        return token
    return Token(lemma, token.kind, LEMMATIZED)


# -- whole chain ------------------------------------------------------------

@dataclass(frozen=True)
class AuditRecord:
    """One transformation. ``position`` is a raw-string offset for ``expand``
    and an index into the token list of that stage otherwise."""

    stage: str
    position: int
    before: str
    after: str


@dataclass(frozen=True)
class NormalizedTitle:
    raw: str
    tokens: tuple[Token, ...]
    audit: tuple[AuditRecord, ...] = ()
    expanded: str = ""

    @property
    def words(self) -> tuple[str, ...]:
        return tuple(t.text for t in self.tokens)

    def replay(self) -> tuple[Token, ...]:
        """Rebuild the token list from ``raw`` using the audit trail alone."""
        pieces, origins, cursor = [], [], 0
        for rec in (r for r in self.audit if r.stage == "expand"):
            pieces.append(self.raw[cursor:rec.position])
            origins.append(RAW)
            pieces.append(rec.after)
            origins.append(EXPANDED)
            cursor = rec.position + len(rec.before)
        pieces.append(self.raw[cursor:])
        origins.append(RAW)
        tokens = [t for p, o in zip(pieces, origins) for t in tokenize(p, o)]
        for rec in self.audit:
            if rec.stage == "spell":
                tokens[rec.position] = Token(rec.after, WORD, CORRECTED)
            elif rec.stage == "survivor":
                t = tokens[rec.position]
                tokens[rec.position] = Token(t.text, SURVIVOR, t.origin)
        dropped = {r.position for r in self.audit if r.stage == "stop"}
        tokens = [t for i, t in enumerate(tokens) if i not in dropped]
        for rec in self.audit:
            if rec.stage == "lemma":
                t = tokens[rec.position]
                tokens[rec.position] = Token(rec.after, t.kind, LEMMATIZED)
        return tuple(tokens)


def normalize_title(raw: str, db: AbbrevDb | None, index: SpellIndex | None,
                    stop: Iterable[str], protected: Iterable[str],
                    lemma_table: Mapping[str, str], *, min_correct_len: int = 4) -> NormalizedTitle:
    """Expand, tokenize, spell-correct, drop stop words and lemmatize.

    ``db`` or ``index`` may be None to skip that stage. Tokens shorter than
    ``min_correct_len`` are never spell-corrected.
    """
    protected = set(protected)
    audit = []
    if db is not None:
        expansion = expand_expression(db, raw)
        text = expansion.text
        tokens, cursor = [], 0
        for sub in expansion.spans:
            tokens += tokenize(text[cursor:sub.out_start])
            if sub.ambiguous:
                tokens += tokenize(sub.replacement)
            else:
                tokens += tokenize(sub.replacement, EXPANDED)
                audit.append(AuditRecord("expand", sub.start, sub.source, sub.replacement))
            cursor = sub.out_end
        tokens += tokenize(text[cursor:])
    else:
        text = raw
        tokens = tokenize(raw)

    if index is not None:
        for i, tok in enumerate(tokens):
            if len(tok.text) < min_correct_len:
                continue
            fixed = correct_token(index, tok, protected)
            if fixed.text != tok.text:
                audit.append(AuditRecord("spell", i, tok.text, fixed.text))
            elif fixed.kind != tok.kind:
                audit.append(AuditRecord("survivor", i, tok.text, tok.text))
            tokens[i] = fixed

    drop = set(stop) - protected
    kept = []
    for i, tok in enumerate(tokens):
        if tok.text in drop:
            audit.append(AuditRecord("stop", i, tok.text, ""))
        else:
            kept.append(tok)

    out = []
    for i, tok in enumerate(kept):
        new = lemmatize(lemma_table, tok)
        if new is not tok:
            audit.append(AuditRecord("lemma", i, tok.text, new.text))
        out.append(new)
    return NormalizedTitle(raw, tuple(out), tuple(audit), text)


# -- resource files ---------------------------------------------------------

def _read_text(path, default_name):
    if path is None:
        return resources.files(__package__).joinpath("data/" + default_name).read_text("utf-8"), default_name
    return Path(path).read_text(encoding="utf-8"), path


def load_word_list(path=None, default_name="stopwords.txt") -> set[str]:
    """One token per line; ``#`` starts a comment line."""
    text, _ = _read_text(path, default_name)
    return {line.strip().upper() for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")}


def load_stop_words(path=None) -> set[str]:
    return load_word_list(path, "stopwords.txt")


def load_protected(path=None) -> set[str]:
    return {canonical_key(w) for w in load_word_list(path, "protected.txt")} - {""}


def load_lemmas(path=None) -> dict[str, str]:
    text, where = _read_text(path, "lemmas.tsv")
    table = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split("\t")
        if len(cells) != 2:
            raise FormatError("expected 'word<TAB>lemma'", lineno, where)
        word, lemma = cells[0].strip().upper(), cells[1].strip().upper()
        if (word, lemma) == ("WORD", "LEMMA"):
            continue
        table[word] = lemma
    return table


def build_dictionary(db: AbbrevDb, lemma_table: Mapping[str, str], stop: Iterable[str],
                     titles: Iterable[str] = (), min_corpus_count: int = 3) -> dict[str, int]:
    """Word frequencies for the spell index.

    Words come from DB expansions, the lemma table and stop words, plus any
    corpus word seen at least ``min_corpus_count`` times; frequency is the
    corpus count, floored at 1.
    """
    counts = Counter()
    for title in titles:
        counts.update(t.text for t in tokenize(expand_expression(db, title).text) if t.kind == WORD)
    vocab = set(stop)
    for entry in db.entries:
        vocab.update(t.text for t in tokenize(entry.expansion))
    vocab.update(lemma_table)
    vocab.update(lemma_table.values())
    vocab.update(w for w, c in counts.items() if c >= min_corpus_count)
    return {w: max(1, counts.get(w, 0)) for w in vocab if w and not w.isdigit()}


@dataclass
class Preprocessor:
    """Bundles the normalization resources; caches results per raw title."""

    db: AbbrevDb | None
    spell: SpellIndex | None
    stop: frozenset
    protected: frozenset
    lemmas: Mapping[str, str]
    min_correct_len: int = 4
    _cache: dict = field(default_factory=dict, repr=False)

    def __call__(self, raw: str) -> NormalizedTitle:
        hit = self._cache.get(raw)
        if hit is None:
            hit = normalize_title(raw, self.db, self.spell, self.stop, self.protected, self.lemmas,
                                  min_correct_len=self.min_correct_len)
            self._cache[raw] = hit
        return hit
