"""Word vectors with hashed character n-gram composition for unseen words."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionMismatch, FormatError

log = logging.getLogger(__name__)

DEFAULT_DIM = 50
DEFAULT_BUCKETS = 65536
DEFAULT_NGRAMS = (3, 5)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a_64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def ngram_bucket(ngram: str, buckets: int) -> int:
    return fnv1a_64(ngram.encode("utf-8")) % buckets


def ngrams(word: str, n_min: int = 3, n_max: int = 5, markers: bool = True) -> list[str]:
    """Contiguous substrings of length n_min..n_max, shortest first.

    With ``markers`` the word is wrapped in "<" and ">" before slicing.
    """
    if n_min < 1:
        raise ValueError("n_min must be >= 1")
    if not word:
        return []
    w = f"<{word}>" if markers else word
    out = []
    for n in range(n_min, n_max + 1):
        out.extend(w[i:i + n] for i in range(len(w) - n + 1))
    return out


@dataclass
class EmbeddingTable:
    """Trainable lookup: one row per known word plus B hashed n-gram rows."""

    dim: int
    words: list[str]
    word_vectors: np.ndarray
    ngram_vectors: np.ndarray
    n_min: int = DEFAULT_NGRAMS[0]
    n_max: int = DEFAULT_NGRAMS[1]
    subword: bool = True
    ngram_seed: int | None = None  # n-gram rows regenerable via ngram_init(seed, ...)
    _index: dict = field(default_factory=dict, repr=False)
    _rows: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.ngram_vectors.shape[0] < 1:
            raise ValueError("need at least one n-gram bucket")
        if not 1 <= self.n_min <= self.n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        if self.word_vectors.shape != (len(self.words), self.dim) or self.ngram_vectors.shape[1] != self.dim:
            raise DimensionMismatch("embedding matrices do not match dim")
        self._index = {w: i for i, w in enumerate(self.words)}

    @property
    def buckets(self) -> int:
        return self.ngram_vectors.shape[0]

    def __contains__(self, word):
        return word in self._index

    def vector(self, word: str) -> np.ndarray:
        return self.word_vectors[self._index[word]]

    def rows(self, token: str) -> tuple[int, np.ndarray]:
        """(word row or -1, n-gram bucket ids) used to embed ``token``."""
        hit = self._rows.get(token)
        if hit is None:
            row = self._index.get(token, -1)
            if row >= 0 or not self.subword:
                buckets = np.zeros(0, dtype=np.int64)
            else:
                buckets = np.array([ngram_bucket(g, self.buckets)
                                    for g in ngrams(token, self.n_min, self.n_max)], dtype=np.int64)
            hit = (row, buckets)
            self._rows[token] = hit
        return hit


def _init_rows(rng: np.random.Generator, n: int, dim: int, scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=(n, dim))


def ngram_init(seed: int, buckets: int, dim: int) -> np.ndarray:
    """Initial n-gram rows; depends only on (seed, buckets, dim)."""
    return _init_rows(np.random.default_rng([seed, 1]), buckets, dim, 1.0 / dim)


def read_vector_file(path: str | Path, dim: int) -> tuple[list[str], np.ndarray]:
    words, rows, seen = [], [], set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.rstrip("\n").split(" ")
            if not parts or not parts[0]:
                if line.strip():
                    raise FormatError("missing token", lineno, path)
                continue
            values = [p for p in parts[1:] if p]
            if lineno == 1 and len(values) == 1 and parts[0].isdigit():
                continue  # "count dim" header line
            if len(values) != dim:
                raise DimensionMismatch(f"expected {dim} values, got {len(values)}", lineno, path)
            try:
                row = [float(v) for v in values]
            except ValueError:
                raise FormatError("non-numeric vector component", lineno, path) from None
            word = parts[0].upper()
            if word in seen:
                continue  # case variants fold together; first one wins
            seen.add(word)
            words.append(word)
            rows.append(row)
    vectors = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return words, vectors


def load_vectors(path: str | Path, dim: int = DEFAULT_DIM, buckets: int = DEFAULT_BUCKETS,
                 n_min: int = DEFAULT_NGRAMS[0], n_max: int = DEFAULT_NGRAMS[1],
                 seed: int = 0) -> EmbeddingTable:
    words, vectors = read_vector_file(path, dim)
    return EmbeddingTable(dim, words, vectors, ngram_init(seed, buckets, dim), n_min, n_max,
                          ngram_seed=seed)


def build_table(vocab: Sequence[str], dim: int = DEFAULT_DIM, *, pretrained: EmbeddingTable | None = None,
                buckets: int = DEFAULT_BUCKETS, n_min: int = DEFAULT_NGRAMS[0], n_max: int = DEFAULT_NGRAMS[1],
                subword: bool = True, seed: int = 0) -> EmbeddingTable:
    """Table over ``vocab`` plus all pretrained words.

    Words without a pretrained vector get a seeded random one. The n-gram
    rows come from the pretrained table when given, else are seeded random.
    """
    rng = np.random.default_rng(seed)
    words = list(pretrained.words) if pretrained is not None else []
    known = set(words)
    extra = sorted(set(vocab) - known)
    rand = _init_rows(rng, len(extra), dim, 0.5 / np.sqrt(dim))
    if pretrained is not None:
        if pretrained.dim != dim:
            raise DimensionMismatch(f"pretrained vectors have dim {pretrained.dim}, expected {dim}")
        wv = np.vstack([pretrained.word_vectors, rand]) if extra else pretrained.word_vectors.copy()
        ng = pretrained.ngram_vectors.copy()
        ng_seed = pretrained.ngram_seed
    else:
        wv = rand
        ng, ng_seed = ngram_init(seed, buckets, dim), seed
    return EmbeddingTable(dim, words + extra, wv.reshape(len(words) + len(extra), dim), ng,
                          n_min, n_max, subword, ng_seed)


def embed_token(table: EmbeddingTable, token: str) -> np.ndarray:
    row, buckets = table.rows(token)
    if row >= 0:
        return table.word_vectors[row].copy()
    if len(buckets) == 0:
        return np.zeros(table.dim)
    return table.ngram_vectors[buckets].sum(axis=0)


@dataclass
class SequenceTensor:
    values: np.ndarray
    mask: np.ndarray
    valid_len: int
    truncated: bool = False


def embed_sequence(table: EmbeddingTable, tokens: Iterable, max_len: int) -> SequenceTensor:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    texts = [getattr(t, "text", t) for t in tokens]
    truncated = len(texts) > max_len
    if truncated:
        log.warning("sequence of %d tokens truncated to %d", len(texts), max_len)
        texts = texts[:max_len]
    values = np.zeros((max_len, table.dim))
    for i, t in enumerate(texts):
        values[i] = embed_token(table, t)
    mask = np.arange(max_len) < len(texts)
    return SequenceTensor(values, mask, len(texts), truncated)
