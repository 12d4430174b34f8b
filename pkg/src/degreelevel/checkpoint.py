"""Plain-text model checkpoints.

Layout, in this fixed order (one item per line)::

    degreelevel-checkpoint
    version=1
    grade=<int>
    config=<json object, sorted keys>
    meta=<json object, sorted keys>
    feature_stats.mean=<float> <float>
    feature_stats.std=<float> <float>
    vocabulary=<count>
    <one word per line>
    param <name> shape=<rows>,<cols>      dense block, one row per line
    ...
    param emb.ngrams shape=<B>,<dim> base=<seed> rows=<k>
    <row id> <values...>                  only rows that differ from the seeded init
    end

Values are written with 17 significant digits, which round-trips float64.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .embed import EmbeddingTable, ngram_init
from .errors import FormatError, VersionMismatch
from .neural import FeatureStats, Model, ModelConfig, weight_shapes

MAGIC = "degreelevel-checkpoint"
VERSION = 1


def _fmt(row) -> str:
    return " ".join("%.17g" % v for v in row)


def save(model: Model, path: str | Path, meta: dict | None = None) -> None:
    cfg, table = model.config, model.table
    lines = [MAGIC, f"version={VERSION}", f"grade={cfg.grade}",
             "config=" + json.dumps(_config_dict(cfg), sort_keys=True),
             "meta=" + json.dumps(meta or {}, sort_keys=True),
             "feature_stats.mean=" + _fmt(model.feature_stats.mean),
             "feature_stats.std=" + _fmt(model.feature_stats.std),
             f"vocabulary={len(table.words)}"]
    lines += table.words
    for name in weight_shapes(cfg):
        w = np.atleast_2d(model.weights[name])
        if model.weights[name].ndim == 1:
            w = w.reshape(1, -1)
        lines.append(f"param {name} shape={','.join(map(str, model.weights[name].shape))}")
        lines += [_fmt(r) for r in w]
    lines.append(f"param emb.words shape={len(table.words)},{table.dim}")
    lines += [_fmt(r) for r in table.word_vectors]
    ng = table.ngram_vectors
    if table.ngram_seed is None:
        lines.append(f"param emb.ngrams shape={ng.shape[0]},{ng.shape[1]}")
        lines += [_fmt(r) for r in ng]
    else:
        base = ngram_init(table.ngram_seed, ng.shape[0], ng.shape[1])
        changed = np.flatnonzero(np.any(ng != base, axis=1))
        lines.append(f"param emb.ngrams shape={ng.shape[0]},{ng.shape[1]} "
                     f"base={table.ngram_seed} rows={len(changed)}")
        lines += [f"{i} {_fmt(ng[i])}" for i in changed]
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _config_dict(cfg: ModelConfig) -> dict:
    return {k: getattr(cfg, k) for k in ModelConfig.__dataclass_fields__}


class _Reader:
    def __init__(self, text: str, path):
        self.lines = text.splitlines()
        self.pos = 0
        self.path = path

    def fail(self, msg):
        raise FormatError(msg, self.pos, self.path)

    def next(self) -> str:
        if self.pos >= len(self.lines):
            self.pos += 1
            self.fail("unexpected end of file (truncated checkpoint?)")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def field(self, key: str) -> str:
        line = self.next()
        if not line.startswith(key + "="):
            self.fail(f"expected '{key}=...'")
        return line[len(key) + 1:]

    def floats(self, line: str, n: int) -> np.ndarray:
        try:
            vals = np.array([float(v) for v in line.split()], dtype=np.float64)
        except ValueError:
            self.fail("non-numeric value")
        if len(vals) != n:
            self.fail(f"expected {n} values, got {len(vals)}")
        return vals

    def block_header(self, name: str) -> tuple[tuple[int, ...], dict]:
        parts = self.next().split()
        if len(parts) < 3 or parts[0] != "param" or parts[1] != name or not parts[2].startswith("shape="):
            self.fail(f"expected 'param {name} shape=...'")
        try:
            shape = tuple(int(x) for x in parts[2][6:].split(","))
            extra = dict(p.split("=", 1) for p in parts[3:])
        except ValueError:
            self.fail("malformed block header")
        return shape, extra

    def dense(self, shape) -> np.ndarray:
        rows, cols = (1, shape[0]) if len(shape) == 1 else shape
        out = np.empty((rows, cols))
        for r in range(rows):
            out[r] = self.floats(self.next(), cols)
        return out.reshape(shape)


def load(path: str | Path) -> tuple[Model, dict]:
    """Returns (model, meta)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise FormatError("checkpoint is not UTF-8", None, path) from None
    rd = _Reader(text, path)
    if rd.next() != MAGIC:
        rd.fail("not a degreelevel checkpoint")
    try:
        version = int(rd.field("version"))
    except ValueError:
        rd.fail("bad version field")
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, this build reads {VERSION}")
    try:
        grade = int(rd.field("grade"))
        cfg_raw = json.loads(rd.field("config"))
        meta = json.loads(rd.field("meta"))
    except (ValueError, json.JSONDecodeError):
        rd.fail("malformed header")
    try:
        cfg = ModelConfig(**cfg_raw).validate()
    except TypeError:
        rd.fail("unknown config keys")
    if cfg.grade != grade:
        rd.fail("grade field disagrees with config")
    stats = FeatureStats(rd.floats(rd.field("feature_stats.mean"), 2),
                         rd.floats(rd.field("feature_stats.std"), 2))
    try:
        n_words = int(rd.field("vocabulary"))
    except ValueError:
        rd.fail("bad vocabulary count")
    words = [rd.next() for _ in range(n_words)]
    weights = {}
    for name, expected in weight_shapes(cfg).items():
        shape, _ = rd.block_header(name)
        if shape != expected:
            rd.fail(f"{name}: shape {shape} does not match config {expected}")
        weights[name] = rd.dense(shape)
    shape, _ = rd.block_header("emb.words")
    if shape != (n_words, cfg.dim):
        rd.fail("emb.words shape does not match vocabulary")
    word_vectors = rd.dense(shape)
    shape, extra = rd.block_header("emb.ngrams")
    if len(shape) != 2 or shape[1] != cfg.dim:
        rd.fail("emb.ngrams shape does not match dim")
    ngram_seed = None
    if "base" in extra:
        try:
            ngram_seed, k = int(extra["base"]), int(extra["rows"])
        except (KeyError, ValueError):
            rd.fail("bad sparse block header")
        ngrams = ngram_init(ngram_seed, shape[0], shape[1])
        for _ in range(k):
            vals = rd.floats(rd.next(), shape[1] + 1)
            row = int(vals[0])
            if not 0 <= row < shape[0]:
                rd.fail("row id out of range")
            ngrams[row] = vals[1:]
    else:
        ngrams = rd.dense(shape)
    if rd.next() != "end":
        rd.fail("missing end marker")
    table = EmbeddingTable(cfg.dim, words, word_vectors, ngrams, cfg.n_min, cfg.n_max, cfg.subword,
                           ngram_seed)
    return Model(cfg, table, weights, stats), meta
