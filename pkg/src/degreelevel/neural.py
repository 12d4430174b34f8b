"""CNN-BiLSTM text branch fused with a small feature branch, in plain numpy.

Text: embeddings -> temporal conv (ReLU) -> max-pool -> BiLSTM -> dense.
Features: standardized duration/semester values plus missing flags -> dense.
Head: concatenation -> dense -> one logistic unit per category (multi-label)
or a softmax over categories (multi-class).

Everything downstream of the embeddings only ever reads valid (unpadded)
positions, so padded rows have no influence on the output.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .embed import DEFAULT_BUCKETS, EmbeddingTable, SequenceTensor, build_table
from .errors import EmptyDataset, EmptySequence, GradeMismatch, InvalidConfig
from .taxonomy import GRADES, LabelSet, default_taxonomy

MULTILABEL, MULTICLASS = "multilabel", "multiclass"


@dataclass
class ModelConfig:
    grade: int = 1
    n_categories: int | None = None
    dim: int = 50
    max_len: int = 16
    conv_width: int = 3
    conv_filters: int = 64
    conv_layers: int = 1
    pool_size: int = 2
    lstm_hidden: int = 64
    text_dense: int = 64
    feat_dense: int = 16
    fusion_dense: int = 64
    threshold: float = 0.5
    seed: int = 0
    mode: str = MULTILABEL
    buckets: int = DEFAULT_BUCKETS
    n_min: int = 3
    n_max: int = 5
    subword: bool = True
    use_features: bool = True

    def __post_init__(self):
        if self.n_categories is None and self.grade in GRADES:
            self.n_categories = default_taxonomy().category_count(self.grade)

    def validate(self) -> "ModelConfig":
        if self.grade not in GRADES:
            raise InvalidConfig(f"grade must be one of {GRADES}")
        sizes = ("n_categories", "dim", "max_len", "conv_width", "conv_filters", "conv_layers",
                 "pool_size", "lstm_hidden", "text_dense", "feat_dense", "fusion_dense", "buckets")
        for name in sizes:
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidConfig(f"{name} must be a positive integer, got {value!r}")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidConfig("threshold must lie in (0, 1)")
        if self.mode not in (MULTILABEL, MULTICLASS):
            raise InvalidConfig(f"unknown mode {self.mode!r}")
        if not 1 <= self.n_min <= self.n_max:
            raise InvalidConfig("need 1 <= n_min <= n_max")
        return self


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class FeatureVector:
    """Program duration in years and semesters to completion; None = missing."""

    program_years: float | None = None
    semesters_completed: float | None = None

    def __post_init__(self):
        for v in (self.program_years, self.semesters_completed):
            if v is not None and (v < 0 or not math.isfinite(v)):
                raise ValueError(f"feature values must be finite and >= 0, got {v!r}")

    def values(self) -> tuple[float | None, float | None]:
        return self.program_years, self.semesters_completed


@dataclass
class FeatureStats:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(2))
    std: np.ndarray = field(default_factory=lambda: np.ones(2))

    @classmethod
    def fit(cls, feats: Sequence[FeatureVector]) -> "FeatureStats":
        mean, std = np.zeros(2), np.ones(2)
        for j in range(2):
            vals = np.array([f.values()[j] for f in feats if f.values()[j] is not None], dtype=float)
            if len(vals):
                mean[j] = vals.mean()
                s = vals.std()
                std[j] = s if s > 1e-6 else 1.0
        return cls(mean, std)

    def standardize(self, f: FeatureVector) -> np.ndarray:
        """[z_years, z_semesters, years_missing, semesters_missing]; missing
        values are imputed with the mean, i.e. z = 0."""
        out = np.zeros(4)
        for j, v in enumerate(f.values()):
            if v is None:
                out[2 + j] = 1.0
            else:
                out[j] = (v - self.mean[j]) / self.std[j]
        return out

    def destandardize(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z[:2]) * self.std + self.mean


@dataclass
class Example:
    tokens: tuple[str, ...]
    features: FeatureVector
    labels: LabelSet | None = None


@dataclass
class Model:
    config: ModelConfig
    table: EmbeddingTable
    weights: dict[str, np.ndarray]
    feature_stats: FeatureStats = field(default_factory=FeatureStats)


@dataclass
class Prediction:
    labels: LabelSet
    probabilities: np.ndarray


@dataclass
class EpochStats:
    epoch: int
    loss: float
    subset_accuracy: float


def weight_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    shapes = {}
    c_in = cfg.dim
    for l in range(cfg.conv_layers):
        shapes[f"conv{l}.W"] = (cfg.conv_width * c_in, cfg.conv_filters)
        shapes[f"conv{l}.b"] = (cfg.conv_filters,)
        c_in = cfg.conv_filters
    h = cfg.lstm_hidden
    for d in ("fwd", "bwd"):
        shapes[f"lstm_{d}.W"] = (cfg.conv_filters + h, 4 * h)
        shapes[f"lstm_{d}.b"] = (4 * h,)
    shapes["text.W"] = (2 * h, cfg.text_dense)
    shapes["text.b"] = (cfg.text_dense,)
    shapes["feat.W"] = (4, cfg.feat_dense)
    shapes["feat.b"] = (cfg.feat_dense,)
    shapes["fuse.W"] = (cfg.text_dense + cfg.feat_dense, cfg.fusion_dense)
    shapes["fuse.b"] = (cfg.fusion_dense,)
    shapes["out.W"] = (cfg.fusion_dense, cfg.n_categories)
    shapes["out.b"] = (cfg.n_categories,)
    return shapes


def init_model(config: ModelConfig, vocab: Sequence[str] = (), pretrained: EmbeddingTable | None = None) -> Model:
    """Xavier-uniform weights and zero biases, all drawn from ``config.seed``."""
    config.validate()
    weight_seed, table_seed = np.random.SeedSequence(config.seed).spawn(2)
    rng = np.random.default_rng(weight_seed)
    weights = {}
    for name, shape in weight_shapes(config).items():
        if name.endswith(".b"):
            weights[name] = np.zeros(shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            weights[name] = rng.uniform(-limit, limit, size=shape)
    table = build_table(vocab, config.dim, pretrained=pretrained, buckets=config.buckets,
                        n_min=config.n_min, n_max=config.n_max, subword=config.subword,
                        seed=int(np.random.default_rng(table_seed).integers(2**63)))
    return Model(config, table, weights)


# -- numerics ----------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _softmax(z):
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _probabilities(logits, mode):
    p = _sigmoid(logits) if mode == MULTILABEL else _softmax(logits)
    # keep reported probabilities strictly inside (0, 1)
    return np.clip(p, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)


def _loss(logits, targets, mode):
    n, k = logits.shape
    if mode == MULTILABEL:
        loss = float(np.mean(np.logaddexp(0.0, logits) - targets * logits))
        grad = (_sigmoid(logits) - targets) / (n * k)
    else:
        shifted = logits - logits.max(axis=1, keepdims=True)
        logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        loss = float(-np.sum(targets * logp) / n)
        grad = (np.exp(logp) - targets) / n
    return loss, grad


# -- forward / backward --------------------------------------------------------

def _im2col(h, width):
    n, length, c = h.shape
    pad = (width - 1) // 2
    hp = np.zeros((n, length + width - 1, c))
    hp[:, pad:pad + length] = h
    return np.concatenate([hp[:, k:k + length] for k in range(width)], axis=2)


def _col2im(dcols, width, c):
    n, length, _ = dcols.shape
    pad = (width - 1) // 2
    dhp = np.zeros((n, length + width - 1, c))
    for k in range(width):
        dhp[:, k:k + length] += dcols[:, :, k * c:(k + 1) * c]
    return dhp[:, pad:pad + length]


def _lstm_forward(W, b, seq, mask, reverse):
    n, steps, d = seq.shape
    hid = W.shape[1] // 4
    h = np.zeros((n, hid))
    c = np.zeros((n, hid))
    cache = []
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        m = mask[:, t:t + 1]
        xh = np.concatenate([seq[:, t], h], axis=1)
        z = xh @ W + b
        i = _sigmoid(z[:, :hid])
        f = _sigmoid(z[:, hid:2 * hid])
        o = _sigmoid(z[:, 2 * hid:3 * hid])
        g = np.tanh(z[:, 3 * hid:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        cache.append((t, m, xh, c, i, f, o, g, tc))
        h = np.where(m, o * tc, h)
        c = np.where(m, c_new, c)
    return h, cache


def _lstm_backward(W, cache, dh, d_in, n_steps):
    n = dh.shape[0]
    dW = np.zeros_like(W)
    db = np.zeros(W.shape[1])
    dseq = np.zeros((n, n_steps, d_in))
    dc = np.zeros_like(dh)
    for t, m, xh, c_prev, i, f, o, g, tc in reversed(cache):
        dh_new = np.where(m, dh, 0.0)
        dc_new = np.where(m, dc, 0.0)
        dh_keep = dh - dh_new
        dc_keep = dc - dc_new
        dct = dc_new + dh_new * o * (1.0 - tc * tc)
        dz = np.concatenate([dct * g * i * (1.0 - i),
                             dct * c_prev * f * (1.0 - f),
                             dh_new * tc * o * (1.0 - o),
                             dct * i * (1.0 - g * g)], axis=1)
        dW += xh.T @ dz
        db += dz.sum(axis=0)
        dxh = dz @ W.T
        dseq[:, t] = dxh[:, :d_in]
        dh = dxh[:, d_in:] + dh_keep
        dc = dct * f + dc_keep
    return dW, db, dseq


def _forward(w, cfg, x, lengths, feats):
    n, length, _ = x.shape
    mask = (np.arange(length)[None, :] < lengths[:, None])[..., None]
    h = np.where(mask, x, 0.0)
    convs = []
    for l in range(cfg.conv_layers):
        cols = _im2col(h, cfg.conv_width)
        z = cols @ w[f"conv{l}.W"] + w[f"conv{l}.b"]
        h = np.where(mask, np.maximum(z, 0.0), 0.0)
        convs.append((cols, z))

    p = cfg.pool_size
    steps = -(-length // p)
    windows = np.full((n, steps * p, cfg.conv_filters), -np.inf)
    windows[:, :length] = np.where(mask, h, -np.inf)
    windows = windows.reshape(n, steps, p, cfg.conv_filters)
    arg = windows.argmax(axis=2)
    pooled = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]
    pmask = np.arange(steps)[None, :] < (-(-lengths // p))[:, None]
    pooled = np.where(pmask[..., None], pooled, 0.0)

    hf, cache_f = _lstm_forward(w["lstm_fwd.W"], w["lstm_fwd.b"], pooled, pmask, reverse=False)
    hb, cache_b = _lstm_forward(w["lstm_bwd.W"], w["lstm_bwd.b"], pooled, pmask, reverse=True)
    ht = np.concatenate([hf, hb], axis=1)
    zt = ht @ w["text.W"] + w["text.b"]
    at = np.maximum(zt, 0.0)
    zf = feats @ w["feat.W"] + w["feat.b"]
    af = np.maximum(zf, 0.0)
    u = np.concatenate([at, af], axis=1)
    zu = u @ w["fuse.W"] + w["fuse.b"]
    au = np.maximum(zu, 0.0)
    logits = au @ w["out.W"] + w["out.b"]
    cache = dict(mask=mask, convs=convs, arg=arg, pmask=pmask, length=length, steps=steps,
                 cache_f=cache_f, cache_b=cache_b, ht=ht, zt=zt, at=at, feats=feats, zf=zf,
                 af=af, u=u, zu=zu, au=au)
    return logits, cache


def _backward(w, cfg, cache, dlogits):
    g = {}
    au, u = cache["au"], cache["u"]
    g["out.W"] = au.T @ dlogits
    g["out.b"] = dlogits.sum(axis=0)
    dzu = (dlogits @ w["out.W"].T) * (cache["zu"] > 0)
    g["fuse.W"] = u.T @ dzu
    g["fuse.b"] = dzu.sum(axis=0)
    du = dzu @ w["fuse.W"].T
    td = cfg.text_dense
    dzf = du[:, td:] * (cache["zf"] > 0)
    g["feat.W"] = cache["feats"].T @ dzf
    g["feat.b"] = dzf.sum(axis=0)
    dzt = du[:, :td] * (cache["zt"] > 0)
    g["text.W"] = cache["ht"].T @ dzt
    g["text.b"] = dzt.sum(axis=0)
    dht = dzt @ w["text.W"].T
    hid = cfg.lstm_hidden
    steps, nf = cache["steps"], cfg.conv_filters
    g["lstm_fwd.W"], g["lstm_fwd.b"], dpool_f = _lstm_backward(
        w["lstm_fwd.W"], cache["cache_f"], dht[:, :hid], nf, steps)
    g["lstm_bwd.W"], g["lstm_bwd.b"], dpool_b = _lstm_backward(
        w["lstm_bwd.W"], cache["cache_b"], dht[:, hid:], nf, steps)
    dpool = np.where(cache["pmask"][..., None], dpool_f + dpool_b, 0.0)

    n = dlogits.shape[0]
    p, length, mask = cfg.pool_size, cache["length"], cache["mask"]
    dwin = np.zeros((n, steps, p, nf))
    np.put_along_axis(dwin, cache["arg"][:, :, None, :], dpool[:, :, None, :], axis=2)
    dh = dwin.reshape(n, steps * p, nf)[:, :length]
    for l in reversed(range(cfg.conv_layers)):
        cols, z = cache["convs"][l]
        dz = np.where(mask, dh, 0.0) * (z > 0)
        c_in = cols.shape[2] // cfg.conv_width
        g[f"conv{l}.W"] = cols.reshape(-1, cols.shape[2]).T @ dz.reshape(-1, nf)
        g[f"conv{l}.b"] = dz.sum(axis=(0, 1))
        dh = _col2im(dz @ w[f"conv{l}.W"].T, cfg.conv_width, c_in)
    dx = np.where(mask, dh, 0.0)
    return g, dx


# -- batching over the embedding table -----------------------------------------

@dataclass
class _Encoded:
    """Embedding rows used by one example: (position, row) pairs."""

    length: int
    word_pos: np.ndarray
    word_rows: np.ndarray
    ngram_pos: np.ndarray
    ngram_rows: np.ndarray


def _encode(table: EmbeddingTable, tokens: Sequence[str], max_len: int) -> _Encoded:
    tokens = list(tokens)[:max_len]
    wp, wr, npos, nr = [], [], [], []
    for t, tok in enumerate(tokens):
        row, buckets = table.rows(tok)
        if row >= 0:
            wp.append(t)
            wr.append(row)
        elif len(buckets):
            npos.append(np.full(len(buckets), t))
            nr.append(buckets)
    cat = lambda parts: np.concatenate(parts) if parts else np.zeros(0, dtype=np.int64)
    return _Encoded(len(tokens), np.array(wp, dtype=np.int64), np.array(wr, dtype=np.int64),
                    cat(npos).astype(np.int64), cat(nr).astype(np.int64))


class _Batch:
    def __init__(self, table, encoded: Sequence[_Encoded], max_len: int):
        n = len(encoded)
        self.lengths = np.array([e.length for e in encoded], dtype=np.int64)
        # pad only to the longest member; outputs depend on valid rows alone
        max_len = int(min(max_len, max(self.lengths.max(initial=1), 1)))
        offsets = np.arange(n) * max_len
        self.n, self.max_len = n, max_len
        self.word_pos = np.concatenate([e.word_pos + o for e, o in zip(encoded, offsets)])
        self.word_rows = np.concatenate([e.word_rows for e in encoded])
        self.ngram_pos = np.concatenate([e.ngram_pos + o for e, o in zip(encoded, offsets)])
        self.ngram_rows = np.concatenate([e.ngram_rows for e in encoded])
        flat = np.zeros((n * max_len, table.dim))
        flat[self.word_pos] = table.word_vectors[self.word_rows]
        if len(self.ngram_pos):
            np.add.at(flat, self.ngram_pos, table.ngram_vectors[self.ngram_rows])
        self.x = flat.reshape(n, max_len, table.dim)

    def embedding_grads(self, dx):
        flat = dx.reshape(self.n * self.max_len, -1)
        return (_sparse_rows(self.word_rows, flat[self.word_pos]),
                _sparse_rows(self.ngram_rows, flat[self.ngram_pos]))


def _sparse_rows(rows, grads):
    uniq, inv = np.unique(rows, return_inverse=True)
    out = np.zeros((len(uniq), grads.shape[1]))
    if len(rows):
        np.add.at(out, inv, grads)
    return uniq, out


def _feature_matrix(model: Model, feats: Sequence[FeatureVector]) -> np.ndarray:
    if not model.config.use_features:
        return np.zeros((len(feats), 4))
    return np.array([model.feature_stats.standardize(f) for f in feats]).reshape(len(feats), 4)


def _targets(cfg: ModelConfig, labels: Sequence[LabelSet]) -> np.ndarray:
    y = np.zeros((len(labels), cfg.n_categories))
    for i, lab in enumerate(labels):
        if cfg.mode == MULTICLASS and len(lab) != 1:
            raise InvalidConfig("multi-class training needs singleton labels; project them first")
        y[i, list(lab.members)] = 1.0
    return y


def loss_and_grads(model: Model, examples: Sequence[Example]):
    """Mean loss over ``examples`` and gradients for every parameter group.

    Embedding gradients come back as (row ids, row grads) pairs under
    ``emb.words`` and ``emb.ngrams``.
    """
    cfg = model.config
    enc = [_encode(model.table, ex.tokens, cfg.max_len) for ex in examples]
    if any(e.length == 0 for e in enc):
        raise EmptySequence("every example needs at least one token")
    batch = _Batch(model.table, enc, cfg.max_len)
    feats = _feature_matrix(model, [ex.features for ex in examples])
    logits, cache = _forward(model.weights, cfg, batch.x, batch.lengths, feats)
    loss, dlogits = _loss(logits, _targets(cfg, [ex.labels for ex in examples]), cfg.mode)
    grads, dx = _backward(model.weights, cfg, cache, dlogits)
    grads["emb.words"], grads["emb.ngrams"] = batch.embedding_grads(dx)
    return loss, grads


# -- public operations -----------------------------------------------------------

def forward(model: Model, seq: SequenceTensor, feats: FeatureVector) -> np.ndarray:
    """Category probabilities for one embedded sequence."""
    if seq.valid_len < 1:
        raise EmptySequence("sequence has no valid positions")
    cfg = model.config
    values = np.asarray(seq.values, dtype=float)[None]
    lengths = np.array([seq.valid_len])
    logits, _ = _forward(model.weights, cfg, values, lengths, _feature_matrix(model, [feats]))
    return _probabilities(logits, cfg.mode)[0]


def decide(probabilities: np.ndarray, config: ModelConfig) -> LabelSet:
    """Threshold rule with an argmax fallback; never returns an empty set."""
    probabilities = np.asarray(probabilities)
    if config.mode == MULTICLASS:
        members = {int(np.argmax(probabilities))}
    else:
        members = {int(i) for i in np.flatnonzero(probabilities >= config.threshold)}
        if not members:
            members = {int(np.argmax(probabilities))}
    return LabelSet(frozenset(members), config.grade)


def predict(model: Model, seq: SequenceTensor, feats: FeatureVector) -> Prediction:
    probs = forward(model, seq, feats)
    return Prediction(decide(probs, model.config), probs)


def predict_probabilities(model: Model, token_lists: Sequence[Sequence[str]],
                          feats: Sequence[FeatureVector], batch_size: int = 256) -> np.ndarray:
    """Batched probabilities straight from token lists (empty lists not allowed)."""
    cfg = model.config
    out = np.zeros((len(token_lists), cfg.n_categories))
    for start in range(0, len(token_lists), batch_size):
        stop = start + batch_size
        enc = [_encode(model.table, t, cfg.max_len) for t in token_lists[start:stop]]
        if any(e.length == 0 for e in enc):
            raise EmptySequence("every example needs at least one token")
        batch = _Batch(model.table, enc, cfg.max_len)
        logits, _ = _forward(model.weights, cfg, batch.x, batch.lengths,
                             _feature_matrix(model, feats[start:stop]))
        out[start:stop] = _probabilities(logits, cfg.mode)
    return out


def predict_batch(model: Model, token_lists, feats) -> list[Prediction]:
    probs = predict_probabilities(model, token_lists, feats)
    return [Prediction(decide(p, model.config), p) for p in probs]


class _Adam:
    """Adam; embedding tables get lazy row-wise updates (only touched rows)."""

    def __init__(self, model: Model, hyper: TrainConfig):
        self.h = hyper
        self.t = 0
        self.params = dict(model.weights)
        self.params["emb.words"] = model.table.word_vectors
        self.params["emb.ngrams"] = model.table.ngram_vectors
        self.m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.params.items()}

    def step(self, grads):
        h = self.h
        self.t += 1
        lr = h.lr * math.sqrt(1.0 - h.beta2 ** self.t) / (1.0 - h.beta1 ** self.t)
        for name, g in grads.items():
            p, m, v = self.params[name], self.m[name], self.v[name]
            if name.startswith("emb."):
                rows, g = g
                if len(rows) == 0:
                    continue
                m[rows] = h.beta1 * m[rows] + (1.0 - h.beta1) * g
                v[rows] = h.beta2 * v[rows] + (1.0 - h.beta2) * g * g
                p[rows] -= lr * m[rows] / (np.sqrt(v[rows]) + h.eps)
            else:
                m *= h.beta1
                m += (1.0 - h.beta1) * g
                v *= h.beta2
                v += (1.0 - h.beta2) * g * g
                p -= lr * m / (np.sqrt(v) + h.eps)


def train(model: Model, dataset: Sequence[Example], hyper: TrainConfig | None = None,
          fit_features: bool = True) -> tuple[Model, list[EpochStats]]:
    """Minimize mean cross-entropy with Adam; updates ``model`` in place.

    Shuffling is driven by ``hyper.seed``, so identical inputs give an
    identical history and identical final weights.
    """
    hyper = hyper or TrainConfig()
    cfg = model.config
    if not dataset:
        raise EmptyDataset("training set is empty")
    for ex in dataset:
        if ex.labels is None or ex.labels.grade != cfg.grade:
            got = None if ex.labels is None else ex.labels.grade
            raise GradeMismatch(f"model is grade {cfg.grade}, example labels are grade {got}")
    if fit_features:
        model.feature_stats = FeatureStats.fit([ex.features for ex in dataset])
    enc = [_encode(model.table, ex.tokens, cfg.max_len) for ex in dataset]
    if any(e.length == 0 for e in enc):
        raise EmptySequence("every example needs at least one token")
    feats = _feature_matrix(model, [ex.features for ex in dataset])
    targets = _targets(cfg, [ex.labels for ex in dataset])
    opt = _Adam(model, hyper)
    rng = np.random.default_rng(hyper.seed)
    history = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(dataset))
        total, correct = 0.0, 0
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            batch = _Batch(model.table, [enc[i] for i in idx], cfg.max_len)
            logits, cache = _forward(model.weights, cfg, batch.x, batch.lengths, feats[idx])
            loss, dlogits = _loss(logits, targets[idx], cfg.mode)
            total += loss * len(idx)
            correct += _exact_matches(logits, targets[idx], cfg)
            grads, dx = _backward(model.weights, cfg, cache, dlogits)
            grads["emb.words"], grads["emb.ngrams"] = batch.embedding_grads(dx)
            opt.step(grads)
        history.append(EpochStats(epoch + 1, total / len(dataset), correct / len(dataset)))
    return model, history


def _exact_matches(logits, targets, cfg) -> int:
    probs = _probabilities(logits, cfg.mode)
    hits = 0
    for p, y in zip(probs, targets):
        pred = decide(p, cfg).members
        hits += pred == set(np.flatnonzero(y).tolist())
    return hits


def _logits(model: Model, examples: Sequence[Example]) -> np.ndarray:
    cfg = model.config
    enc = [_encode(model.table, ex.tokens, cfg.max_len) for ex in examples]
    batch = _Batch(model.table, enc, cfg.max_len)
    feats = _feature_matrix(model, [ex.features for ex in examples])
    logits, _ = _forward(model.weights, cfg, batch.x, batch.lengths, feats)
    return logits


def _loss_shift(z, z0, targets, mode) -> float:
    """loss(z) - loss(z0), evaluated without cancellation against the O(1)
    loss value itself (that rounding would swamp gradients near 1e-8)."""
    n, k = z.shape
    dz = z - z0
    if mode == MULTILABEL:
        # softplus(z) - softplus(z0) = log1p(expm1(dz) * sigmoid(z0))
        terms = np.log1p(np.expm1(dz) * _sigmoid(z0)) - targets * dz
        return math.fsum(terms.ravel()) / (n * k)
    p0 = _softmax(z0)
    terms = np.log1p(np.sum(p0 * np.expm1(dz), axis=1)) - np.sum(targets * dz, axis=1)
    return math.fsum(terms) / n


def gradient_check(model: Model, sample: Example | Sequence[Example], epsilon: float = 1e-5,
                   coords_per_group: int = 25, seed: int = 0) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    Samples up to ``coords_per_group`` coordinates from every weight array
    and from the embedding rows the sample touches. Relative error is
    |a - n| / max(|a|, |n|, 1e-8).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    examples = [sample] if isinstance(sample, Example) else list(sample)
    _, grads = loss_and_grads(model, examples)
    targets = _targets(model.config, [ex.labels for ex in examples])
    base = _logits(model, examples)
    rng = np.random.default_rng(seed)
    params = dict(model.weights)
    params["emb.words"] = model.table.word_vectors
    params["emb.ngrams"] = model.table.ngram_vectors
    worst = 0.0
    for name, p in params.items():
        if name.startswith("emb."):
            rows, rg = grads[name]
            if len(rows) == 0:
                continue
            dense = {int(r): rg[k] for k, r in enumerate(rows)}
            cand = [(int(r), c) for r in rows for c in range(p.shape[1])]
            analytic = lambda ij: dense[ij[0]][ij[1]]
        else:
            cand = list(np.ndindex(p.shape))
            analytic = lambda ij, g=grads[name]: g[ij]
        if len(cand) > coords_per_group:
            pick = rng.choice(len(cand), size=coords_per_group, replace=False)
            cand = [cand[i] for i in sorted(pick)]
        for ij in cand:
            old = p[ij]
            p[ij] = old + epsilon
            up = _loss_shift(_logits(model, examples), base, targets, model.config.mode)
            p[ij] = old - epsilon
            down = _loss_shift(_logits(model, examples), base, targets, model.config.mode)
            p[ij] = old
            num = (up - down) / (2 * epsilon)
            a = float(analytic(ij))
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
    return worst


def config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)
