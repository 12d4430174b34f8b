"""End-to-end classifier: DB expansion, normalization, then the neural model."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import checkpoint
from .abbrevdb import AbbrevDb, canonical_key, expand_expression, load_db
from .corpus import DegreeRecord
from .embed import EmbeddingTable
from .errors import EmptyDataset, GradeMismatch, InvalidConfig
from .neural import (MULTICLASS, MULTILABEL, EpochStats, Example, FeatureVector, Model, ModelConfig,
                     TrainConfig, decide, init_model, predict_probabilities, train)
from .normalize import (Preprocessor, build_dictionary, build_spell_index, load_lemmas, load_protected,
                        load_stop_words)
from .ruleclass import RuleTable, classify_rules, load_rules
from .taxonomy import LabelSet, Taxonomy, default_taxonomy

EMPTY_TOKEN = "<EMPTY>"
DB, MODEL, RULES = "db", "model", "rules"


@dataclass
class PipelineConfig:
    grade: int = 1
    mode: str = MULTILABEL
    expand: bool = True
    spell: bool = True
    subword: bool = True
    features: bool = True
    max_edit_distance: int = 2
    min_correct_len: int = 4
    min_corpus_count: int = 3
    vocab_min_count: int = 2
    db_short_circuit: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    @property
    def scenario(self) -> str:
        parts = ["expansion" if self.expand else "no-expansion"]
        parts += [p for p, on in (("spell", self.spell), ("subword", self.subword),
                                  ("features", self.features)) if on]
        if self.mode == MULTICLASS:
            parts.append("multiclass")
        return "+".join(parts)

    def model_config(self, taxonomy: Taxonomy) -> ModelConfig:
        d = asdict(self.model)
        d.update(grade=self.grade, n_categories=taxonomy.category_count(self.grade), mode=self.mode,
                 subword=self.subword, use_features=self.features)
        return ModelConfig(**d).validate()

    def flags(self) -> dict:
        d = asdict(self)
        d.pop("model")
        d.pop("train")
        return d


@dataclass
class Resources:
    taxonomy: Taxonomy
    db: AbbrevDb
    stop: frozenset
    protected: frozenset
    lemmas: dict
    rules: RuleTable
    pretrained: EmbeddingTable | None = None

    @classmethod
    def default(cls, taxonomy: Taxonomy | None = None) -> "Resources":
        taxonomy = taxonomy or default_taxonomy()
        return cls(taxonomy, load_db(taxonomy=taxonomy), frozenset(load_stop_words()),
                   frozenset(load_protected()), load_lemmas(), load_rules(taxonomy=taxonomy))


@dataclass
class PredictionRow:
    title: str
    expanded: str
    labels: LabelSet
    probabilities: np.ndarray
    provenance: str


class DegreeClassifier:
    def __init__(self, config: PipelineConfig | None = None, resources: Resources | None = None):
        self.config = config or PipelineConfig()
        self.res = resources or Resources.default()
        self.model: Model | None = None
        self.dictionary: dict[str, int] = {}
        self._prep: Preprocessor | None = None

    # -- preprocessing --------------------------------------------------------

    def _build_preprocessor(self):
        c = self.config
        spell = build_spell_index(self.dictionary, c.max_edit_distance) if c.spell else None
        self._prep = Preprocessor(self.res.db if c.expand else None, spell, self.res.stop,
                                  self.res.protected, self.res.lemmas, c.min_correct_len)

    def tokens(self, title: str) -> tuple[str, ...]:
        words = self._prep(title).words
        return words if words else (EMPTY_TOKEN,)

    def target(self, gold: LabelSet) -> LabelSet:
        tx, grade = self.res.taxonomy, self.config.grade
        if gold.grade > grade:
            raise GradeMismatch(f"labels are grade {gold.grade}, pipeline is grade {grade}")
        labels = tx.collapse(gold, grade) if gold.grade != grade else gold
        if self.config.mode == MULTICLASS:
            labels = LabelSet(frozenset({tx.highest_level(labels)}), grade)
        return labels

    # -- training -------------------------------------------------------------

    def fit(self, records: Sequence[DegreeRecord]) -> list[EpochStats]:
        records = [r for r in records if r.usable]
        if not records:
            raise EmptyDataset("no usable training records")
        c = self.config
        if c.spell:
            self.dictionary = build_dictionary(self.res.db, self.res.lemmas, self.res.stop,
                                               [r.raw_title for r in records], c.min_corpus_count)
        self._build_preprocessor()
        token_lists = [self.tokens(r.raw_title) for r in records]
        counts = Counter(t for toks in token_lists for t in toks)
        vocab = sorted(w for w, n in counts.items() if n >= c.vocab_min_count)
        self.model = init_model(c.model_config(self.res.taxonomy), vocab, self.res.pretrained)
        examples = [Example(toks, r.features, self.target(r.gold)) for toks, r in zip(token_lists, records)]
        _, history = train(self.model, examples, c.train)
        return history

    # -- inference ------------------------------------------------------------

    def _db_hit(self, title: str) -> LabelSet | None:
        exp = expand_expression(self.res.db, title)
        if len(exp.spans) != 1 or exp.spans[0].ambiguous:
            return None
        span = exp.spans[0]
        if canonical_key(title) != canonical_key(span.source):
            return None
        return self.res.taxonomy.collapse(span.entry.levels, self.config.grade)

    def predict(self, titles: Sequence[str], features: Sequence[FeatureVector] | None = None,
                baseline: str | None = None) -> list[PredictionRow]:
        if features is None:
            features = [FeatureVector() for _ in titles]
        tx, grade = self.res.taxonomy, self.config.grade
        k = tx.category_count(grade)
        if baseline == RULES:
            rows = []
            for t in titles:
                labels = tx.collapse(classify_rules(self.res.rules, t), grade)
                probs = np.zeros(k)
                probs[list(labels.members)] = 1.0
                rows.append(PredictionRow(t, t, labels, probs, RULES))
            return rows
        if self.model is None:
            raise InvalidConfig("classifier is not trained")
        probs = predict_probabilities(self.model, [self.tokens(t) for t in titles], list(features))
        rows = []
        for t, p in zip(titles, probs):
            expanded = self._prep(t).expanded
            hit = self._db_hit(t) if self.config.db_short_circuit else None
            if hit is not None:
                if self.config.mode == MULTICLASS:
                    hit = LabelSet(frozenset({tx.highest_level(hit)}), grade)
                rows.append(PredictionRow(t, expanded, hit, p, DB))
            else:
                rows.append(PredictionRow(t, expanded, decide(p, self.model.config), p, MODEL))
        return rows

    def predict_records(self, records: Sequence[DegreeRecord], baseline: str | None = None):
        return self.predict([r.raw_title for r in records], [r.features for r in records], baseline)

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | Path) -> None:
        if self.model is None:
            raise InvalidConfig("classifier is not trained")
        meta = {"pipeline": self.config.flags(), "train": asdict(self.config.train),
                "dictionary": self.dictionary}
        checkpoint.save(self.model, path, meta)

    @classmethod
    def load(cls, path: str | Path, resources: Resources | None = None) -> "DegreeClassifier":
        model, meta = checkpoint.load(path)
        flags = dict(meta.get("pipeline", {}))
        cfg = PipelineConfig(**flags, model=model.config, train=TrainConfig(**meta.get("train", {})))
        clf = cls(cfg, resources)
        if clf.res.taxonomy.category_count(cfg.grade) != model.config.n_categories:
            raise GradeMismatch("checkpoint does not match the taxonomy")
        clf.model = model
        clf.dictionary = {w: int(n) for w, n in meta.get("dictionary", {}).items()}
        clf._build_preprocessor()
        return clf
