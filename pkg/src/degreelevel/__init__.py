"""Decode U.S. degree-title expressions into multi-label degree-level sets."""

from .abbrevdb import AbbrevDb, AbbrevEntry, canonical_key, expand_expression, load_db
from .corpus import DegreeRecord, NoiseConfig, generate_synthetic, load_corpus, perturb, write_corpus
from .eval import EvalReport, evaluate, kfold_cv, subset_accuracy
from .neural import FeatureVector, ModelConfig, TrainConfig
from .normalize import normalize_title
from .pipeline import DegreeClassifier, PipelineConfig, Resources
from .ruleclass import classify_rules, load_rules
from .taxonomy import LabelSet, Taxonomy, default_taxonomy, load_taxonomy

__version__ = "0.1.0"
