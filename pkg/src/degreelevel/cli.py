"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data-format error, 3 config/model
mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .abbrevdb import expand_expression, load_db
from .corpus import NoiseConfig, corpus_grade, generate_synthetic, load_corpus, regrade, write_corpus
from .embed import load_vectors
from .errors import (DegreeLevelError, EmptyDataset, EmptyDb, FormatError, GradeMismatch, InvalidConfig,
                     LengthMismatch, TooFewSamples, UnknownLevel, VersionMismatch)
from .eval import evaluate_classifier, kfold_cv
from .neural import ModelConfig, TrainConfig
from .normalize import build_dictionary, build_spell_index, load_lemmas, load_protected, load_stop_words, normalize_title
from .pipeline import RULES, DegreeClassifier, PipelineConfig, Resources
from .ruleclass import load_rules
from .taxonomy import load_taxonomy

log = logging.getLogger("degreelevel")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MISMATCH = 0, 1, 2, 3
PREDICTIONS_VERSION = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- config files -------------------------------------------------------------

def read_config(path: str | Path) -> dict[str, str]:
    """``key = value`` lines; ``#`` comments and ``[section]`` headers are ignored."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or (line.startswith("[") and line.endswith("]")):
            continue
        if "=" not in line:
            raise FormatError("expected 'key = value'", lineno, path)
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _coerce(value: str, current):
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise InvalidConfig(f"not a boolean: {value!r}")
    try:
        if isinstance(current, int):
            return int(value)
        if isinstance(current, float):
            return float(value)
    except ValueError:
        raise InvalidConfig(f"bad number {value!r}") from None
    return value


def apply_settings(cfg: PipelineConfig, settings: dict[str, str]) -> PipelineConfig:
    """Set pipeline, model and training fields by bare name."""
    targets = [(cfg, {f.name for f in fields(PipelineConfig)} - {"model", "train"}),
               (cfg.model, {f.name for f in fields(ModelConfig)} - {"grade", "mode", "n_categories"}),
               (cfg.train, {f.name for f in fields(TrainConfig)})]
    for key, value in settings.items():
        for obj, names in targets:
            if key in names:
                setattr(obj, key, _coerce(value, getattr(obj, key)))
                break
        else:
            raise InvalidConfig(f"unknown config key {key!r}")
    return cfg


# -- argument parsing ---------------------------------------------------------

def _resource_args(p):
    g = p.add_argument_group("resources")
    for name in ("db", "stopwords", "protected", "lemmas", "taxonomy", "rules", "vectors"):
        g.add_argument(f"--{name}", metavar="PATH", help=f"{name} file (default: bundled)")


def _pipeline_args(p):
    p.add_argument("--config", metavar="PATH", help="key=value settings file")
    p.add_argument("--grade", type=int, help="label grade 1-4")
    p.add_argument("--mode", choices=["multilabel", "multiclass"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--no-expand", action="store_true", help="skip abbreviation expansion")
    p.add_argument("--no-spell", action="store_true", help="skip spell correction")
    p.add_argument("--no-subword", action="store_true", help="no n-gram vectors for unseen words")
    p.add_argument("--no-features", action="store_true", help="ignore the numeric features")
    p.add_argument("--db-short-circuit", action="store_true",
                   help="label titles that are a single unambiguous DB key straight from the DB")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="degreelevel", description="Decode degree-title expressions into degree levels.")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    common = _Parser(add_help=False)
    # also accepted after the subcommand; SUPPRESS keeps the global value otherwise
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    s = sub.add_parser("expand", parents=[common], help="expand abbreviations in a title")
    s.add_argument("title")
    s.add_argument("--json", action="store_true")
    _resource_args(s)

    s = sub.add_parser("normalize", parents=[common], help="show tokens and the audit trail for a title")
    s.add_argument("title")
    s.add_argument("--corpus", metavar="CSV", help="add corpus words to the spell dictionary")
    s.add_argument("--no-expand", action="store_true")
    s.add_argument("--no-spell", action="store_true")
    s.add_argument("--json", action="store_true")
    _resource_args(s)

    s = sub.add_parser("classify", parents=[common], help="predict levels for a titles CSV")
    s.add_argument("--model", metavar="CKPT", help="trained checkpoint (not needed with --baseline rules)")
    s.add_argument("--input", required=True, metavar="CSV")
    s.add_argument("--output", required=True, metavar="CSV")
    s.add_argument("--baseline", choices=["rules"], help="use the prefix/keyword rules instead")
    s.add_argument("--grade", type=int, help="grade for --baseline rules (default 1)")
    s.add_argument("--db-short-circuit", action="store_true")
    _resource_args(s)

    s = sub.add_parser("train", parents=[common], help="train on a corpus and write a checkpoint")
    s.add_argument("--corpus", required=True, metavar="CSV")
    s.add_argument("--out", required=True, metavar="CKPT")
    s.add_argument("--history", metavar="JSON", help="write per-epoch loss and accuracy")
    _pipeline_args(s)
    _resource_args(s)

    s = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint or run k-fold cross-validation")
    s.add_argument("--corpus", required=True, metavar="CSV")
    s.add_argument("--model", metavar="CKPT")
    s.add_argument("--cv", type=int, metavar="K", help="retrain with K-fold cross-validation")
    s.add_argument("--report", required=True, metavar="JSON")
    s.add_argument("--confusion", metavar="CSV")
    _pipeline_args(s)
    _resource_args(s)

    s = sub.add_parser("gen-corpus", parents=[common], help="write a synthetic corpus")
    s.add_argument("--n", type=int, default=5000)
    s.add_argument("--out", required=True, metavar="CSV")
    s.add_argument("--noise-config", metavar="PATH", help="key=value NoiseConfig overrides")
    _resource_args(s)

    s = sub.add_parser("grade", parents=[common], help="relabel a corpus at a coarser grade")
    s.add_argument("--input", required=True, metavar="CSV")
    s.add_argument("--to", required=True, type=int, choices=[1, 2, 3, 4])
    s.add_argument("--output", required=True, metavar="CSV")
    s.add_argument("--taxonomy", metavar="PATH")
    return p


# -- helpers ------------------------------------------------------------------

def _check_inputs(args):
    for name in ("db", "stopwords", "protected", "lemmas", "taxonomy", "rules", "vectors", "config",
                 "corpus", "model", "input", "noise_config"):
        value = getattr(args, name, None)
        if value is not None and not Path(value).is_file():
            raise UsageError(f"--{name.replace('_', '-')}: no such file: {value}")


def _resources(args, dim: int = 50, with_vectors: bool = True) -> Resources:
    tx = load_taxonomy(getattr(args, "taxonomy", None))
    res = Resources(tx, load_db(getattr(args, "db", None), tx),
                    frozenset(load_stop_words(getattr(args, "stopwords", None))),
                    frozenset(load_protected(getattr(args, "protected", None))),
                    load_lemmas(getattr(args, "lemmas", None)),
                    load_rules(getattr(args, "rules", None), tx))
    if with_vectors and getattr(args, "vectors", None):
        res.pretrained = load_vectors(args.vectors, dim=dim, seed=args.seed)
    return res


def _pipeline_config(args) -> PipelineConfig:
    cfg = PipelineConfig()
    if args.config:
        apply_settings(cfg, read_config(args.config))
    if args.grade is not None:
        cfg.grade = args.grade
    if args.mode:
        cfg.mode = args.mode
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
    cfg.expand &= not args.no_expand
    cfg.spell &= not args.no_spell
    cfg.subword &= not args.no_subword
    cfg.features &= not args.no_features
    cfg.db_short_circuit |= args.db_short_circuit
    cfg.model.seed = args.seed
    cfg.train.seed = args.seed
    if cfg.grade not in (1, 2, 3, 4):
        raise InvalidConfig(f"grade must be 1-4, got {cfg.grade}")
    return cfg


def _load_labeled(path, res, grade):
    declared = corpus_grade(path)
    if declared > grade:
        raise GradeMismatch(f"corpus labels are grade {declared}, requested grade {grade}")
    return load_corpus(path, res.taxonomy, require_labels=True)


# -- commands -----------------------------------------------------------------

def cmd_expand(args, out):
    res_tx = load_taxonomy(args.taxonomy)
    db = load_db(args.db, res_tx)
    exp = expand_expression(db, args.title)
    spans = [{"start": s.start, "end": s.end, "source": s.source, "replacement": s.replacement,
              "ambiguous": s.ambiguous,
              "entries": [{"abbreviation": e.abbreviation, "expansion": e.expansion,
                           "levels": res_tx.names_of(e.levels), "source": e.source} for e in s.entries]}
             for s in exp.spans]
    if args.json:
        out.write(json.dumps({"input": args.title, "expanded": exp.text, "spans": spans},
                             sort_keys=True) + "\n")
        return EXIT_OK
    out.write(exp.text + "\n")
    for s in spans:
        tag = "ambiguous" if s["ambiguous"] else "db"
        levels = " | ".join(";".join(e["levels"]) for e in s["entries"])
        out.write(f"  [{s['start']}:{s['end']}] {s['source']} -> {s['replacement']} ({tag}: {levels})\n")
    return EXIT_OK


def cmd_normalize(args, out):
    res = _resources(args)
    spell = None
    if not args.no_spell:
        titles = [r.raw_title for r in load_corpus(args.corpus, res.taxonomy)] if args.corpus else []
        spell = build_spell_index(build_dictionary(res.db, res.lemmas, res.stop, titles))
    nt = normalize_title(args.title, None if args.no_expand else res.db, spell, res.stop, res.protected,
                         res.lemmas)
    if args.json:
        out.write(json.dumps({"input": args.title, "expanded": nt.expanded,
                              "tokens": [{"text": t.text, "kind": t.kind, "origin": t.origin} for t in nt.tokens],
                              "audit": [vars(a) for a in nt.audit]}, sort_keys=True) + "\n")
        return EXIT_OK
    out.write(" ".join(nt.words) + "\n")
    for t in nt.tokens:
        out.write(f"  {t.text}\t{t.kind}\t{t.origin}\n")
    for a in nt.audit:
        out.write(f"  audit {a.stage} @{a.position}: {a.before!r} -> {a.after!r}\n")
    return EXIT_OK


def cmd_classify(args, out):
    if args.model is None and args.baseline != "rules":
        raise UsageError("classify needs --model or --baseline rules")
    res = _resources(args, with_vectors=False)
    if args.baseline == "rules":
        cfg = PipelineConfig(grade=args.grade or 1)
        clf = DegreeClassifier(cfg, res)
    else:
        clf = DegreeClassifier.load(args.model, res)
        clf.config.db_short_circuit |= args.db_short_circuit
    grade = clf.config.grade
    records = load_corpus(args.input, res.taxonomy)
    has_labels = any(r.gold is not None for r in records) or corpus_grade(args.input) != 1
    if has_labels and corpus_grade(args.input) != grade:
        raise GradeMismatch(f"model is grade {grade}, corpus is grade {corpus_grade(args.input)}")
    rows = clf.predict_records(records, RULES if args.baseline else None)
    names = res.taxonomy.category_names(grade)
    with open(args.output, "w", encoding="utf-8", newline="") as f:
        f.write(f"#predictions-version={PREDICTIONS_VERSION}\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["degree_title", "expanded_title", "predicted_labels"]
                   + [f"p:{n}" for n in names] + ["provenance", "highest_level"])
        for r in rows:
            w.writerow([r.title, r.expanded, res.taxonomy.format_labels(r.labels)]
                       + ["%.6f" % p for p in r.probabilities]
                       + [r.provenance, names[res.taxonomy.highest_level(r.labels)]])
    out.write(f"wrote {len(rows)} predictions to {args.output}\n")
    return EXIT_OK


def cmd_train(args, out):
    cfg = _pipeline_config(args)
    res = _resources(args, cfg.model.dim)
    records = _load_labeled(args.corpus, res, cfg.grade)
    clf = DegreeClassifier(cfg, res)
    history = clf.fit(records)
    clf.save(args.out)
    hist = [{"epoch": h.epoch, "loss": h.loss, "subset_accuracy": h.subset_accuracy} for h in history]
    if args.history:
        Path(args.history).write_text(json.dumps({"scenario": cfg.scenario, "seed": args.seed,
                                                  "history": hist}, sort_keys=True, indent=2) + "\n")
    for h in hist:
        out.write(f"epoch {h['epoch']:3d}  loss {h['loss']:.6f}  train subset-accuracy "
                  f"{h['subset_accuracy']:.4f}\n")
    return EXIT_OK


def cmd_eval(args, out):
    if (args.model is None) == (args.cv is None):
        raise UsageError("eval needs exactly one of --model or --cv")
    if args.model:
        res = _resources(args, with_vectors=False)  # the checkpoint carries its embeddings
        clf = DegreeClassifier.load(args.model, res)
        clf.config.db_short_circuit |= args.db_short_circuit
        records = _load_labeled(args.corpus, res, clf.config.grade)
        report = evaluate_classifier(clf, records)
        report.seed = args.seed
    else:
        cfg = _pipeline_config(args)
        res = _resources(args, cfg.model.dim)
        records = _load_labeled(args.corpus, res, cfg.grade)
        report = kfold_cv(records, args.cv, cfg, args.seed, res)
    report.write(args.report)
    if args.confusion:
        report.write_confusion_csv(args.confusion)
    out.write(f"{report.scenario} grade {report.grade}: subset accuracy {report.subset_accuracy:.4f}, "
              f"highest-level accuracy {report.projected_accuracy:.4f} over {report.n_samples} samples\n")
    return EXIT_OK


def cmd_gen_corpus(args, out):
    tx = load_taxonomy(args.taxonomy)
    db = load_db(args.db, tx)
    noise = NoiseConfig(rng_seed=args.seed)
    if args.noise_config:
        for key, value in read_config(args.noise_config).items():
            if key not in NoiseConfig.__dataclass_fields__:
                raise InvalidConfig(f"unknown noise key {key!r}")
            setattr(noise, key, _coerce(value, getattr(noise, key)))
        noise = NoiseConfig(**vars(noise))  # re-validate
    records = generate_synthetic(db, args.n, noise, tx)
    write_corpus(records, args.out, tx)
    out.write(f"wrote {len(records)} records to {args.out}\n")
    return EXIT_OK


def cmd_grade(args, out):
    tx = load_taxonomy(args.taxonomy)
    declared = corpus_grade(args.input)
    if args.to < declared:
        raise GradeMismatch(f"cannot refine grade {declared} labels to grade {args.to}")
    records = regrade(load_corpus(args.input, tx, require_labels=True), args.to, tx)
    write_corpus(records, args.output, tx, grade=args.to)
    out.write(f"wrote {len(records)} records at grade {args.to} to {args.output}\n")
    return EXIT_OK


COMMANDS = {"expand": cmd_expand, "normalize": cmd_normalize, "classify": cmd_classify, "train": cmd_train,
            "eval": cmd_eval, "gen-corpus": cmd_gen_corpus, "grade": cmd_grade}


def run(argv: list[str] | None = None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("missing subcommand")
        _check_inputs(args)
    except UsageError as exc:
        parser.print_usage(err)
        err.write(f"error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE
    except (GradeMismatch, VersionMismatch, InvalidConfig) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_MISMATCH
    except (FormatError, UnknownLevel, EmptyDataset, EmptyDb, TooFewSamples, LengthMismatch) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_DATA
    except DegreeLevelError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
