"""Staged pipeline: ingest -> featurize -> evaluate -> report, with file hand-offs.

Every stage reads and writes files under ``paths.output_dir``; all randomness
derives from ``PipelineConfig.seed`` through named substreams.
"""

from __future__ import annotations

import csv
import json
import logging
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import embed, ingest, labels, lexfeat, select
from .errors import ConfigError, InputFileError, ValidationError
from .model import ModelSpec

logger = logging.getLogger(__name__)

FEATURE_GROUPS = ("riskword", "riskcat", "dict", "gpt", "gpt_riskm", "gpt_riskw", "daily_embed")
DEFAULT_MODELS = ({"kind": "logistic"}, {"kind": "linear_svm"}, {"kind": "gbm"})
MIN_LABELED_USERS = 12


@dataclass
class Paths:
    exports: Path
    survey: Path | None = None
    lexicon: Path | None = None
    dictionary: Path | None = None
    cache_dir: Path | None = None
    output_dir: Path = Path("out")

    @classmethod
    def from_dict(cls, data: dict, base: Path) -> "Paths":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown paths: {sorted(unknown)}")
        if "exports" not in data:
            raise ConfigError("paths.exports is required")

        def resolve(value):
            if value is None:
                return None
            p = Path(value)
            return p if p.is_absolute() else base / p

        return cls(**{k: resolve(v) for k, v in data.items()})


@dataclass
class PipelineConfig:
    paths: Paths
    ingest: ingest.IngestConfig = field(default_factory=ingest.IngestConfig)
    provider: dict = field(default_factory=lambda: {"kind": "mock", "dimension": 64, "token_limit": 8191, "seed": 0})
    features: tuple[str, ...] = FEATURE_GROUPS
    labels: tuple[str, ...] = labels.LABELS
    models: tuple[ModelSpec, ...] = tuple(ModelSpec(**m) for m in DEFAULT_MODELS)
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        self.features = tuple(self.features)
        self.labels = tuple(self.labels)
        if not self.features:
            raise ConfigError("enable at least one feature group")
        if not self.labels:
            raise ConfigError("enable at least one label")
        bad = set(self.features) - set(FEATURE_GROUPS)
        if bad:
            raise ConfigError(f"unknown feature groups {sorted(bad)}")
        bad = set(self.labels) - set(labels.LABELS)
        if bad:
            raise ConfigError(f"unknown labels {sorted(bad)}")
        if not self.models:
            raise ConfigError("configure at least one model")

    @property
    def out(self) -> Path:
        return self.paths.output_dir

    @classmethod
    def from_dict(cls, data: dict, base: Path = Path(".")) -> "PipelineConfig":
        known = {"paths", "ingest", "provider", "features", "labels", "models", "seed", "n_jobs"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "paths" not in data:
            raise ConfigError("config needs a 'paths' object")
        kwargs = {"paths": Paths.from_dict(data["paths"], base)}
        if "ingest" in data:
            kwargs["ingest"] = ingest.IngestConfig.from_dict(data["ingest"])
        if "provider" in data:
            kwargs["provider"] = dict(data["provider"])
        for key in ("features", "labels"):
            if key in data:
                kwargs[key] = tuple(data[key])
        if "models" in data:
            try:
                kwargs["models"] = tuple(ModelSpec.from_dict(m) for m in data["models"])
            except (TypeError, ValidationError) as exc:
                raise ConfigError(f"bad model spec: {exc}") from exc
        for key in ("seed", "n_jobs"):
            if key in data:
                kwargs[key] = int(data[key])
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as exc:
            raise InputFileError(path, "config file not found") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, base=path.parent)


def substream_seed(seed: int, *names: str) -> int:
    """Independent, reproducible seed for a named pipeline stage."""
    keys = [seed, *(zlib.crc32(n.encode("utf-8")) for n in names)]
    return int(np.random.SeedSequence(keys).generate_state(1)[0])


def _fmt_float(v: float) -> str:
    return repr(float(v))


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------

@dataclass
class IngestOutcome:
    corpora: dict
    exclusions: list
    stats: ingest.ParseStats
    n_rows: int
    summary: str


def run_ingest(cfg: PipelineConfig) -> IngestOutcome:
    files = ingest.discover_exports(cfg.paths.exports)
    stats = ingest.ParseStats()
    messages = []
    for path, app, fmt in files:
        messages.extend(ingest.parse_export(path, app, fmt, stats=stats))
    messages = ingest.deduplicate(messages)
    corpora, exclusions = ingest.build_corpora(messages, cfg.ingest)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    kept = [m for uid in sorted(corpora) for m in corpora[uid].messages()]
    n_rows = ingest.write_canonical_csv(out / "messages.csv", kept)
    ingest.write_exclusions(out / "exclusions.csv", exclusions)
    summary = ingest.format_ingest_summary(corpora)
    summary += (f"\nrows read {stats.rows_read}, parsed {stats.parsed}, dropped {stats.dropped} "
                f"(received {stats.received}, empty {stats.empty_text}, malformed {stats.malformed})\n"
                f"users kept {len(corpora)}, excluded {len(exclusions)}\n")
    (out / "ingest_summary.txt").write_text(summary, encoding="utf-8")
    return IngestOutcome(corpora, exclusions, stats, n_rows, summary)


def load_corpora(cfg: PipelineConfig) -> dict:
    path = cfg.out / "messages.csv"
    if not path.is_file():
        raise InputFileError(path, "canonical messages missing; run ingest first")
    corpora, _ = ingest.build_corpora(ingest.read_canonical_csv(path), cfg.ingest)
    return corpora


# ---------------------------------------------------------------------------
# featurize
# ---------------------------------------------------------------------------

@dataclass
class FeatureTable:
    user_ids: list[str]
    names: list[str]
    X: np.ndarray

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("user_id", *self.names))
            for uid, row in zip(self.user_ids, self.X):
                writer.writerow((uid, *(_fmt_float(v) for v in row)))

    @classmethod
    def read(cls, path) -> "FeatureTable":
        path = Path(path)
        if not path.is_file():
            raise InputFileError(path, "feature matrix missing; run featurize first")
        with path.open(encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        X = np.array([[float(v) for v in r[1:]] for r in rows], dtype=np.float64).reshape(len(rows), len(header) - 1)
        return cls([r[0] for r in rows], header[1:], X)


def make_provider(cfg: PipelineConfig):
    provider = embed.make_provider(cfg.provider)
    if cfg.paths.cache_dir is not None:
        provider = embed.CachedProvider(provider, cfg.paths.cache_dir)
    return provider


def featurize_corpora(corpora: dict, cfg: PipelineConfig, provider=None) -> dict[str, FeatureTable]:
    lexicon = lexfeat.load_lexicon(cfg.paths.lexicon)
    dictionary = lexfeat.load_dictionary(cfg.paths.dictionary) if "dict" in cfg.features else None
    needs_provider = any(g in cfg.features for g in ("gpt", "gpt_riskm", "gpt_riskw", "daily_embed"))
    if needs_provider and provider is None:
        provider = make_provider(cfg)
    users = sorted(corpora)
    dim = provider.dimension if needs_provider else 0
    names = {
        "riskword": [f"riskword.{p}" for p in lexicon.phrase_names],
        "riskcat": [f"riskcat.{c}" for c in lexicon.categories],
        "dict": [f"dict.{c}" for c in dictionary.names] if dictionary else [],
        **{g: [f"{g}.{i}" for i in range(dim)] for g in ("gpt", "gpt_riskm", "gpt_riskw", "daily_embed")},
    }
    compute = {
        "riskword": lambda c: lexfeat.riskword_features(c, lexicon),
        "riskcat": lambda c: lexfeat.riskcat_features(c, lexicon),
        "dict": lambda c: lexfeat.dict_category_features(c, dictionary),
        "gpt": lambda c: embed.gpt_features(c, provider),
        "gpt_riskm": lambda c: embed.gpt_riskm_features(c, lexicon, provider),
        "gpt_riskw": lambda c: embed.gpt_riskw_features(c, lexicon, provider),
        "daily_embed": lambda c: embed.daily_embedding_features(c, provider),
    }
    tables = {}
    for group in FEATURE_GROUPS:
        if group not in cfg.features:
            continue
        rows = [compute[group](corpora[u]) for u in users]
        X = np.vstack(rows) if rows else np.zeros((0, len(names[group])))
        tables[group] = FeatureTable(users, names[group], X)
    return tables


def merge_tables(tables: dict[str, FeatureTable]) -> FeatureTable:
    groups = [g for g in FEATURE_GROUPS if g in tables]
    first = tables[groups[0]]
    X = np.hstack([tables[g].X for g in groups]) if groups else np.zeros((0, 0))
    return FeatureTable(list(first.user_ids), [n for g in groups for n in tables[g].names], X)


def run_featurize(cfg: PipelineConfig, provider=None) -> FeatureTable:
    corpora = load_corpora(cfg)
    tables = featurize_corpora(corpora, cfg, provider=provider)
    for group, table in tables.items():
        table.write(cfg.out / "features" / f"{group}.csv")
    merged = merge_tables(tables)
    merged.write(cfg.out / "features.csv")
    return merged


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def build_dataset(table: FeatureTable, label_sets: dict, label: str) -> select.Dataset | None:
    keep = [i for i, u in enumerate(table.user_ids) if u in label_sets and label_sets[u].get(label) is not None]
    if len(keep) < MIN_LABELED_USERS:
        logger.warning("label %s: only %d labeled users (< %d); skipped", label, len(keep), MIN_LABELED_USERS)
        return None
    y = np.array([label_sets[table.user_ids[i]].get(label) for i in keep], dtype=np.int64)
    if y.min() == y.max():
        logger.warning("label %s: single class among labeled users; skipped", label)
        return None
    return select.Dataset(table.X[keep], y, list(table.names), [table.user_ids[i] for i in keep])


def run_evaluate(cfg: PipelineConfig) -> dict:
    if cfg.paths.survey is None:
        raise ConfigError("paths.survey is required for evaluate")
    if not cfg.paths.survey.is_file():
        raise InputFileError(cfg.paths.survey, "survey CSV not found")
    table = FeatureTable.read(cfg.out / "features.csv")
    allowed = [n for n in table.names if select.feature_group(n) in cfg.features]
    if len(allowed) != len(table.names):
        cols = [table.names.index(n) for n in allowed]
        table = FeatureTable(table.user_ids, allowed, table.X[:, cols])
    groups = [g for g in FEATURE_GROUPS if g in cfg.features]
    label_sets = labels.derive_labels(labels.read_survey_csv(cfg.paths.survey))
    out = cfg.out / "evaluation"
    (out / "traces").mkdir(parents=True, exist_ok=True)
    labels.write_labels_csv(cfg.out / "labels.csv", label_sets)

    results = {"seed": cfg.seed, "feature_groups": groups, "labels": {}, "skipped": []}
    for label in cfg.labels:
        ds = build_dataset(table, label_sets, label)
        if ds is None:
            results["skipped"].append(label)
            continue
        corr = select.correlation_report(ds.X, ds.y, ds.feature_names, groups=groups)
        tt = select.ttest_report(ds.X, ds.y, ds.feature_names, groups=groups)
        block = {
            "n": int(ds.y.shape[0]),
            "n_positive": int(ds.y.sum()),
            "n_negative": int((1 - ds.y).sum()),
            "correlation": {"threshold": 0.2, "groups": corr.group_counts, "total": corr.total},
            "ttest": {"alpha": 0.05, "groups": tt.group_counts, "total": tt.total},
            "models": {},
        }
        for spec in cfg.models:
            seed = substream_seed(cfg.seed, "evaluate", label, spec.kind)
            logger.info("LOO %s / %s on %d users", label, spec.kind, ds.y.shape[0])
            res = select.loo_evaluate(ds.X, ds.y, spec, seed=seed, n_jobs=cfg.n_jobs)
            tp, fp, fn, tn = res.confusion
            block["models"][spec.kind] = {
                "f1_minority": res.f1_minority,
                "minority_class": res.minority,
                "confusion": {"tp": tp, "fp": fp, "fn": fn, "tn": tn},
                "mean_k": res.mean_k,
                "selection_groups": select.selection_group_averages(res, ds.feature_names, groups),
            }
            trace_doc = {
                "label": label, "model": spec.kind, "user_ids": ds.user_ids, "feature_names": ds.feature_names,
                "iterations": [t.to_dict() for t in res.traces],
            }
            (out / "traces" / f"{label}__{spec.kind}.json").write_text(
                json.dumps(trace_doc, sort_keys=True) + "\n", encoding="utf-8")
        results["labels"][label] = block

    (out / "evaluation.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_summary_csvs(results, out)
    render_report(cfg)
    return results


def _write_summary_csvs(results: dict, out: Path) -> None:
    groups = results["feature_groups"]
    with (out / "summary.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("label", "model", "n", "n_positive", "n_negative", "minority_class", "f1_minority",
                    "tp", "fp", "fn", "tn", "mean_k"))
        for label, block in results["labels"].items():
            for kind, m in block["models"].items():
                c = m["confusion"]
                w.writerow((label, kind, block["n"], block["n_positive"], block["n_negative"], m["minority_class"],
                            _fmt_float(m["f1_minority"]), c["tp"], c["fp"], c["fn"], c["tn"], _fmt_float(m["mean_k"])))
    with (out / "selection_groups.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("label", "model", *groups, "K"))
        for label, block in results["labels"].items():
            for kind, m in block["models"].items():
                w.writerow((label, kind, *(_fmt_float(m["selection_groups"].get(g, 0.0)) for g in groups),
                            _fmt_float(m["mean_k"])))
    with (out / "relevance.csv").open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("test", "label", *groups, "total"))
        for test in ("correlation", "ttest"):
            for label, block in results["labels"].items():
                r = block[test]
                w.writerow((test, label, *(r["groups"].get(g, 0) for g in groups), r["total"]))


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def render_report(cfg: PipelineConfig) -> Path:
    path = cfg.out / "evaluation" / "evaluation.json"
    if not path.is_file():
        raise InputFileError(path, "evaluation results missing; run evaluate first")
    results = json.loads(path.read_text(encoding="utf-8"))
    groups = results["feature_groups"]
    kinds = sorted({k for b in results["labels"].values() for k in b["models"]})
    lines = ["# Evaluation report", "", f"seed: {results['seed']}", ""]
    lines += ["## Minority-class F1 (leave-one-out)", "", "| label | n (pos/neg) | " + " | ".join(kinds) + " |",
              "|---|---|" + "---|" * len(kinds)]
    for label, b in results["labels"].items():
        cells = [f"{b['models'][k]['f1_minority']:.3f}" if k in b["models"] else "-" for k in kinds]
        lines.append(f"| {label} | {b['n']} ({b['n_positive']}/{b['n_negative']}) | " + " | ".join(cells) + " |")
    lines += ["", "## Average selected features per group", "",
              "| label | model | " + " | ".join(groups) + " | K |", "|---|---|" + "---|" * (len(groups) + 1)]
    for label, b in results["labels"].items():
        for kind, m in b["models"].items():
            cells = [f"{m['selection_groups'].get(g, 0.0):.2f}" for g in groups]
            lines.append(f"| {label} | {kind} | " + " | ".join(cells) + f" | {m['mean_k']:.1f} |")
    for test, title in (("correlation", "Features with |r| > 0.2"), ("ttest", "Features with t-test p < 0.05")):
        lines += ["", f"## {title}", "", "| label | " + " | ".join(groups) + " | total |",
                  "|---|" + "---|" * (len(groups) + 1)]
        for label, b in results["labels"].items():
            r = b[test]
            lines.append(f"| {label} | " + " | ".join(str(r["groups"].get(g, 0)) for g in groups) + f" | {r['total']} |")
    if results["skipped"]:
        lines += ["", "Skipped labels (too few labeled users or one class): " + ", ".join(results["skipped"])]
    out = cfg.out / "report.md"
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out


def with_overrides(cfg: PipelineConfig, seed=None, labels_=None, features=None, provider=None) -> PipelineConfig:
    changes = {}
    if seed is not None:
        changes["seed"] = seed
    if labels_:
        changes["labels"] = tuple(labels_)
    if features:
        changes["features"] = tuple(features)
    if provider:
        changes["provider"] = {**cfg.provider, "kind": provider}
    return replace(cfg, **changes) if changes else cfg
