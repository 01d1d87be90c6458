"""Command-line entry point: ``risktext <stage> --config cfg.json``.

Exit codes: 0 success, 1 validation or config error, 2 file I/O error,
3 embedding provider failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline, synth
from .errors import ConfigError, InputFileError, RiskTextError

logger = logging.getLogger("risktext")


def _csv_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _load(args) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig.load(args.config)
    return pipeline.with_overrides(cfg, seed=args.seed, labels_=args.labels, features=args.features,
                                   provider=args.provider)


def cmd_ingest(args) -> int:
    cfg = _load(args)
    if not cfg.paths.exports.is_dir():
        raise InputFileError(cfg.paths.exports, "export directory not found")
    outcome = pipeline.run_ingest(cfg)
    print(outcome.summary, end="")
    return 0


def cmd_featurize(args) -> int:
    cfg = _load(args)
    merged = pipeline.run_featurize(cfg)
    print(f"wrote {len(merged.user_ids)} users x {len(merged.names)} features to {cfg.out / 'features.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load(args)
    results = pipeline.run_evaluate(cfg)
    for label, block in results["labels"].items():
        for kind, m in block["models"].items():
            print(f"{label:<16} {kind:<11} F1(minority={m['minority_class']}) = {m['f1_minority']:.3f}  "
                  f"mean K = {m['mean_k']:.1f}")
    for label in results["skipped"]:
        print(f"{label:<16} skipped")
    return 0


def cmd_report(args) -> int:
    cfg = _load(args)
    print(pipeline.render_report(cfg).read_text(encoding="utf-8"), end="")
    return 0


def cmd_run(args) -> int:
    for step in (cmd_ingest, cmd_featurize, cmd_evaluate):
        step(args)
    return 0


def cmd_synth(args) -> int:
    data = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.is_file():
            raise InputFileError(path, "synth config not found")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if args.seed is not None:
        data["seed"] = args.seed
    if args.n_users is not None:
        data["n_users"] = args.n_users
    cfg = synth.SynthConfig.from_dict(data)
    result = synth.generate(cfg)
    paths = synth.write_synth(result, args.out, cfg)
    n_rows = sum(len(rows) for rows in result.exports.values())
    print(f"wrote {cfg.n_users} users, {n_rows} export rows; pipeline config at {paths['config']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="risktext", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    def stage(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--labels", type=_csv_list, help="comma-separated labels to model")
        p.add_argument("--features", type=_csv_list, help="comma-separated feature groups")
        p.add_argument("--provider", choices=("mock", "remote"), help="embedding provider kind")
        p.set_defaults(func=func)
        return p

    stage("ingest", cmd_ingest, "parse exports into the canonical message CSV")
    stage("featurize", cmd_featurize, "compute feature matrices")
    stage("evaluate", cmd_evaluate, "leave-one-out evaluation per label and model")
    stage("report", cmd_report, "render report.md from evaluation results")
    stage("run", cmd_run, "ingest, featurize and evaluate in sequence")

    p = sub.add_parser("synth", help="generate a synthetic corpus and survey")
    p.add_argument("--config", help="synth config JSON (defaults otherwise)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--n-users", type=int, dest="n_users")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RiskTextError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
