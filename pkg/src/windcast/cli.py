"""Command-line entry point: ``windcast {synth,select,train,evaluate,report} CONFIG``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline
from .data import DataError
from .evaluation import ScoreReport
from .synthetic import synth_generate

log = logging.getLogger("windcast")

EXIT_USAGE = 2
EXIT_FAILURE = 1


def _parse_override(text: str) -> tuple[str, object]:
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_config(path: str, overrides=()) -> pipeline.ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such config file: {path}")
    doc = json.loads(path.read_text())
    for key, value in overrides:
        if isinstance(value, (dict, list)) or isinstance(doc.get(key), (dict, list)):
            raise ValueError(f"--set only overrides top-level scalars, not {key!r}")
        doc[key] = value
    config = pipeline.ExperimentConfig.from_dict(doc, base_dir=path.parent)
    return pipeline.apply_seed_override(config)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(args, config) -> dict:
    if config.data.synthetic is None:
        raise ValueError("config has no 'data.synthetic' section")
    frame = synth_generate(config.data.synthetic)
    path = _out_dir(args) / "synthetic.csv"
    frame.to_csv(path)
    roles = {c.name: c.role.value for c in frame.channels}
    return {"written": [str(path)], "rows": len(frame), "channels": roles}


def cmd_select(args, config) -> dict:
    report = pipeline.run_selection(config)
    if pipeline.check_provenance(report):
        raise pipeline.ExperimentError("selection touched test rows")
    path = pipeline.write_importance(report, _out_dir(args))
    return {"written": [str(path)], "rows": len(report.importance)}


def cmd_train(args, config) -> dict:
    report = pipeline.run_experiment(config, keep_models=True)
    path = _out_dir(args) / "models.json"
    path.write_text(json.dumps(pipeline.model_document(report), indent=1, sort_keys=True) + "\n")
    return {"written": [str(path)], "models": len(report.models)}


def cmd_evaluate(args, config) -> dict:
    report = pipeline.run_experiment(config)
    leaks = pipeline.check_provenance(report)
    if leaks:
        raise pipeline.ExperimentError(f"{len(leaks)} fitted objects touched test rows")
    written = pipeline.emit_report(report, _out_dir(args), args.formats)
    return {"written": [str(p) for p in written], "degradation": report.degradations()}


def cmd_report(args, config) -> dict:
    out = Path(args.out)
    scores = out / "scores.csv"
    if not scores.is_file():
        raise DataError(f"no such file: {scores}")
    # z_bar is metadata only; keep the value from an earlier aggregates.json when present
    agg = out / "aggregates.json"
    z_bar = json.loads(agg.read_text()).get("z_bar", 1.0) if agg.is_file() else 1.0
    report = ScoreReport.from_csv(scores.read_text(), z_bar=z_bar, baselines=pipeline.baseline_names(config))
    agg.write_text(report.aggregates_json())
    return {"written": [str(agg)], "rank": report.ranks()}


COMMANDS = {
    "synth": (cmd_synth, "generate the synthetic farm as CSV"),
    "select": (cmd_select, "run variable selection and write importance.csv"),
    "train": (cmd_train, "fit every predictor and write models.json"),
    "evaluate": (cmd_evaluate, "run the full experiment and write the score report"),
    "report": (cmd_report, "rebuild aggregates.json from an existing scores.csv"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windcast", description="Hybrid short-term wind forecasting experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", help="experiment config (JSON)")
        p.add_argument("-o", "--out", default="out", help="output directory (default: out)")
        p.add_argument("--set", dest="overrides", action="append", default=[], type=_parse_override,
                       metavar="KEY=VALUE", help="override a top-level scalar config field")
        if name == "evaluate":
            p.add_argument("--formats", nargs="+", choices=("csv", "json"), default=["csv", "json"])
    return parser


def _fail(kind: str, exc: BaseException, code: int) -> int:
    print(json.dumps({"status": "error", "error": kind, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config, args.overrides)
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        return _fail("config", exc, EXIT_USAGE)
    handler = COMMANDS[args.command][0]
    try:
        result = handler(args, config)
    except DataError as exc:
        return _fail("data", exc, EXIT_FAILURE)
    except pipeline.ExperimentError as exc:
        return _fail("experiment", exc, EXIT_FAILURE)
    except (OSError, ValueError) as exc:
        return _fail(type(exc).__name__, exc, EXIT_FAILURE)
    print(json.dumps({"status": "ok", "command": args.command, **result}, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
