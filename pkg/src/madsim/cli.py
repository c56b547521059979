"""Command line: ``madsim simulate | analyze | topics``.

Exit codes: 0 success (including "nothing to do"), 1 configuration or
input problem, 2 I/O error.  Results go to stdout; progress and the
effective configuration go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import yaml

from .model import BackendConfig, BatchConfig, ConfigError, ToxicityLevel, validate_batch_config
from .runner import LogMismatch, read_log, resume_batch, run_batch
from .stats import InsufficientData, analyze, render_report, summary_csv
from .topics import domain_counts, load_topics

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2

# flag dest -> config-file key (same name; nested backend keys are flat in the file)
BATCH_KEYS = ("iterations", "toxicity", "seed", "max_arguments", "persuadability",
              "out", "topics", "workers")
BACKEND_KEYS = ("backend", "base_url", "model", "api_key_env", "temperature",
                "max_tokens", "timeout", "max_attempts", "backoff_base", "max_in_flight",
                "refusal_rate")


def _common_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", type=Path, help="YAML file with any of the options below")
    g.add_argument("--seed", type=int)
    g.add_argument("--out")
    g.add_argument("--backend", choices=["synthetic", "http"])
    g.add_argument("--base-url")
    g.add_argument("--model")
    g.add_argument("--workers", type=int)
    g.add_argument("--max-arguments", type=int)
    g.add_argument("--toxicity", type=str.lower,
                   help="no|mild|moderate|heavy; comma-separate to run several conditions")
    g.add_argument("--iterations", type=int)
    g.add_argument("--persuadability", type=float)
    g.add_argument("--topics", help="topic file (domain|proposition per line)")
    g.add_argument("--api-key-env", help="environment variable holding the API key")
    g.add_argument("--temperature", type=float)
    g.add_argument("--max-tokens", type=int)
    g.add_argument("--timeout", type=float)
    g.add_argument("--max-attempts", type=int)
    g.add_argument("--backoff-base", type=float)
    g.add_argument("--max-in-flight", type=int)
    g.add_argument("--refusal-rate", action="append", metavar="LEVEL=P",
                   help="synthetic refusal probability, e.g. heavy=1.0 (repeatable)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = argparse.ArgumentParser(prog="madsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="run or resume a batch")
    sim.add_argument("--quiet", action="store_true", help="no progress on stderr")

    ana = sub.add_parser("analyze", parents=[common], help="summary report from run logs")
    ana.add_argument("logs", nargs="+", type=Path)
    ana.add_argument("--format", choices=["text", "csv"], default="text")
    ana.add_argument("--report-dir", type=Path,
                     help="where summary.csv and hist_<level>.csv go (default: --out or .)")

    top = sub.add_parser("topics", parents=[common], help="inspect the topic pool")
    top.add_argument("action", choices=["list", "count"])
    top.add_argument("--domain")
    top.add_argument("--format", choices=["text", "csv"], default="text")
    return parser


def _parse_rates(items) -> dict[str, float]:
    if isinstance(items, dict):
        return {str(k).lower(): float(v) for k, v in items.items()}
    rates = {}
    for item in items or []:
        level, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--refusal-rate expects LEVEL=P, got {item!r}")
        try:
            rates[level.strip().lower()] = float(value)
        except ValueError:
            raise ConfigError(f"--refusal-rate: {value!r} is not a number") from None
    return rates


def effective_settings(args: argparse.Namespace) -> dict:
    """Config file values overridden by any flag that was given."""
    settings: dict = {}
    if args.config is not None:
        try:
            loaded = yaml.safe_load(args.config.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{args.config}: expected a mapping of option: value")
        unknown = set(loaded) - set(BATCH_KEYS) - set(BACKEND_KEYS)
        if unknown:
            raise ConfigError(f"{args.config}: unknown keys {sorted(unknown)}")
        settings.update(loaded)
    for key in BATCH_KEYS + BACKEND_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _levels(value) -> list[ToxicityLevel]:
    raw = value if isinstance(value, list) else str(value).split(",")
    try:
        return [ToxicityLevel(str(v).strip().lower()) for v in raw]
    except ValueError:
        raise ConfigError(f"--toxicity: expected no|mild|moderate|heavy, got {value!r}") from None


def batch_configs(settings: dict) -> list[BatchConfig]:
    problems = []
    if "iterations" not in settings:
        problems.append("--iterations is required")
    if "out" not in settings:
        problems.append("--out is required")
    if problems:
        raise ConfigError(problems)
    try:
        backend = BackendConfig(
            kind=settings.get("backend", "synthetic"),
            refusal_rate=_parse_rates(settings.get("refusal_rate")),
            **{k: settings[k] for k in BACKEND_KEYS[1:-1] if k in settings},
        )
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    levels = _levels(settings.get("toxicity", "no"))
    out = str(settings["out"])
    configs = []
    for level in levels:
        if len(levels) > 1 and "{toxicity}" not in out:
            p = Path(out)
            path = p.with_name(f"{p.stem}_{level.value}{p.suffix or '.jsonl'}")
        else:
            path = Path(out.replace("{toxicity}", level.value))
        cfg = BatchConfig(
            iterations=settings["iterations"],
            toxicity=level,
            seed=settings.get("seed", 0),
            max_arguments=settings.get("max_arguments", 50),
            persuadability=settings.get("persuadability", 0.5),
            backend=backend,
            out=path,
            topics_path=Path(settings["topics"]) if settings.get("topics") else None,
            workers=settings.get("workers"),
        )
        configs.append(validate_batch_config(cfg))
    return configs


def _flag_for(message: str) -> str:
    for key in BATCH_KEYS + BACKEND_KEYS:
        if message.startswith(key):
            return f"--{key.replace('_', '-')}: "
    return ""


def _echo_config(cfg: BatchConfig) -> None:
    shown = asdict(cfg)
    shown["toxicity"] = cfg.toxicity.value
    shown["out"] = str(cfg.out)
    shown["topics_path"] = str(cfg.topics_path) if cfg.topics_path else None
    has_key = bool(os.environ.get(cfg.backend.api_key_env))
    shown["backend"]["api_key"] = "<redacted>" if has_key else None
    print("config: " + json.dumps(shown, sort_keys=True), file=sys.stderr)


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        configs = batch_configs(effective_settings(args))
    except ConfigError as exc:
        for v in exc.violations:
            print(f"error: {_flag_for(v)}{v}", file=sys.stderr)
        return EXIT_CONFIG
    for cfg in configs:
        _echo_config(cfg)
        try:
            if cfg.out.exists() and cfg.out.stat().st_size > 0:
                result = resume_batch(cfg, progress=not args.quiet)
            else:
                result = run_batch(cfg, progress=not args.quiet)
        except (LogMismatch, ConfigError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        if result.new_runs == 0:
            print(f"{cfg.toxicity.value}: nothing to do ({len(result.records)} runs in {cfg.out})")
        else:
            print(result.summary())
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    records = []
    seen: dict[ToxicityLevel, Path] = {}
    for path in args.logs:
        try:
            recs = read_log(path)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_IO
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not recs:
            print(f"error: {path}: no runs in log", file=sys.stderr)
            return EXIT_CONFIG
        for level in {r.toxicity for r in recs}:
            if level in seen:
                print(f"error: {level.value} runs appear in both {seen[level]} and {path}",
                      file=sys.stderr)
                return EXIT_CONFIG
            seen[level] = path
        records.extend(recs)
    try:
        result = analyze(records)
    except InsufficientData as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for level, reason in result.excluded.items():
        print(f"{level.value}: excluded from analysis, {reason}", file=sys.stderr)
    report_dir = args.report_dir or (Path(args.out) if args.out else Path("."))
    try:
        text = render_report(result.groups, result.comparisons, result.histograms, report_dir)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.format == "csv":
        sys.stdout.write(summary_csv(result.groups, result.comparisons))
    else:
        print(text)
    return EXIT_OK


def cmd_topics(args: argparse.Namespace) -> int:
    try:
        topics = load_topics(args.topics)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.domain:
        topics = [t for t in topics if t.domain.lower() == args.domain.lower()]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if args.action == "list":
        if args.format == "csv":
            w.writerow(["id", "domain", "proposition"])
            w.writerows((t.id, t.domain, t.proposition) for t in topics)
        else:
            for t in topics:
                buf.write(f"{t.domain}\t{t.proposition}\n")
    else:
        counts = domain_counts(topics)
        if args.format == "csv":
            w.writerow(["domain", "count"])
            w.writerows(counts.items())
            w.writerow(["total", len(topics)])
        elif args.domain:
            buf.write(f"{len(topics)}\n")
        else:
            for domain, n in counts.items():
                buf.write(f"{domain:<18}{n:>3}\n")
            buf.write(f"{'total':<18}{len(topics):>3}\n")
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "topics": cmd_topics}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
