"""Command-line entry point: ``rcpd {synth,replay,mine,stream,rules}``.

Exit status is 0 on success, 1 on a validation or data error and 2 on a
usage error. Values from ``--config`` fill in anything not given as a flag.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ToolkitConfig, load_config
from .errors import RCPDError
from .trace_model import SCHEMA_VERSION

log = logging.getLogger("rcpd")

DEFAULT_STRATEGIES = "full,no_think,think_rank_5,rcpd"


def _csv_ints(text: str) -> list[int]:
    try:
        out = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rcpd", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"rcpd {__version__} schema_version {SCHEMA_VERSION}")
    p.add_argument("--config", help="TOML config file; flags override its values")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="{synth,replay,mine,stream,rules}")

    s = sub.add_parser("synth", help="generate a synthetic corpus")
    s.add_argument("--n", type=int, help="number of traces")
    s.add_argument("--seed", type=int)
    s.add_argument("--preset", help="named parameter preset (see README)")
    s.add_argument("--out", default="-", help="output JSONL path, '-' for stdout")

    r = sub.add_parser("replay", help="evaluate strategies over a corpus")
    r.add_argument("--corpus", required=True)
    r.add_argument(
        "--strategy",
        default=DEFAULT_STRATEGIES,
        help="comma-separated kinds: full, budget_force, no_think, think_rank_5, deer, rcpd",
    )
    r.add_argument("--budget", type=int, help="budget_tokens for budget_force")
    r.add_argument("--budgets", type=_csv_ints, help="sweep budget_force over these budgets")
    r.add_argument("--deer-threshold", type=float)
    r.add_argument("--rules-file", help="JSON or TOML rules for rcpd (default: built-in rules)")
    r.add_argument("--format", choices=("table", "csv"))
    r.add_argument("--out", default="-")
    r.add_argument("--stage-profile", help="also write per-depth stage statistics as CSV here")

    m = sub.add_parser("mine", help="train the boosted-tree miner and distill rules")
    m.add_argument("--corpus", required=True)
    m.add_argument("--depth", type=int)
    m.add_argument("--trees", type=int)
    m.add_argument("--lr", type=float)
    m.add_argument("--seed", type=int)
    m.add_argument("--max-rules", type=int)
    m.add_argument("--linear", action="store_true", help="split on raw ranks instead of log2 ranks")
    m.add_argument("--folds", type=int, help="cross-validation folds (0 skips)")
    m.add_argument("--emit-rules", help="write distilled rules as JSON here")
    m.add_argument("--report", help="write importance, rules and CV metrics as JSON here")

    st = sub.add_parser("stream", help="serve the line protocol on stdin/stdout")
    st.add_argument("--rules-file")
    st.add_argument("--socket", help="serve on this Unix socket path instead of stdio")
    st.add_argument("--per-token", action="store_true", help="evaluate rules at every token, not per sentence")

    ru = sub.add_parser("rules", help="inspect rule sets")
    ru_sub = ru.add_subparsers(dest="rules_command", metavar="{show}")
    show = ru_sub.add_parser("show", help="print a rule set")
    show.add_argument("--rules-file")
    show.add_argument("--json", action="store_true", help="print the JSON form")
    return p


def _open_out(path):
    if path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def _write(path, text):
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


def _rules(path, cfg: ToolkitConfig):
    from .rules import load_rules

    return load_rules(path) if path else cfg.rules


def _corpus(path):
    from .trace_model import parse_corpus

    try:
        return parse_corpus(path)
    except OSError as exc:
        raise RCPDError(f"cannot read corpus {path}: {exc.strerror}") from None


def format_rules(rules) -> str:
    lines = []
    for r in rules:
        parts = [f"{r.rule_id}: current <= {r.current_threshold}"]
        parts += [f"r{o} <= {t}" for o, t in r.history_thresholds]
        lines.append(", ".join(parts))
    return "\n".join(lines) + "\n"


# -- subcommands ------------------------------------------------------------------


def cmd_synth(args, cfg: ToolkitConfig) -> int:
    from dataclasses import replace

    from . import synth
    from .trace_model import dumps_corpus

    params = synth.preset(args.preset or cfg.synth.preset)
    n = args.n if args.n is not None else cfg.synth.n
    seed = args.seed if args.seed is not None else cfg.synth.seed
    if n is not None:
        params = replace(params, n_traces=n)
    if seed is not None:
        params = replace(params, seed=seed)
    corpus = synth.generate(params)
    _write(args.out, dumps_corpus(corpus))
    log.info("wrote %d traces", len(corpus))
    return 0


def _strategy_configs(args, cfg: ToolkitConfig):
    from .strategies import Kind, StrategyConfig
    from .errors import StrategyError

    kinds = [k.strip() for k in args.strategy.split(",") if k.strip()]
    budgets = args.budgets or (list(cfg.replay.budgets) if cfg.replay.budgets else None)
    out = []
    for k in kinds:
        try:
            kind = Kind(k)
        except ValueError:
            raise StrategyError(f"unknown strategy {k!r}") from None
        if kind is Kind.BUDGET_FORCE:
            if args.budget is not None:
                out.append(StrategyConfig.make(kind, budget=args.budget))
            elif budgets:
                out.append(StrategyConfig.make(kind, budget=budgets[0]))
            else:
                raise StrategyError("budget_force needs --budget or --budgets")
        elif kind is Kind.DEER:
            thr = args.deer_threshold if args.deer_threshold is not None else cfg.replay.deer_threshold
            out.append(StrategyConfig.make(kind, deer_threshold=thr))
        elif kind is Kind.RCPD:
            out.append(StrategyConfig.make(kind, rules=_rules(args.rules_file, cfg)))
        else:
            out.append(StrategyConfig.make(kind))
    # a single --budget wins over a sweep
    return out, (budgets if args.budget is None else None)


def cmd_replay(args, cfg: ToolkitConfig) -> int:
    from .evaluator import emit_report, emit_stage_profile, evaluate_corpus, stage_profile

    corpus = _corpus(args.corpus)
    configs, budgets = _strategy_configs(args, cfg)
    reports = evaluate_corpus(corpus, configs, budgets=budgets)
    _write(args.out, emit_report(reports, args.format or cfg.replay.format))
    if args.stage_profile:
        _write(args.stage_profile, emit_stage_profile(stage_profile(corpus)))
    return 0


def cmd_mine(args, cfg: ToolkitConfig) -> int:
    from . import miner
    from .synth import label_windows

    mc = cfg.miner
    depth = args.depth if args.depth is not None else mc.depth
    trees = args.trees if args.trees is not None else mc.trees
    lr = args.lr if args.lr is not None else mc.lr
    seed = args.seed if args.seed is not None else mc.seed
    max_rules = args.max_rules if args.max_rules is not None else mc.max_rules
    folds = args.folds if args.folds is not None else mc.folds
    log_transform = mc.log_transform and not args.linear

    windows = label_windows(_corpus(args.corpus))
    kw = dict(depth=depth, n_trees=trees, learning_rate=lr, log_transform=log_transform, min_leaf=mc.min_leaf)
    model = miner.train(windows, seed=seed, **kw)
    rules = miner.distill_rules(model, max_rules, windows)

    out = ["feature\timportance", model.importance_table().rstrip("\n"), "", "distilled rules:"]
    out.append(format_rules(rules).rstrip("\n") if len(rules) else "(none)")
    report = {
        "importance": {n: round(v, 6) for n, v in zip(miner.FEATURE_NAMES, model.importance)},
        "rules": rules.to_list(),
        "params": {"depth": depth, "trees": trees, "lr": lr, "seed": seed, "log_transform": log_transform},
    }
    if folds and folds >= 2:
        cv = miner.cross_validate(windows, folds=folds, seed=seed, **kw)
        out += ["", "fold\tprecision\trecall\tf1\trcp_recall_pm1"]
        for i, f in enumerate(cv.folds):
            out.append(f"{i}\t{f.precision:.4f}\t{f.recall:.4f}\t{f.f1:.4f}\t{f.tolerant_recall:.4f}")
        out.append(
            f"mean\t{cv.mean_precision:.4f}\t{cv.mean_recall:.4f}\t{cv.mean_f1:.4f}\t{cv.mean_tolerant_recall:.4f}"
        )
        report["cv"] = [
            {"precision": f.precision, "recall": f.recall, "f1": f.f1, "rcp_recall_pm1": f.tolerant_recall,
             "degenerate": f.degenerate}
            for f in cv.folds
        ]
    sys.stdout.write("\n".join(out) + "\n")
    if args.emit_rules:
        _write(args.emit_rules, rules.dumps())
    if args.report:
        _write(args.report, json.dumps(report, indent=2) + "\n")
    return 0


def cmd_stream(args, cfg: ToolkitConfig) -> int:
    from . import stream

    rules = _rules(args.rules_file, cfg)
    per_token = args.per_token or cfg.stream.per_token
    if args.socket:
        server = stream.serve_unix(args.socket, rules, cfg.segmenter, per_token)
        log.info("listening on %s", args.socket)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        finally:
            server.server_close()
            Path(args.socket).unlink(missing_ok=True)
        return 0
    stream.serve(sys.stdin, sys.stdout, stream.Controller(rules, cfg.segmenter, per_token=per_token))
    return 0


def cmd_rules(args, cfg: ToolkitConfig) -> int:
    rules = _rules(args.rules_file, cfg)
    sys.stdout.write(rules.dumps() if args.json else format_rules(rules))
    return 0


COMMANDS = {"synth": cmd_synth, "replay": cmd_replay, "mine": cmd_mine, "stream": cmd_stream, "rules": cmd_rules}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None or (args.command == "rules" and args.rules_command is None):
        parser.print_usage(sys.stderr)
        sys.stderr.write("rcpd: error: a subcommand is required\n")
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except RCPDError as exc:
        sys.stderr.write(f"rcpd: error: {exc}\n")
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
