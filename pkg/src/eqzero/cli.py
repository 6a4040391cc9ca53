"""Command-line entry point.

Subcommands: gen-maps, train, eval, audit, plot. Every configuration field
is reachable through ``--config FILE`` (ini-style sections) plus repeatable
``--set section.field=value`` overrides. Relative output paths resolve
against $EQZERO_OUTPUT_ROOT when it is set.

Exit codes: 0 success, 1 I/O failure, 2 configuration error,
3 equivariance-audit failure, 4 training divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import env as envm
from .harness import (
    ExperimentConfig,
    apply_sets,
    audit_model,
    config_from_text,
    config_to_text,
    episodes_csv,
    evaluate,
    report_csv,
)
from .plotting import render_grouped_bars, render_line_chart
from .training import TrainingDiverged, train
from .worldmodel import VARIANTS, WorldModel

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_AUDIT = 3
EXIT_DIVERGED = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _out_path(raw: str) -> Path:
    path = Path(raw)
    root = os.environ.get("EQZERO_OUTPUT_ROOT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _load_config(args) -> ExperimentConfig:
    config = ExperimentConfig()
    try:
        if getattr(args, "config", None):
            text = Path(args.config).read_text()
            config = config_from_text(text)
        config = apply_sets(config, list(getattr(args, "set", []) or []))
        if getattr(args, "variant", None):
            config = apply_sets(config, [f"run.variant={args.variant}"])
        if getattr(args, "seed", None) is not None:
            config = apply_sets(config, [f"run.seed={args.seed}"])
    except FileNotFoundError as exc:
        raise CliError(f"config file not found: {exc.filename}", EXIT_IO) from exc
    except (KeyError, ValueError) as exc:
        raise CliError(f"bad configuration: {exc}", EXIT_CONFIG) from exc
    return config


def cmd_gen_maps(args) -> int:
    config = _load_config(args)
    out = _out_path(args.out)
    splits = envm.make_splits(
        seed=config.run.split_seed,
        n_train=config.run.n_train_maps,
        n_eval=config.run.n_eval_maps,
        side=config.env.side,
    )
    x_keys = {envm.canonical_form(m) for m in splits.x}
    for maze in splits.y:
        assert envm.canonical_form(maze) not in x_keys, "split generator produced overlap"
    try:
        written = envm.save_splits(out, splits)
    except OSError as exc:
        raise CliError(f"cannot write maps under {out}: {exc}", EXIT_IO) from exc
    for path in written:
        print(path)
    return EXIT_OK


def _load_splits(raw: str) -> envm.Splits:
    try:
        return envm.load_splits(_out_path(raw))
    except FileNotFoundError as exc:
        raise CliError(str(exc), EXIT_IO) from exc
    except ValueError as exc:
        raise CliError(f"bad split manifest: {exc}", EXIT_CONFIG) from exc


def cmd_train(args) -> int:
    config = _load_config(args)
    splits = _load_splits(args.maps)
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(config_to_text(config))
    try:
        result = train(
            variant=config.run.variant,
            model_config=config.model,
            env_config=config.env,
            mcts_config=config.mcts,
            train_config=config.train,
            maps=list(splits.x),
            out_dir=out,
        )
    except TrainingDiverged as exc:
        where = exc.checkpoint_path or "no checkpoint written"
        print(f"training diverged: {exc} (last good checkpoint: {where})", file=sys.stderr)
        return EXIT_DIVERGED
    print(result.checkpoint_path)
    print(result.metrics_path)
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args)
    splits = _load_splits(args.maps)
    ckpt = _out_path(args.checkpoint)
    if not ckpt.exists():
        raise CliError(f"checkpoint not found: {ckpt}", EXIT_IO)
    model = WorldModel.load(ckpt)
    records = evaluate(
        model,
        splits,
        env_config=config.env,
        mcts_config=config.mcts,
        n_seeds=config.run.eval_seeds,
        seed=config.run.seed,
    )
    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    episodes_path = out / "episodes.csv"
    report_path = out / "report.csv"
    episodes_path.write_text(episodes_csv(records))
    report_path.write_text(report_csv(records))
    print(episodes_path)
    print(report_path)
    return EXIT_OK


def cmd_audit(args) -> int:
    config = _load_config(args)
    if args.checkpoint:
        ckpt = _out_path(args.checkpoint)
        if not ckpt.exists():
            raise CliError(f"checkpoint not found: {ckpt}", EXIT_IO)
        model = WorldModel.load(ckpt)
    else:
        model = WorldModel.initialize(config.model, config.run.variant, args.model_seed)
    import dataclasses

    mcts_cfg = dataclasses.replace(config.mcts, budget=args.budget)
    env_cfg = dataclasses.replace(config.env, side=model.config.obs_size)
    report = audit_model(model, env_cfg, mcts_cfg, n_cases=args.cases, seed=args.seed)
    text = report.to_text(budget=args.budget, seed=args.seed)
    if args.out:
        path = _out_path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        print(path)
    else:
        sys.stdout.write(text)
    if model.variant == "EqMuZero" and report.n_fail > 0:
        print(f"audit FAILED for {model.variant}: {report.n_fail} case(s)", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def _read_csv(path: Path, expected_header: str) -> list[list[str]]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc
    lines = text.splitlines()
    if not lines or lines[0] != expected_header:
        raise CliError(f"{path}:1: expected header {expected_header!r}", EXIT_CONFIG)
    n_cols = len(expected_header.split(","))
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != n_cols:
            raise CliError(f"{path}:{i}: expected {n_cols} fields, got {len(fields)}", EXIT_CONFIG)
        rows.append(fields)
    return rows


def cmd_plot(args) -> int:
    from .harness import REPORT_HEADER, SETTINGS
    from .training import METRICS_HEADER

    out = _out_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    wrote = []
    if args.metrics:
        rows = _read_csv(_out_path(args.metrics), METRICS_HEADER)
        try:
            steps = [float(r[0]) for r in rows]
            series = [
                (label, steps, [float(r[idx]) for r in rows])
                for idx, label in ((1, "total"), (2, "policy"), (3, "value"), (4, "reward"))
            ]
            returns = [(("self-play return"), steps, [float(r[5]) for r in rows])]
        except ValueError as exc:
            raise CliError(f"{args.metrics}: non-numeric metric value ({exc})", EXIT_CONFIG) from exc
        losses_svg = render_line_chart(series, "training losses", "step", "loss")
        returns_svg = render_line_chart(returns, "self-play return", "step", "return")
        (out / "metrics_losses.svg").write_text(losses_svg)
        (out / "metrics_return.svg").write_text(returns_svg)
        wrote += [out / "metrics_losses.svg", out / "metrics_return.svg"]
    if args.report:
        rows = _read_csv(_out_path(args.report), REPORT_HEADER)
        variants = sorted({r[0] for r in rows})
        by_key = {(r[0], r[1]): (float(r[2]), float(r[3])) for r in rows}
        series = []
        for variant in variants:
            means = [by_key.get((variant, s), (0.0, 0.0))[0] for s in SETTINGS]
            stds = [by_key.get((variant, s), (0.0, 0.0))[1] for s in SETTINGS]
            series.append((variant, means, stds))
        bars = render_grouped_bars(list(SETTINGS), series, "evaluation returns", "mean return")
        (out / "report_bars.svg").write_text(bars)
        wrote.append(out / "report_bars.svg")
    if not wrote:
        raise CliError("nothing to plot: pass --metrics and/or --report", EXIT_CONFIG)
    for path in wrote:
        print(path)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config file (ini sections)")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.FIELD=VALUE",
                   help="override any config field; repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eqzero",
        description="rotation-equivariant world-model planning toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-maps", help="generate training/evaluation map splits")
    _add_common(p)
    p.add_argument("--out", required=True, help="directory for map files and manifest")
    p.set_defaults(fn=cmd_gen_maps)

    p = sub.add_parser("train", help="train a world model on the X maps")
    _add_common(p)
    p.add_argument("--maps", required=True, help="directory with a split manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--variant", choices=VARIANTS, help="agent variant")
    p.add_argument("--seed", type=int, help="run seed override")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on same/rotated/different")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--maps", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, help="run seed override")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("audit", help="paired-search equivariance audit")
    _add_common(p)
    p.add_argument("--checkpoint", help="audit this checkpoint")
    p.add_argument("--variant", choices=VARIANTS, help="variant for random-weight audits")
    p.add_argument("--model-seed", type=int, default=0, help="weights seed when no checkpoint")
    p.add_argument("--cases", type=int, default=100, help="observations to audit")
    p.add_argument("--budget", type=int, default=50, help="simulations per search")
    p.add_argument("--seed", type=int, default=0, help="audit case seed")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("plot", help="render SVG figures from metrics/report CSVs")
    p.add_argument("--metrics", help="metrics.csv from training")
    p.add_argument("--report", help="report.csv from evaluation")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_plot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
