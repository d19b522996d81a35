"""Command-line entry point: `route-lmt <subcommand> [flags]`.

Offline workflow: `synth` makes labeled fixture data, `train` fits a
head, `calibrate` turns scores into thresholds, `route` produces
decisions, and `eval` / `sweep` / `risk` write the metric reports (CSV +
JSON, with PNG figures alongside unless --no-plots). `serve` starts the
HTTP endpoint. Every subcommand is deterministic given its flags.

Exit codes: 0 success, 2 bad user input, 1 internal error.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from . import evaluation, figures, ingest, policy, trainer
from .core import Route
from .errors import ConfigError, RoutingError
from .heads import Target
from .policy import BudgetMode
from .scorers import SCORER_KINDS, Scorer, make_scorer


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"expected comma-separated floats, got {text!r}") from exc


def _fmt_opt(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.6f}"


def _add_scorer_args(parser: argparse.ArgumentParser, repeatable: bool = False) -> None:
    parser.add_argument(
        "--scorer",
        action="append",
        choices=SCORER_KINDS,
        required=True,
        help="routing scorer" + (" (repeatable)" if repeatable else ""),
    )
    parser.add_argument("--head", help="head file for the learned scorer")
    parser.add_argument("--freq-table", help="TSV frequency table for the rarity scorer")
    parser.add_argument(
        "--bottom-fraction",
        type=float,
        default=0.3,
        help="rarity: fraction of least-frequent tokens to average (default 0.3)",
    )


def _build_scorers(args, repeatable: bool = False) -> list[Scorer]:
    kinds = args.scorer
    if not repeatable and len(kinds) != 1:
        raise ConfigError("exactly one --scorer expected here")
    if len(set(kinds)) != len(kinds):
        raise ConfigError("duplicate --scorer")
    head = ingest.load_head(args.head) if args.head else None
    freq_table = ingest.load_freq_table(args.freq_table) if args.freq_table else None
    if head is not None and "learned" not in kinds:
        raise ConfigError("--head given but no learned scorer requested")
    if freq_table is not None and "rarity" not in kinds:
        raise ConfigError("--freq-table given but no rarity scorer requested")
    return [
        make_scorer(
            kind,
            seed=getattr(args, "seed", 0),
            bottom_fraction=args.bottom_fraction,
            head=head,
            freq_table=freq_table,
        )
        for kind in kinds
    ]


def _config_echo(args) -> dict:
    skip = {"func"}
    return {
        key: (str(value) if isinstance(value, Path) else value)
        for key, value in sorted(vars(args).items())
        if key not in skip
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_synth(args) -> int:
    if args.gain_model == "planted":
        if args.weights is None:
            raise ConfigError("--weights is required for the planted gain model")
        weights = _parse_floats(args.weights)
        model = ingest.PlantedLinear(
            weights=weights, bias=args.bias, noise_sigma=args.noise_sigma
        )
        feature_dim = len(weights)
    else:
        model = ingest.Independent(
            q_small_range=tuple(_parse_floats(args.q_small_range)),
            q_large_range=tuple(_parse_floats(args.q_large_range)),
        )
        feature_dim = args.feature_dim
    config = ingest.SyntheticConfig(
        n=args.n,
        feature_dim=feature_dim,
        seed=args.seed,
        gain_model=model,
        severe_fraction=args.severe_fraction,
        direction_tags=tuple(args.directions.split(",")),
    )
    dataset, report = ingest.generate_synthetic(config)
    ingest.save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} records to {args.out}")
    print(
        f"clamped_gains={report.clamped_gains} "
        f"clamped_qualities={report.clamped_qualities} "
        f"forced_severe={report.forced_severe} "
        f"bumped_nonsevere={report.bumped_nonsevere}"
    )
    return 0


def cmd_train(args) -> int:
    dataset = ingest.load_dataset(args.dataset)
    target = Target(args.target)
    out = Path(args.out)

    def fit_one(name: str, subset) -> None:
        head, report = trainer.train_and_evaluate(
            subset,
            target,
            ridge_lambda=args.ridge_lambda,
            heldout_ratio=args.heldout_ratio,
            seed=args.seed,
        )
        if name:
            path = out.with_name(f"{out.stem}.{name}{out.suffix}")
        else:
            path = out
        ingest.save_head(head, path)
        scope = name or "all"
        print(
            f"[{scope}] wrote head to {path}: train_mse={_fmt_opt(report.train_mse)} "
            f"heldout_mse={report.heldout_mse:.6f} "
            f"heldout_spearman={_fmt_opt(report.heldout_spearman)} "
            f"n_train={report.n_train} n_heldout={report.n_heldout}"
        )

    if args.per_direction:
        for direction in sorted(dataset.directions, key=lambda d: d.tag):
            subset = ingest.Dataset(
                records=tuple(r for r in dataset if r.direction == direction)
            )
            fit_one(direction.tag, subset)
    else:
        fit_one("", dataset)
    return 0


def cmd_calibrate(args) -> int:
    dataset = ingest.load_dataset(args.dataset)
    scorer = _build_scorers(args)[0]
    ps = args.p or [0.3]
    entries = []
    scopes: list[tuple[str, list]] = [(policy.GLOBAL_SCOPE, list(dataset))]
    if args.scope == "per-direction":
        scopes = [
            (d.tag, [r for r in dataset if r.direction == d])
            for d in sorted(dataset.directions, key=lambda d: d.tag)
        ]
    for scope, records in scopes:
        scores = [scorer.score(r) for r in records]
        for p in ps:
            result = policy.calibrate_threshold(scores, p)
            entries.append(
                policy.ProfileEntry(
                    p=p, tau=result.tau, scope=scope, n_calibration=result.n_calibration
                )
            )
            note = " (degenerate: all scores equal)" if result.degenerate else ""
            print(
                f"[{scope}] p={p:.4f} tau={result.tau:.6f} "
                f"achieved_fraction={result.achieved_fraction:.4f}{note}"
            )
    profile = policy.CalibrationProfile(
        entries=tuple(entries), scorer_fingerprint=scorer.fingerprint()
    )
    ingest.save_profile(profile, args.out)
    print(f"wrote profile with {len(entries)} entries to {args.out}")
    return 0


def cmd_route(args) -> int:
    dataset = ingest.load_dataset(args.dataset)
    scorer = _build_scorers(args)[0]
    records = list(dataset)
    if args.mode == "top-p":
        scored = [(r.id, scorer.score(r)) for r in records]
        decisions = policy.route_top_p(scored, args.p)
    else:
        if not args.profile:
            raise ConfigError(f"--profile is required for mode {args.mode}")
        profile = ingest.load_profile(args.profile)
        mode = BudgetMode.HARD_CAP if args.mode == "hardcap" else BudgetMode.SOFT_THRESHOLD
        state = policy.BudgetState(window_size=args.window, mode=mode)
        decisions = []
        for record in records:
            entry = profile.lookup(args.p, record.direction.tag)
            if entry is None:
                raise ConfigError(
                    f"profile has no entry for p={args.p} "
                    f"(direction {record.direction.tag} or global)"
                )
            decision, state = policy.route_stream(
                scorer.score(record), entry.tau, state, args.p, request_id=record.id
            )
            decisions.append(decision)
    lines = ["id,score,route,rank"]
    for d in decisions:
        rank = "" if d.rank is None else d.rank
        lines.append(f"{d.id},{d.score:.6f},{d.route.value},{rank}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    n_large = sum(1 for d in decisions if d.route is Route.LARGE)
    print(
        f"routed {n_large}/{len(decisions)} to large "
        f"({n_large / len(decisions):.4f}) -> {args.out}"
    )
    return 0


def cmd_eval(args) -> int:
    dataset = ingest.load_dataset(args.dataset)
    out_dir = Path(args.out_dir)
    reports = []
    for scorer in _build_scorers(args, repeatable=True):
        reports.extend(evaluation.evaluate_router(dataset, scorer, args.p))
    paths = evaluation.emit_report(reports, [], [], out_dir, config=_config_echo(args))
    print(f"wrote {paths['metrics']} and {paths['report']}")
    if args.plots:
        png = figures.render_metrics(reports, out_dir / "metrics.png")
        print(f"wrote {png}")
    return 0


def cmd_sweep(args) -> int:
    dataset = ingest.load_dataset(args.dataset)
    out_dir = Path(args.out_dir)
    grid = _parse_floats(args.p_grid)
    curves = [
        evaluation.pareto_sweep(dataset, scorer, grid)
        for scorer in _build_scorers(args, repeatable=True)
    ]
    paths = evaluation.emit_report([], curves, [], out_dir, config=_config_echo(args))
    print(f"wrote {paths['pareto']} and {paths['report']}")
    if args.plots:
        png = figures.render_pareto(curves, out_dir / "pareto.png")
        print(f"wrote {png}")
    return 0


def cmd_risk(args) -> int:
    dataset = ingest.load_dataset(args.dataset)
    out_dir = Path(args.out_dir)
    scorer = _build_scorers(args)[0]
    records = list(dataset)
    gain_scores = [scorer.score(r) for r in records]

    if args.guard == "none":
        decisions = policy.route_top_p(list(zip(dataset.ids(), gain_scores)), args.p)
        label = scorer.label
    else:
        if args.guard == "oracle":
            guard_scores = []
            for record in records:
                if record.q_small is None:
                    raise ConfigError(f"record {record.id!r} lacks q_small for the oracle guard")
                guard_scores.append(record.q_small)
        else:
            if not args.guard_head:
                raise ConfigError("--guard-head is required for --guard predict")
            guard_head = ingest.load_head(args.guard_head)
            if guard_head.target is not Target.QUALITY:
                raise ConfigError("--guard-head must be a quality-target head")
            guard_scores = [guard_head.predict(r.features) for r in records]
        guarded = policy.route_guarded(
            records, gain_scores, guard_scores, args.p, args.guard_quantile
        )
        decisions = list(guarded.decisions)
        label = f"{scorer.label}+guard-{args.guard}"
        print(
            f"guard threshold={guarded.guard_threshold:.6f} "
            f"admitted_guarded={guarded.admitted_guarded} backfilled={guarded.backfilled}"
        )
    histogram = evaluation.risk_histogram(records, decisions, scorer_label=label)
    paths = evaluation.emit_report(
        [], [], [histogram], out_dir, config=_config_echo(args)
    )
    proportions = histogram.proportions
    for bucket, share in proportions.items():
        print(f"{bucket.value}: {histogram.counts[bucket]} ({share:.4f})")
    print(f"wrote {paths['risk']} and {paths['report']}")
    if args.plots:
        png = figures.render_risk([histogram], out_dir / "risk.png")
        print(f"wrote {png}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    head = ingest.load_head(args.head) if args.head else None
    profile = ingest.load_profile(args.profile) if args.profile else None
    mode = BudgetMode.HARD_CAP if args.mode == "hardcap" else BudgetMode.SOFT_THRESHOLD
    app = create_app(
        ServiceConfig(
            p=args.p, mode=mode, window_size=args.window, head=head, profile=profile
        )
    )
    host, _, port = args.listen.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8732))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="route-lmt",
        description="Budgeted routing for two-tier hybrid machine translation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--n", type=int, required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--gain-model", choices=("planted", "independent"), default="planted")
    p_synth.add_argument("--weights", help="planted: comma-separated weights (sets feature dim)")
    p_synth.add_argument("--bias", type=float, default=0.0)
    p_synth.add_argument("--noise-sigma", type=float, default=0.0)
    p_synth.add_argument("--feature-dim", type=int, default=0, help="independent model only")
    p_synth.add_argument("--q-small-range", default="0,100")
    p_synth.add_argument("--q-large-range", default="0,100")
    p_synth.add_argument("--severe-fraction", type=float, default=0.0)
    p_synth.add_argument("--directions", default="en-zh,en-ru,zh-en,ru-en")
    p_synth.set_defaults(func=cmd_synth)

    p_train = sub.add_parser("train", help="fit a linear head by ridge regression")
    p_train.add_argument("--dataset", required=True)
    p_train.add_argument("--out", required=True, help="head file to write")
    p_train.add_argument("--target", choices=("gain", "quality"), default="gain")
    p_train.add_argument(
        "--lambda",
        dest="ridge_lambda",
        type=float,
        default=trainer.DEFAULT_RIDGE_LAMBDA,
        help="ridge strength (default 1e-3)",
    )
    p_train.add_argument("--heldout-ratio", type=float, default=0.2)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument(
        "--per-direction",
        action="store_true",
        help="fit one head per direction, suffixing the output name",
    )
    p_train.set_defaults(func=cmd_train)

    p_cal = sub.add_parser("calibrate", help="calibrate thresholds into a profile")
    p_cal.add_argument("--dataset", required=True)
    p_cal.add_argument("--out", required=True, help="profile file to write")
    p_cal.add_argument("--p", type=float, action="append", help="budget (repeatable, default 0.3)")
    p_cal.add_argument("--scope", choices=("global", "per-direction"), default="global")
    p_cal.add_argument("--seed", type=int, default=0)
    _add_scorer_args(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)

    p_route = sub.add_parser("route", help="route a dataset offline")
    p_route.add_argument("--dataset", required=True)
    p_route.add_argument("--out", required=True, help="decisions CSV to write")
    p_route.add_argument("--p", type=float, default=0.3)
    p_route.add_argument("--mode", choices=("top-p", "threshold", "hardcap"), default="top-p")
    p_route.add_argument("--profile", help="calibration profile (threshold/hardcap modes)")
    p_route.add_argument("--window", type=int, default=100)
    p_route.add_argument("--seed", type=int, default=0)
    _add_scorer_args(p_route)
    p_route.set_defaults(func=cmd_route)

    p_eval = sub.add_parser("eval", help="ranking/allocation metrics at a fixed budget")
    p_eval.add_argument("--dataset", required=True)
    p_eval.add_argument("--out-dir", required=True)
    p_eval.add_argument("--p", type=float, default=0.3)
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.add_argument("--plots", action=argparse.BooleanOptionalAction, default=True)
    _add_scorer_args(p_eval, repeatable=True)
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="quality-budget curve across p")
    p_sweep.add_argument("--dataset", required=True)
    p_sweep.add_argument("--out-dir", required=True)
    p_sweep.add_argument(
        "--p-grid", default=",".join(str(p) for p in evaluation.DEFAULT_P_GRID)
    )
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--plots", action=argparse.BooleanOptionalAction, default=True)
    _add_scorer_args(p_sweep, repeatable=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_risk = sub.add_parser("risk", help="gain-bucket histogram of routed requests")
    p_risk.add_argument("--dataset", required=True)
    p_risk.add_argument("--out-dir", required=True)
    p_risk.add_argument("--p", type=float, default=0.3)
    p_risk.add_argument("--guard", choices=("none", "predict", "oracle"), default="none")
    p_risk.add_argument("--guard-quantile", type=float, default=0.3)
    p_risk.add_argument("--guard-head", help="quality head for --guard predict")
    p_risk.add_argument("--seed", type=int, default=0)
    p_risk.add_argument("--plots", action=argparse.BooleanOptionalAction, default=True)
    _add_scorer_args(p_risk)
    p_risk.set_defaults(func=cmd_risk)

    p_serve = sub.add_parser("serve", help="start the HTTP routing endpoint")
    p_serve.add_argument("--listen", default="127.0.0.1:8732")
    p_serve.add_argument("--profile", help="calibration profile to load")
    p_serve.add_argument("--head", help="head file for feature-carrying requests")
    p_serve.add_argument("--p", type=float, default=0.3)
    p_serve.add_argument("--mode", choices=("threshold", "hardcap"), default="threshold")
    p_serve.add_argument("--window", type=int, default=100)
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except RoutingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:  # internal bug, not user input
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
