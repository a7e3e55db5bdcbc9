"""Command-line front end: convert, split, train, predict, eval, tune, gen.

Every verb prints an effective-configuration block with all defaults
resolved (seed included) before doing any work, so a run can be reproduced
from its log alone.  Exit codes: 0 success, 1 usage error, 2 data or
validation error, 3 training non-convergence when --fail-on-no-convergence
was given.

Report-style verbs write figures next to their delimited outputs; pass
--no-figures to skip rendering.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .boosting import save_boost_model, train_adarank, train_rankboost
from .data import (
    ParseError,
    attach_query_ids,
    flatten_records,
    format_real,
    parse_flat_file,
    parse_ranking_file,
    split_tail,
    write_flat_file,
    write_ranking_file,
)
from .forest import save_forest_model, train_forest
from .metrics import (
    evaluate_run,
    format_report_kv,
    format_report_table,
    rank_by_score,
    read_run_file,
    scores_from_run,
    write_run_file,
)
from .modelio import load_model, save_model
from .ranknet import save_ranknet_model, train_ranknet
from .ranksvm import Kernel, train_kernel, train_linear
from .synth import SCENARIOS, GenSpec, generate, write_ground_truth
from .tuning import (
    TuningConfig,
    coarse_c_scan,
    fine_c_table,
    kernel_sweep,
    method_comparison,
    write_sweep_csv,
    write_trace_csv,
)

__all__ = ["main"]

RANKER_NAMES = ("ranksvm", "rankboost", "ranknet", "adarank", "rforest")
METRIC_NAMES = ("map", "mrr", "p@1", "p@5", "err@10", "avgrec")


class _Parser(argparse.ArgumentParser):
    """Usage problems exit 1, not argparse's default 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return format_real(v)
    return str(v)


def _print_config(verb: str, options: dict) -> None:
    print(f"[{verb}] effective configuration")
    for key, value in options.items():
        print(f"  {key} = {_fmt_value(value)}")


def _figure_path(out: str) -> Path:
    return Path(out).with_suffix(".png")


# ---------------------------------------------------------------- verbs


def cmd_convert(args) -> int:
    group_size = args.group_size
    _print_config("convert", {
        "in": args.infile, "out": args.out,
        "group-size": group_size, "seed": args.seed,
    })
    records = parse_flat_file(args.infile)
    ds = attach_query_ids(records, group_size)
    write_ranking_file(ds, args.out)
    print(f"wrote {ds.n_queries} groups ({ds.n_candidates} candidates) to {args.out}")
    return 0


def cmd_split(args) -> int:
    head_out = args.head_out or f"{args.infile}.head"
    tail_out = args.tail_out or f"{args.infile}.tail"
    _print_config("split", {
        "in": args.infile, "tail": args.tail,
        "head-out": head_out, "tail-out": tail_out, "seed": args.seed,
    })
    ds = parse_ranking_file(args.infile)
    head, tail = split_tail(ds, args.tail)
    write_ranking_file(head, head_out)
    write_ranking_file(tail, tail_out)
    print(f"wrote {head.n_queries} groups to {head_out}, {tail.n_queries} to {tail_out}")
    return 0


def _resolve(value, desk_value, full_value, desk: bool):
    if value is not None:
        return value
    return desk_value if desk else full_value


def cmd_train(args) -> int:
    ds = parse_ranking_file(args.infile)
    desk = args.desk_scale
    ranker = args.ranker
    config = {"in": args.infile, "model": args.model, "ranker": ranker}

    if ranker == "ranksvm":
        kernel = Kernel(args.kernel, gamma=args.gamma, coef0=args.coef0).resolved(ds.dim)
        tol = _resolve(args.tol, 1e-3, 1e-6, desk)
        max_iters = _resolve(
            args.max_iters, 200, 1000 if kernel.kind == "linear" else 300, desk
        )
        config.update({"kernel": kernel.kind, "c": args.c, "tol": tol,
                       "max-iters": max_iters})
        if kernel.kind != "linear":
            config.update({"gamma": kernel.gamma, "coef0": kernel.coef0})
        config["seed"] = args.seed
        _print_config("train", config)
        if kernel.kind == "linear":
            model = train_linear(ds, args.c, tol=tol, max_iters=max_iters, seed=args.seed)
        else:
            model = train_kernel(ds, kernel, args.c, tol=tol, max_iters=max_iters,
                                 seed=args.seed)
        save_model(model, args.model)
        state = model.state
        if state is not None and not state.converged:
            print(f"warning: stopped at iteration cap ({state.n_iters})", file=sys.stderr)
            if args.fail_on_no_convergence:
                return 3
    elif ranker == "rankboost":
        iterations = _resolve(args.iterations, 50, 300, desk)
        metric = args.metric or "err@10"
        config.update({"iterations": iterations, "metric": metric, "seed": args.seed})
        _print_config("train", config)
        model = train_rankboost(ds, iterations=iterations, metric=metric)
        save_boost_model(model, args.model)
    elif ranker == "adarank":
        rounds = _resolve(args.rounds, 100, 500, desk)
        metric = args.metric or "map"
        config.update({"rounds": rounds, "metric": metric, "seed": args.seed})
        _print_config("train", config)
        model = train_adarank(ds, rounds=rounds, metric=metric)
        save_boost_model(model, args.model)
    elif ranker == "ranknet":
        epochs = _resolve(args.epochs, 20, 100, desk)
        config.update({"epochs": epochs, "lr": args.lr, "hidden": args.hidden,
                       "seed": args.seed})
        _print_config("train", config)
        model = train_ranknet(ds, epochs=epochs, lr=args.lr, seed=args.seed,
                              hidden=args.hidden)
        save_ranknet_model(model, args.model)
    else:  # rforest
        bags = _resolve(args.bags, 5, 300, desk)
        trees = _resolve(args.trees, 20, 100, desk)
        config.update({"bags": bags, "trees": trees, "lr": args.lr_forest,
                       "seed": args.seed})
        _print_config("train", config)
        model = train_forest(ds, bags=bags, trees_per_bag=trees, lr=args.lr_forest,
                             seed=args.seed)
        save_forest_model(model, args.model)
    print(f"wrote model to {args.model}")
    return 0


def _model_dim(model) -> int:
    dim = getattr(model, "dim", None)
    if dim is None:
        dim = len(model.w)
    return int(dim)


def cmd_predict(args) -> int:
    _print_config("predict", {
        "in": args.infile, "model": args.model, "run": args.run, "seed": args.seed,
    })
    ds = parse_ranking_file(args.infile)
    model = load_model(args.model)
    if _model_dim(model) != ds.dim:
        raise ValueError(
            f"model dim {_model_dim(model)} does not match data dim {ds.dim}"
        )
    scores = model.score_matrix(ds.matrix())
    rls = [rank_by_score(g, block) for g, block in zip(ds.groups, ds.split_scores(scores))]
    write_run_file(rls, args.run)
    print(f"wrote run for {ds.n_queries} groups to {args.run}")
    return 0


def cmd_eval(args) -> int:
    if (args.run is None) == (args.model is None):
        raise ValueError("eval needs exactly one of --run or --model")
    source = args.run if args.run else args.model
    _print_config("eval", {
        "in": args.infile,
        "run" if args.run else "model": source,
        "out": args.out,
        "figures": not args.no_figures,
        "seed": args.seed,
    })
    ds = parse_ranking_file(args.infile)
    if args.run:
        scores = scores_from_run(ds, read_run_file(args.run))
    else:
        model = load_model(args.model)
        if _model_dim(model) != ds.dim:
            raise ValueError(
                f"model dim {_model_dim(model)} does not match data dim {ds.dim}"
            )
        scores = model.score_matrix(ds.matrix())
    report = evaluate_run(ds, scores)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(format_report_kv(report))
    print(format_report_table(report))
    if not args.no_figures:
        from .plots import save_report_bars

        figure = _figure_path(args.out)
        save_report_bars(report, figure)
        print(f"wrote report to {args.out} and {figure}")
    else:
        print(f"wrote report to {args.out}")
    return 0


def _tune_rows_to_trace(rows):
    return [(row.value, row.map) for row in rows]


def cmd_tune(args) -> int:
    out_dir = Path(args.out_dir)
    cfg = TuningConfig(initial_c=args.c, metric=args.metric or "map")
    cfg.validate()
    phases = ("methods", "kernel", "coarse", "fine") if args.phase == "all" else (args.phase,)
    _print_config("tune", {
        "in": args.infile, "tail": args.tail, "phase": args.phase,
        "out-dir": out_dir, "initial-c": cfg.initial_c, "metric": cfg.metric,
        "desk-scale": args.desk_scale, "figures": not args.no_figures,
        "seed": args.seed,
    })
    ds = parse_ranking_file(args.infile)
    head, tail = split_tail(ds, args.tail)
    out_dir.mkdir(parents=True, exist_ok=True)
    figures = not args.no_figures
    best_lines = []

    if "methods" in phases:
        result = method_comparison(head, tail, desk_scale=args.desk_scale,
                                   seed=args.seed, metric=cfg.metric)
        write_sweep_csv(result, out_dir / "methods.csv")
        if figures:
            from .plots import save_sweep_bars

            save_sweep_bars(result, out_dir / "methods.png", metric=cfg.metric)
        best_lines.append(f"best ranker: {result.best.setting}"
                          f" ({cfg.metric}={result.best.map:.4f})")
    if "kernel" in phases:
        result = kernel_sweep(head, tail, kernels=cfg.kernels, c=cfg.initial_c,
                              seed=args.seed, metric=cfg.metric)
        write_sweep_csv(result, out_dir / "kernels.csv")
        if figures:
            from .plots import save_sweep_bars

            save_sweep_bars(result, out_dir / "kernels.png", metric=cfg.metric)
        best_lines.append(f"best kernel: {result.best.setting}")
    if "coarse" in phases:
        result = coarse_c_scan(head, tail, grid=cfg.coarse_grid, seed=args.seed,
                               metric=cfg.metric)
        write_trace_csv(result.rows, out_dir / "coarse.csv")
        if figures:
            from .plots import save_c_curve

            save_c_curve(_tune_rows_to_trace(result.rows), out_dir / "coarse.png",
                         metric=cfg.metric, best=result.best.value)
        best_lines.append(f"best coarse c: {format_real(result.best.value)}")
    if "fine" in phases:
        result, best_c, trace = fine_c_table(head, tail, cfg, seed=args.seed)
        write_trace_csv(result.rows, out_dir / "fine.csv")
        if figures:
            from .plots import save_c_curve

            save_c_curve(trace, out_dir / "fine.png", metric=cfg.metric, best=best_c)
        best_lines.append(f"best fine c: {format_real(best_c)}")
    for line in best_lines:
        print(line)
    return 0


def cmd_gen(args) -> int:
    spec = GenSpec(
        queries=args.queries, group_size=args.group_size, dim=args.dim,
        scenario=args.scenario, noise=args.noise, seed=args.seed,
        graded=args.graded,
    )
    truth_path = f"{args.out}.truth"
    _print_config("gen", {
        "out": args.out, "truth": truth_path, "queries": spec.queries,
        "group-size": spec.group_size, "dim": spec.dim, "scenario": spec.scenario,
        "noise": spec.noise, "graded": spec.graded, "format": args.format,
        "seed": spec.seed,
    })
    ds, truth = generate(spec)
    if args.format == "grouped":
        write_ranking_file(ds, args.out)
    else:
        write_flat_file(flatten_records(ds), args.out)
    write_ground_truth(truth, truth_path)
    print(f"wrote {ds.n_queries} groups to {args.out}")
    return 0


# ---------------------------------------------------------------- parser


def _add_common(sub):
    sub.add_argument("--seed", type=int, default=42, help="seed for every stochastic step")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qrank", description=__doc__.splitlines()[0])
    verbs = parser.add_subparsers(dest="verb", required=True, metavar="verb")

    p = verbs.add_parser("convert", help="flat file to grouped ranking file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--group-size", type=int, default=10)
    _add_common(p)
    p.set_defaults(func=cmd_convert)

    p = verbs.add_parser("split", help="split off the last N query groups")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tail", type=int, default=50)
    p.add_argument("--head-out")
    p.add_argument("--tail-out")
    _add_common(p)
    p.set_defaults(func=cmd_split)

    p = verbs.add_parser("train", help="fit a ranker and save the model file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--ranker", choices=RANKER_NAMES, default="ranksvm")
    p.add_argument("--kernel", choices=("linear", "rbf", "sigmoid"), default="linear")
    p.add_argument("--c", type=float, default=3.0)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--coef0", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--iterations", type=int, default=None, help="rankboost rounds")
    p.add_argument("--rounds", type=int, default=None, help="adarank rounds")
    p.add_argument("--epochs", type=int, default=None, help="ranknet epochs")
    p.add_argument("--lr", type=float, default=5e-5, help="ranknet learning rate")
    p.add_argument("--hidden", type=int, default=10, help="ranknet hidden units")
    p.add_argument("--bags", type=int, default=None, help="forest bag count")
    p.add_argument("--trees", type=int, default=None, help="forest trees per bag")
    p.add_argument("--lr-forest", type=float, default=0.1, help="forest shrinkage")
    p.add_argument("--metric", choices=METRIC_NAMES, default=None,
                   help="validation metric for the boosting rankers")
    p.add_argument("--desk-scale", action="store_true",
                   help="small training budgets for quick runs")
    p.add_argument("--fail-on-no-convergence", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = verbs.add_parser("predict", help="score a dataset with a saved model")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--run", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = verbs.add_parser("eval", help="evaluate a run file or model on a dataset")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--run")
    p.add_argument("--model")
    p.add_argument("--out", required=True, help="report file (figure lands beside it)")
    p.add_argument("--no-figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = verbs.add_parser("tune", help="kernel sweep and C search with CSV traces")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--tail", type=int, default=50, help="held-out groups for evaluation")
    p.add_argument("--phase", choices=("methods", "kernel", "coarse", "fine", "all"),
                   default="all")
    p.add_argument("--out-dir", default="tune_out")
    p.add_argument("--c", type=float, default=3.0, help="initial / fixed C")
    p.add_argument("--metric", choices=("map", "mrr", "p@1", "p@5"), default=None)
    p.add_argument("--desk-scale", action="store_true")
    p.add_argument("--no-figures", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_tune)

    p = verbs.add_parser("gen", help="generate synthetic data with known truth")
    p.add_argument("--out", required=True)
    p.add_argument("--queries", type=int, required=True)
    p.add_argument("--group-size", type=int, default=10)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--scenario", choices=SCENARIOS, default="linear-utility")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--graded", action="store_true")
    p.add_argument("--format", choices=("grouped", "flat"), default="grouped")
    _add_common(p)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as stop:
        return int(stop.code or 0)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
