"""Command-line entry point: `swarmheal <subcommand> ...`.

Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment as exp
from .apf import DEFAULT_K, apf_recover
from .core import RemainedGraph, SwarmConfig, compute_hops
from .errors import FormatError, SwarmError, ValidationError
from .gcn import TrainConfig, gc_recover, load_model, save_model
from .gco import BipartiteKernel
from .io import (
    load_result,
    load_scenario,
    make_scenario,
    result_to_dict,
    save_scenario,
    write_adjacency_csv,
    write_json,
)
from .metrics import DEFAULT_CELL, coverage_ratio, degree_cdf, recovery_summary
from .sim import centering_baseline, render_svg, write_trajectories_csv

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("swarmheal")


def _config_from_args(args) -> SwarmConfig:
    return SwarmConfig(
        n_total=args.n,
        area_width=args.area[0],
        area_height=args.area[1],
        d_tr=args.d_tr,
        v_max=args.v_max,
        dt=args.dt,
        rng_seed=args.seed,
    )


def cmd_generate(args) -> int:
    config = _config_from_args(args)
    usnet, scenario = make_scenario(config, args.n_destroyed)
    save_scenario(args.out, config, usnet, scenario)
    if args.adjacency_csv:
        write_adjacency_csv(usnet.adjacency, args.adjacency_csv)
    print(f"wrote {args.out}: N={config.n_total}, N_D={scenario.n_destroyed}")
    return EXIT_OK


def _append_metrics_csv(path: Path, sid: str, algo: str, k: str, result, report) -> None:
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(exp.RUN_FIELDS)
        writer.writerow([sid, algo, k, repr(float(result.t_rc)), repr(report.coverage_ratio), report.final_subnets])


def cmd_recover(args) -> int:
    config, usnet, scenario = load_scenario(args.scenario)
    record = bool(args.trajectory or args.svg)
    if args.algo == "apf":
        result = apf_recover(usnet, scenario, config, k=args.k, record_trajectories=record)
    elif args.algo == "centering":
        result = centering_baseline(usnet, scenario, config, record_trajectories=record)
    elif args.algo == "gc":
        model = load_model(args.pretrained) if args.pretrained else exp.bundled_model()
        train_config = TrainConfig(max_epochs=args.epochs, rng_seed=args.seed)
        result, solution, history = gc_recover(usnet, scenario, config, model, train_config,
                                               record_trajectories=record)
        if args.loss_csv:
            from .gcn import HISTORY_FIELDS
            with open(args.loss_csv, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=HISTORY_FIELDS, lineterminator="\n")
                writer.writeheader()
                writer.writerows(history)
    else:
        fn = exp.ALGORITHMS.get(args.algo)
        if fn is None:
            raise ValidationError(f"unknown algorithm {args.algo!r}")
        result = fn(usnet, scenario, config, {"k": args.k})

    report = recovery_summary(result, usnet, scenario, config.area_width, config.area_height)
    if args.trajectory:
        write_trajectories_csv(result, scenario.remaining, args.trajectory)
    if args.svg:
        start = usnet.positions[list(scenario.remaining)]
        Path(args.svg).write_text(render_svg(start, result.final_positions, config.d_tr, config.area_width,
                                             config.area_height, result.trajectories,
                                             usnet.positions[list(scenario.destroyed)]))
    write_json(result_to_dict(result, config.rng_seed, report, args.trajectory), args.out)
    if args.metrics_csv:
        _append_metrics_csv(Path(args.metrics_csv), Path(args.scenario).stem, result.algo_tag,
                            exp.k_label(result), result, report)
    print(f"{result.algo_tag}: T_rc={result.t_rc:.1f} s, steps={result.steps}, "
          f"final sub-nets={report.final_subnets}, coverage={report.coverage_ratio:.3f}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    make = exp.desk_plan if args.profile == "desk" else exp.paper_plan
    plan = make(args.out, seed_base=args.seed, algorithms=tuple(args.algos))
    overrides = {}
    if args.sizes:
        overrides["damage_sizes"] = tuple(args.sizes)
    if args.repeats:
        overrides["repeats"] = args.repeats
    options = {"k": args.k, "epochs": args.epochs}
    if args.pretrained:
        options["pretrained"] = args.pretrained
    plan = replace(plan, options=options, **overrides)
    report = exp.run_experiment(plan, workers=args.workers)
    print(f"computed {report.computed} cells, skipped {report.skipped} already present")
    for row in report.summary:
        print(f"  N_D={row['n_d']:>4} {row['algo']:<10} T_rc={float(row['t_rc_mean']):7.2f} s "
              f"coverage={float(row['coverage_mean']):.3f}")
    if report.failures:
        for cell, err in report.failures:
            print(f"  FAILED {cell}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_train_pretrained(args) -> int:
    if args.scenarios:
        files = sorted(Path(args.scenarios).glob("*.json"))
        if not files:
            raise ValidationError(f"no scenario files in {args.scenarios}")
        loaded = [load_scenario(f) for f in files]
        config = loaded[0][0]
        pairs = [(u, s) for _, u, s in loaded]
    else:
        config = exp.DESK_CONFIG
        pairs = exp.desk_pretraining_set()

    def progress(epoch, loss, lam, tau):
        if epoch % 25 == 0 or epoch == args.epochs - 1:
            print(f"epoch {epoch:4d}  loss={loss:9.3f}  lambda={lam:.3g}  tau={tau:.3g}")

    model = exp.pretrain_on(pairs, config, epochs=args.epochs, lr=args.lr, num_layers=args.layers,
                            hidden_dim=args.hidden, seed=args.seed, log_fn=progress)
    save_model(model, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_gco_trace(args) -> int:
    from .core import build_united_mdsg
    from .gco import gco_step

    config, usnet, scenario = load_scenario(args.scenario)
    hops = compute_hops(usnet)
    united = build_united_mdsg(scenario, usnet, hops, args.k)
    kernel = BipartiteKernel.from_united(united)
    X = np.array(united.feature_positions)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "node_id", "remaining", "x", "y"])
        for it in range(args.steps + 1):
            if it % args.every == 0 or it == args.steps:
                for row, (node, (x, y)) in enumerate(zip(united.node_order, X)):
                    writer.writerow([it, node, int(row < united.n_remaining), repr(float(x)), repr(float(y))])
            if it < args.steps:
                X = gco_step(kernel, X)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    config, usnet, scenario = load_scenario(args.scenario)
    data = load_result(args.result)
    final = np.asarray(data["final_positions"], dtype=np.float64)
    if final.shape != (scenario.n_remaining, 2):
        raise FormatError(f"result has {final.shape[0]} positions, scenario has {scenario.n_remaining} survivors")
    ratio = coverage_ratio(final, usnet.positions, config.d_tr, config.area_width, config.area_height, args.cell)
    graph = RemainedGraph.from_positions(final, config.d_tr)
    from .core import count_subnets_unionfind
    subnets = count_subnets_unionfind(graph.adjacency)
    sid = Path(args.scenario).stem
    print(f"t_rc={data['t_r_seconds']} coverage_ratio={ratio:.4f} final_subnets={subnets}")
    if args.cdf_csv:
        with open(args.cdf_csv, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(exp.CDF_FIELDS)
            for d, p in degree_cdf(graph):
                writer.writerow([sid, data.get("algo", ""), d, repr(p)])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmheal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded swarm + damage scenario JSON")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--area", type=float, nargs=2, default=(1000.0, 1000.0), metavar=("W", "H"))
    p.add_argument("--d-tr", type=float, default=120.0)
    p.add_argument("--v-max", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--n-destroyed", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--adjacency-csv")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("recover", help="run one planner on a scenario")
    p.add_argument("--algo", required=True)
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--pretrained")
    p.add_argument("--seed", type=int, default=0, help="training seed for --algo gc")
    p.add_argument("--trajectory", help="CSV of (step, node_id, x, y)")
    p.add_argument("--svg", help="case-study figure")
    p.add_argument("--metrics-csv", help="append a metrics row here")
    p.add_argument("--loss-csv", help="per-epoch loss history for --algo gc")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("experiment", help="batch runs over damage sizes")
    p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    p.add_argument("--out", required=True)
    p.add_argument("--algos", nargs="+", default=["apf", "centering"])
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--repeats", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--pretrained")
    p.add_argument("--workers", type=int, help=f"worker processes (default: ${exp.WORKERS_ENV} or 1)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("train-pretrained", help="fit one shared weight set across scenarios")
    p.add_argument("--scenarios", help="directory of scenario JSON files (default: built-in desk set)")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=exp.PRETRAIN_EPOCHS)
    p.add_argument("--lr", type=float, default=exp.PRETRAIN_LR)
    p.add_argument("--layers", type=int, default=4)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_pretrained)

    p = sub.add_parser("gco-trace", help="dump bipartite convolution iterates as CSV")
    p.add_argument("--scenario", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--every", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gco_trace)

    p = sub.add_parser("metrics", help="recompute metrics for a result JSON")
    p.add_argument("--scenario", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--cell", type=float, default=DEFAULT_CELL)
    p.add_argument("--cdf-csv")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SwarmError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
