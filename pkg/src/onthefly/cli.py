"""Command-line entry point: ``onthefly {run,tune,report,plot,serve}``.

Exit codes: 0 success, 1 usage error (nothing written), 2 runtime error.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import controller, export, figures, svg
from .errors import ArgumentError, ConfigError, OnTheFlyError
from .harness import ALGORITHMS, PAIRINGS, run_experiment
from .mcmc import density_histogram
from .objectives import domain_of

log = logging.getLogger("onthefly")

U64_MAX = (1 << 64) - 1

# flag dest -> (config key per algorithm that accepts it)
RUN_FLAGS = {
    "alpha": {"gd": "alpha"},
    "iters": {"gd": "iterations"},
    "atol": {"nm": "atol"},
    "maxiter": {"nm": "maxiter"},
    "n": {"mh": "n_iterations", "sa": "n_iterations"},
    "std": {"mh": "proposal_std", "sa": "proposal_std", "ea": "mutation_std"},
    "t0": {"sa": "temperature_t0"},
    "cool": {"sa": "cooling"},
    "pop": {"ea": "pop_size"},
    "gens": {"ea": "generations"},
    "recomb": {"ea": "recomb"},
    "mut": {"ea": "mut"},
    "init": {"gd": "init", "nm": "init", "mh": "init", "sa": "init"},
}
FIELD_FLAGS = {key: f"--{dest}" for dest, m in RUN_FLAGS.items() for key in m.values()}
FIELD_FLAGS.update(algorithm="--algo", objective="--objective", seed="--seed")

PLOT_KINDS = {
    "loss": ("gd", "nm"),
    "temperature": ("sa",),
    "heatmap": ("mh", "sa"),
    "fitness": ("ea",),
}


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _seed(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v <= U64_MAX:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _flag01(text):
    if text not in ("0", "1"):
        raise argparse.ArgumentTypeError("must be 0 or 1")
    return int(text)


def _point(text):
    try:
        parts = [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid point {text!r}") from None
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("point must be 'x1,x2'")
    return parts


def build_parser():
    p = Parser(prog="onthefly", description="On-the-fly parameter control experiments.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    run = sub.add_parser("run", help="run one seeded experiment and write its RunRecord")
    run.add_argument("--algo", required=True, choices=ALGORITHMS)
    run.add_argument("--objective", required=True)
    run.add_argument("--seed", type=_seed, default=0)
    run.add_argument("--out", required=True, help="RunRecord JSON path")
    run.add_argument("--alpha", type=float, help="gd step size (default 0.001)")
    run.add_argument("--iters", type=int, help="gd iterations (default 10)")
    run.add_argument("--atol", type=float, help="nm tolerance (default 0.005)")
    run.add_argument("--maxiter", type=int, help="nm iteration cap (default 100)")
    run.add_argument("--n", type=int, help="chain length (default 1000)")
    run.add_argument("--std", type=float,
                     help="proposal std for mh/sa (0.2) or mutation std for ea (1.0)")
    run.add_argument("--t0", type=float, help="sa initial temperature (default 100)")
    run.add_argument("--cool", type=float, help="sa cooling factor (default 0.95)")
    run.add_argument("--pop", type=int, help="ea population size (default 100)")
    run.add_argument("--gens", type=int, help="ea generations (default 10)")
    run.add_argument("--recomb", type=_flag01, help="ea recombination flag 0|1")
    run.add_argument("--mut", type=_flag01, help="ea mutation flag 0|1")
    run.add_argument("--init", type=_point, help="start point 'x1,x2' (default random)")

    tune = sub.add_parser("tune", help="repeat runs with rule-based adjustment between them")
    tune.add_argument("--algo", required=True, choices=ALGORITHMS)
    tune.add_argument("--objective", required=True)
    tune.add_argument("--reps", type=int, default=20)
    tune.add_argument("--seed", type=_seed, default=0)
    tune.add_argument("--alpha", type=float, help="starting step-size-like parameter")
    tune.add_argument("--iters", type=int, help="starting iteration budget")
    tune.add_argument("--out", required=True, help="CSV table path")

    rep = sub.add_parser("report", help="tabulate RunRecords and draw a figure next to the table")
    rep.add_argument("--in", dest="inputs", action="append", required=True,
                     help="RunRecord JSON (repeatable)")
    rep.add_argument("--format", choices=("csv", "json"), default="csv")
    rep.add_argument("--out", required=True)
    rep.add_argument("--no-figure", action="store_true", help="skip the PNG figure")

    plot = sub.add_parser("plot", help="render an SVG from a RunRecord")
    plot.add_argument("--in", dest="input", required=True)
    plot.add_argument("--kind", required=True, choices=tuple(PLOT_KINDS))
    plot.add_argument("--out", required=True)
    plot.add_argument("--bins", type=int, default=30, help="heatmap bins per axis")

    serve = sub.add_parser("serve", help="start the live tuning HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--tick-ms", type=float, default=20.0)
    serve.add_argument("--static-dir", help="directory of console assets to serve at /")
    return p


# -- subcommands --------------------------------------------------------------

def _check_pairing_flags(args):
    allowed = [o.value for o in PAIRINGS[args.algo]]
    if args.objective not in allowed:
        raise UsageError(f"--objective: {args.algo} cannot run on {args.objective!r} "
                         f"(allowed: {', '.join(allowed)})")


def _run_config(args):
    config = {}
    for dest, per_algo in RUN_FLAGS.items():
        value = getattr(args, dest)
        if value is None:
            continue
        if args.algo not in per_algo:
            raise UsageError(f"--{dest} does not apply to --algo {args.algo}")
        config[per_algo[args.algo]] = value
    return config


def _usage_from_config(exc):
    flag = FIELD_FLAGS.get(getattr(exc, "field", None) or "", None)
    return UsageError(f"{flag}: {exc}" if flag else str(exc))


def cmd_run(args):
    _check_pairing_flags(args)
    config = _run_config(args)
    try:
        record = run_experiment(args.algo, args.objective, config, args.seed)
    except ConfigError as exc:
        raise _usage_from_config(exc) from None
    export.export(record, "json", args.out)
    log.info("wrote %s (%d events)", args.out, len(record.events))


def cmd_tune(args):
    _check_pairing_flags(args)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    try:
        state = controller.initial_state(args.algo, alpha=args.alpha, iterations=args.iters)
    except ConfigError as exc:
        raise _usage_from_config(exc) from None

    def show(row):
        log.info("rep %d alpha=%g iterations=%d best=%.6g %s", row.repetition, row.alpha,
                 row.iterations, row.best_loss, row.verdict)

    table = controller.tune(args.algo, args.objective, args.reps, state, args.seed, on_row=show)
    export.export(export.tune_table(table), "csv", args.out)
    sidecar = figures.figure_path(args.out, ".jsonl")
    export.write_atomic(sidecar, export.tune_log_lines(table))
    chosen = table.chosen
    print(f"chosen: repetition {chosen.repetition} alpha={chosen.alpha:g} "
          f"iterations={chosen.iterations} best_loss={chosen.best_loss:.6g}")


def _load(path):
    try:
        return export.load_record(path)
    except ArgumentError as exc:
        raise UsageError(f"--in: {exc}") from None


def cmd_report(args):
    records = [_load(p) for p in args.inputs]
    try:
        table = export.record_table(records)
    except ArgumentError as exc:
        raise UsageError(f"--in: {exc}") from None
    export.export(table, args.format, args.out)
    if not args.no_figure:
        png = figures.figure_path(args.out)
        if len(records) == 1:
            figures.record_figure(records[0], png)
        else:
            figures.table_figure(table, png)
        log.info("wrote %s", png)


def plot_data(record, kind, bins=30):
    """(svg kind, data, extra kwargs) for one record and CLI plot kind."""
    if record.algorithm not in PLOT_KINDS[kind]:
        raise UsageError(f"--kind {kind} does not apply to {record.algorithm} records")
    trace = record.trace_events()
    if not trace:
        raise UsageError("--in: record has no trace events")
    if kind == "loss":
        key = "loss" if record.algorithm == "gd" else "best_value"
        return "loss_curve", [(e["iteration"], e["payload"][key]) for e in trace], {}
    if kind == "temperature":
        return ("temperature_curve",
                [(e["iteration"], e["payload"]["temperature"]) for e in trace], {})
    if kind == "fitness":
        return "fitness_curve", [(e["iteration"], e["payload"]["best_fitness"]) for e in trace], {}
    dom = domain_of(record.objective)
    points = [e["payload"]["candidate"] for e in trace if e["payload"]["accepted"]]
    grid = density_histogram(points, dom, bins)
    return ("heat_grid", grid, {"xlim": (dom.lower[0], dom.upper[0]),
                                "ylim": (dom.lower[1], dom.upper[1])})


def cmd_plot(args):
    if args.bins < 1:
        raise UsageError("--bins must be >= 1")
    record = _load(args.input)
    kind, data, kwargs = plot_data(record, args.kind, args.bins)
    svg.render_svg(kind, data, args.out, title=f"{record.algorithm} {record.objective} {args.kind}",
                   **kwargs)


def cmd_serve(args):
    from .service import TuningService, make_server

    if args.tick_ms < 0:
        raise UsageError("--tick-ms must be >= 0")
    service = TuningService(default_tick_ms=args.tick_ms)
    try:
        server = make_server(service, args.host, args.port, args.static_dir)
    except OSError as exc:
        raise OnTheFlyError(f"cannot listen on {args.host}:{args.port}: {exc}") from exc
    print(f"serving on http://{args.host}:{server.server_address[1]}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.stop_all()
        server.server_close()


COMMANDS = {"run": cmd_run, "tune": cmd_tune, "report": cmd_report, "plot": cmd_plot,
            "serve": cmd_serve}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"onthefly {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except (OnTheFlyError, OSError, ValueError) as exc:
        print(f"onthefly {args.command}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
