"""Command-line entry point.

Exit codes: 0 on success, 2 for configuration or usage errors, 3 when a
pipeline stage fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .embedding import ConstraintViolation, LayoutKind, LayoutParams, Register, make_register
from .emulator import NOISE_PRESETS, EmulationError, Pulse, noise_preset, run_noisy
from .graphcore import CostKind, Graph, GraphError, gen_erdos_renyi, gen_unit_disk
from .pipeline import (
    ConfigError,
    PipelineConfig,
    StageError,
    curve_from_results,
    emit_plot_data,
    results_from_csv,
    results_to_csv,
    run_pipeline,
    _solve_task,
)
from .pulsepredictor import ChainedModel, Dataset, build_dataset, fit_chain, predict_pulse
from .pulseshaper import OptBudget, shape_pulse
from .qscore import QScoreError, curve_to_csv, fit_qscore, threshold_qscore
from .seeding import derive_int

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3

LOGGER = logging.getLogger("neutralopt")


def _emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None


def _load_graph(path) -> Graph:
    data = _read_json(path)
    if isinstance(data, list):
        if len(data) != 1:
            raise ConfigError(f"{path} holds {len(data)} graphs, expected one")
        data = data[0]
    return Graph.from_dict(data)


def _load_graphs(path) -> list[tuple[str, Graph]]:
    data = _read_json(path)
    if isinstance(data, dict):
        data = [data]
    return [(str(d.get("id", i)), Graph.from_dict(d)) for i, d in enumerate(data)]


def cmd_gen_graphs(args) -> int:
    graphs = []
    for i in range(args.count):
        s = derive_int(args.seed, "graph-gen", args.n, i)
        if args.graph_class == "er":
            g = gen_erdos_renyi(args.n, args.p, s)
        else:
            g, _ = gen_unit_disk(args.n, args.radius, args.box, s)
        graphs.append({"id": f"n{args.n}-{i}", **g.to_dict()})
    _emit(json.dumps(graphs, indent=1), args.out)
    return EXIT_OK


def cmd_embed(args) -> int:
    g = _load_graph(args.graph)
    reg = make_register(g, args.layout, LayoutParams(iterations=args.iterations, scale=args.scale, seed=derive_int(args.seed, "layout")))
    _emit(reg.to_json(), args.out)
    return EXIT_OK


def cmd_shape_pulse(args) -> int:
    g = _load_graph(args.graph)
    reg = Register.from_dict(_read_json(args.register))
    starts = args.starts if args.starts is not None else 10 * g.n
    calls = args.calls if args.calls is not None else 50 * g.n
    budget = OptBudget(starts, calls, args.shots_per_eval, derive_int(args.seed, "optimizer"))
    pulse, trace = shape_pulse(g, reg, args.kind, budget, noise_preset(args.noise), obj=args.objective)
    _emit(pulse.to_json(), args.out)
    if args.trace:
        emit_plot_data(trace, "trace", args.trace)
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    items = _load_graphs(args.graphs)
    budget = None
    if args.starts_per_atom is not None or args.calls_per_atom is not None:
        spa = args.starts_per_atom or 10
        cpa = args.calls_per_atom or 50
        budget = lambda n: OptBudget.scaled(n, spa, cpa)  # noqa: E731
    ds = build_dataset(
        [g for _, g in items], args.layouts, args.kind, budget, seed=args.seed, graph_ids=[i for i, _ in items], workers=args.workers
    )
    _emit(ds.to_csv(), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    model = fit_chain(Dataset.load(args.dataset))
    _emit(json.dumps(model.to_dict()), args.out)
    return EXIT_OK


def cmd_predict(args) -> int:
    m = ChainedModel.load(args.model)
    pulse = predict_pulse(m, _load_graph(args.graph), Register.from_dict(_read_json(args.register)))
    _emit(pulse.to_json(), args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = PipelineConfig(
        kind=args.kind, mode="evaluate", n_registers=args.registers, shots=args.shots, noise=args.noise, seed=args.seed, workers=args.workers
    )
    m = ChainedModel.load(args.model)
    rows = [_solve_task((cfg, gid, g, m))[0] for gid, g in _load_graphs(args.graphs)]
    _emit(results_to_csv(rows), args.out)
    return EXIT_OK


def cmd_qscore(args) -> int:
    rows = results_from_csv(Path(args.results).read_text())
    curve, flagged = curve_from_results(rows, args.baselines)
    if flagged:
        LOGGER.warning("degenerate baselines at n=%s excluded", flagged)
    _emit(curve_to_csv(curve), args.out)
    report = {"threshold_qscore": threshold_qscore(curve) if curve else 0}
    try:
        report.update(fit_qscore(curve, args.n_lo).to_dict())
    except QScoreError as exc:
        report["fit_error"] = str(exc)
    if args.fit_out:
        _emit(json.dumps(report, indent=2), args.fit_out)
    else:
        sys.stderr.write(json.dumps(report) + "\n")
    return EXIT_OK


def cmd_emulate(args) -> int:
    reg = Register.from_dict(_read_json(args.register))
    pulse = Pulse.from_dict(_read_json(args.pulse))
    per = max(1, args.shots // args.realizations)
    samples = run_noisy(reg, pulse, noise_preset(args.noise), per, args.realizations, derive_int(args.seed, "sampler"))
    _emit(json.dumps(samples.to_dict()), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    data = dict(args.config_data or {})
    data.setdefault("seed", args.seed)
    data.setdefault("workers", args.workers)
    if args.out is not None:
        data["out"] = args.out
    cfg = PipelineConfig.from_dict(data)
    manifest = run_pipeline(cfg)
    sys.stdout.write(json.dumps(manifest.summary, sort_keys=True) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neutralopt", description="Neutral-atom analog solver for MIS and MaxCut.")
    p.add_argument("--seed", type=int, default=0, help="root seed for every random stream")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="output file (output directory for 'run'); stdout if omitted")
    p.add_argument("--config", default=None, help="JSON file; keys override subcommand defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    p.commands = {}
    kinds = [k.value for k in CostKind]
    layouts = [k.value for k in LayoutKind]
    noises = sorted(NOISE_PRESETS)

    s = p.commands["gen-graphs"] = sub.add_parser("gen-graphs", help="random graph instances as JSON")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--count", type=int, default=1)
    s.add_argument("--graph-class", choices=["er", "ud"], default="er")
    s.add_argument("--p", type=float, default=0.5)
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--box", type=float, default=2.0)
    s.set_defaults(func=cmd_gen_graphs)

    s = p.commands["embed"] = sub.add_parser("embed", help="atom register for a graph")
    s.add_argument("--graph", required=True)
    s.add_argument("--layout", choices=layouts, default="spring")
    s.add_argument("--iterations", type=int, default=100)
    s.add_argument("--scale", type=float, default=40.0)
    s.set_defaults(func=cmd_embed)

    s = p.commands["shape-pulse"] = sub.add_parser("shape-pulse", help="closed-loop pulse optimisation on one register")
    s.add_argument("--graph", required=True)
    s.add_argument("--register", required=True)
    s.add_argument("--kind", choices=kinds, default="maxcut")
    s.add_argument("--starts", type=int)
    s.add_argument("--calls", type=int)
    s.add_argument("--shots-per-eval", type=int, default=200)
    s.add_argument("--objective", choices=["average", "best", "worst"], default="average")
    s.add_argument("--noise", choices=noises, default="off")
    s.add_argument("--trace", help="write the optimisation trace here")
    s.set_defaults(func=cmd_shape_pulse)

    s = p.commands["build-dataset"] = sub.add_parser("build-dataset", help="training set from closed-loop runs")
    s.add_argument("--graphs", required=True)
    s.add_argument("--layouts", nargs="+", choices=layouts, default=layouts)
    s.add_argument("--kind", choices=kinds, default="maxcut")
    s.add_argument("--starts-per-atom", type=int)
    s.add_argument("--calls-per-atom", type=int)
    s.set_defaults(func=cmd_build_dataset)

    s = p.commands["train"] = sub.add_parser("train", help="fit the chained pulse predictor")
    s.add_argument("--dataset", required=True)
    s.set_defaults(func=cmd_train)

    s = p.commands["predict"] = sub.add_parser("predict", help="predict a pulse for a graph and register")
    s.add_argument("--model", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--register", required=True)
    s.set_defaults(func=cmd_predict)

    s = p.commands["evaluate"] = sub.add_parser("evaluate", help="solve graphs with a trained model; per-instance results CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--graphs", required=True)
    s.add_argument("--kind", choices=kinds, default="maxcut")
    s.add_argument("--registers", type=int, default=10)
    s.add_argument("--shots", type=int, default=1000)
    s.add_argument("--noise", choices=noises, default="off")
    s.set_defaults(func=cmd_evaluate)

    s = p.commands["qscore"] = sub.add_parser("qscore", help="beta curve and Q-score fit from per-instance results")
    s.add_argument("--results", required=True)
    s.add_argument("--baselines", choices=["empirical", "asymptotic"], default="empirical")
    s.add_argument("--n-lo", type=int, default=10)
    s.add_argument("--fit-out")
    s.set_defaults(func=cmd_qscore)

    s = p.commands["emulate"] = sub.add_parser("emulate", help="sample a pulse on a register")
    s.add_argument("--register", required=True)
    s.add_argument("--pulse", required=True)
    s.add_argument("--shots", type=int, default=1000)
    s.add_argument("--realizations", type=int, default=5)
    s.add_argument("--noise", choices=noises, default="off")
    s.set_defaults(func=cmd_emulate)

    s = p.commands["run"] = sub.add_parser("run", help="full pipeline driven by --config")
    s.set_defaults(func=cmd_run)
    return p


GLOBAL_KEYS = ("seed", "workers", "out", "verbose")


def _apply_config(parser: argparse.ArgumentParser, data: dict, command: str):
    """Install config values as defaults of ``command``; explicit flags still win."""
    sub = parser.commands[command]
    data = {k.replace("-", "_"): v for k, v in data.items()}
    known = {a.dest for a in sub._actions} | set(GLOBAL_KEYS)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown keys for {command}: {unknown}")
    parser.set_defaults(**{k: v for k, v in data.items() if k in GLOBAL_KEYS})
    sub.set_defaults(**{k: v for k, v in data.items() if k not in GLOBAL_KEYS})
    for action in sub._actions:
        if action.dest in data:
            action.required = False


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("-v", "--verbose", action="store_true")
    early, _ = pre.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if early.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    command = next((a for a in argv if a in parser.commands), None)
    try:
        data = None
        if early.config is not None:
            data = _read_json(early.config)
            if not isinstance(data, dict):
                raise ConfigError("config file must hold a JSON object")
            if command is not None and command != "run":
                _apply_config(parser, data, command)
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
        args.config_data = data if args.command == "run" else None
        return args.func(args)
    except (ConfigError, GraphError, KeyError, TypeError) as exc:
        LOGGER.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except StageError as exc:
        LOGGER.error("%s", exc)
        return EXIT_STAGE
    except (ConstraintViolation, EmulationError, QScoreError, ValueError, RuntimeError, OSError) as exc:
        LOGGER.error("stage failed: %s", exc)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
