"""Command-line front end.

Subcommands ``instance``, ``solve``, ``verify``, ``bench`` and ``span``.  A JSON
config file may supply any setting; flags override it.  Config schema::

    {
      "instance": {"m1": 2, "m2": 2, "bd": 5, "eps": 0.1, "L_f": 1.0, "beta": null},
      "instance_file": "path/to/instance.json",
      "solver": {"eps": 0.1, "tau": 2.0, "sigma": 1.0, "max_outer": 10000, ...},
      "sweep": [0.2, 0.1, 0.05],
      "seed": 0,
      "span": {"model": "A2", "schedule": "greedy", "T": null, "outer_iters": 3},
      "output": "out.json", "trace_output": "trace.csv", "summary_output": "summary.csv"
    }

Exit codes: 0 on success (uncertified solves included), 2 on configuration
errors, 3 when a property check fails.  The worker count for ``bench`` comes
from the ``IPGKIT_WORKERS`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional

from .bench import (
    BENCH_COLUMNS,
    TRACE_COLUMNS,
    halving_ratios,
    predicted_scale,
    run_sweep,
    to_csv,
    worker_count,
)
from .instance import InstanceParams, build_instance, default_gap_bounds, instance_summary, suboptimality_bound
from .ipg import IpgConfig, compute_constants, solve
from .properties import FAULTS, run_suite
from .span import (
    GreedySchedule,
    PenaltySchedule,
    ProximalGradientSchedule,
    lower_bound_episode,
    replay_ipg,
    run_tracked_A2,
    run_tracked_A3,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_PROPERTY = 3

INSTANCE_KEYS = tuple(f.name for f in fields(InstanceParams))
SOLVER_KEYS = tuple(f.name for f in fields(IpgConfig))
SCHEDULES = {"greedy": GreedySchedule, "pg": ProximalGradientSchedule, "penalty": PenaltySchedule}
SPAN_MODELS = ("A2", "A3", "replay", "episode")


class ConfigError(ValueError):
    pass


def _dump_json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _write(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(text)


def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return data


def _instance_params(cfg: dict, args) -> InstanceParams:
    values = {}
    source = cfg.get("instance_file")
    if getattr(args, "instance_file", None):
        source = args.instance_file
    if source:
        try:
            with open(source, encoding="utf-8") as fh:
                values.update(json.load(fh)["params"])
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read instance file {source}: {exc}") from None
    values.update(cfg.get("instance", {}))
    for key in INSTANCE_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    unknown = set(values) - set(INSTANCE_KEYS)
    if unknown:
        raise ConfigError(f"unknown instance keys {sorted(unknown)}")
    missing = [k for k in ("m1", "m2", "bd", "eps") if k not in values]
    if missing:
        raise ConfigError(f"missing instance parameters {missing}")
    try:
        return InstanceParams(**values).resolved()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def _solver_config(cfg: dict, args, params: InstanceParams) -> IpgConfig:
    values = {"eps": params.eps}
    values.update(cfg.get("solver", {}))
    for key in SOLVER_KEYS:
        flag = getattr(args, f"solver_{key}", None)
        if flag is not None:
            values[key] = flag
    unknown = set(values) - set(SOLVER_KEYS)
    if unknown:
        raise ConfigError(f"unknown solver keys {sorted(unknown)}")
    try:
        config = IpgConfig(**values)
        config.resolved(params.L_f)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return config


def _pick(args, cfg: dict, name: str, default=None):
    flag = getattr(args, name, None)
    return flag if flag is not None else cfg.get(name, default)


def cmd_instance(args, cfg: dict) -> int:
    params = _instance_params(cfg, args)
    problem = build_instance(params)
    summary = instance_summary(problem)
    consts = compute_constants(problem, IpgConfig(eps=params.eps), *default_gap_bounds(problem))
    summary["delta_bound"] = suboptimality_bound(params)
    summary["previews"] = {
        "K_eps": consts.K_eps,
        "K_bar_eps": consts.K_bar_eps,
        "delta_eps": consts.delta_eps,
        "delta_bar_eps": consts.delta_bar_eps,
        "predicted_scale": predicted_scale(params, params.eps),
    }
    _write(_pick(args, cfg, "output"), _dump_json(summary))
    return EXIT_OK


def cmd_solve(args, cfg: dict) -> int:
    params = _instance_params(cfg, args)
    config = _solver_config(cfg, args, params)
    problem = build_instance(params, check_gradient=False)
    result = solve(problem, config)
    report = {
        "certified": result.certified,
        "exit_reason": result.exit_reason,
        "outer_iters": result.outer_iters,
        "outer_limit": result.outer_limit,
        "k_best": result.k_best,
        "total_inner_steps": result.total_inner_steps,
        "delta": result.delta,
        "counters": result.counter.to_dict(),
        "stationarity": result.report.to_dict(),
        "constants": result.constants.to_dict() if result.constants else None,
        "instance": asdict(params),
        "solver": asdict(config.resolved(params.L_f)),
    }
    _write(_pick(args, cfg, "trace_output"), to_csv(result.trace, TRACE_COLUMNS))
    _write(_pick(args, cfg, "output"), _dump_json(report))
    return EXIT_OK


def cmd_verify(args, cfg: dict) -> int:
    seed = int(_pick(args, cfg, "seed", 0))
    results = run_suite(seed=seed, fault=args.fault, quick=args.quick)
    width = max(len(r.name) for r in results)
    lines = [f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.detail}" for r in results]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    out = _pick(args, cfg, "output")
    if out:
        _write(out, _dump_json({"seed": seed, "results": [r.to_dict() for r in results]}))
    return EXIT_OK if all(r.passed for r in results) else EXIT_PROPERTY


def cmd_bench(args, cfg: dict) -> int:
    params = _instance_params(cfg, args)
    base = _solver_config(cfg, args, params)
    sweep = args.sweep if args.sweep is not None else cfg.get("sweep", [params.eps])
    if not sweep or any(not (isinstance(e, (int, float)) and e > 0) for e in sweep):
        raise ConfigError(f"sweep must be a non-empty list of positive numbers, got {sweep}")
    try:
        workers = worker_count()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    rows = run_sweep(params, sweep, base, workers=workers)
    _write(_pick(args, cfg, "output"), to_csv(rows, BENCH_COLUMNS))
    ratios = halving_ratios(rows)
    if ratios:
        sys.stderr.write("apg_steps ratio per halving: "
                         + ", ".join(f"{r:.4g}" for r in ratios) + "\n")
    return EXIT_OK


def cmd_span(args, cfg: dict) -> int:
    params = _instance_params(cfg, args)
    span_cfg = dict(cfg.get("span", {}))
    for key in ("model", "schedule", "T", "outer_iters"):
        flag = getattr(args, key, None)
        if flag is not None:
            span_cfg[key] = flag
    model = span_cfg.get("model", "A2")
    seed = int(_pick(args, cfg, "seed", 0))
    if model not in SPAN_MODELS:
        raise ConfigError(f"unknown span model {model!r}; expected one of {SPAN_MODELS}")
    if model == "episode":
        _write(_pick(args, cfg, "output"), _dump_json(lower_bound_episode(params, T=span_cfg.get("T"), seed=seed)))
        return EXIT_OK
    if model == "replay":
        trace, _, _ = replay_ipg(params, tau=2 * params.L_f, sigma=params.L_f,
                                 outer_iters=int(span_cfg.get("outer_iters", 3)))
    else:
        name = span_cfg.get("schedule", "greedy")
        if name not in SCHEDULES:
            raise ConfigError(f"unknown schedule {name!r}; expected one of {sorted(SCHEDULES)}")
        if name == "penalty" and model == "A2":
            raise ConfigError("the penalty schedule updates y and needs model A3")
        schedule = SCHEDULES[name](seed) if name == "greedy" else SCHEDULES[name]()
        runner = run_tracked_A2 if model == "A2" else run_tracked_A3
        T = span_cfg.get("T") or 1 + params.m * (params.bd - 1)
        trace = runner(params, schedule, T=int(T), stop_at_full=span_cfg.get("T") is None)
    _write(_pick(args, cfg, "output"), _dump_json(trace.to_json()))
    summary = _pick(args, cfg, "summary_output")
    if summary:
        _write(summary, trace.summary_csv())
    return EXIT_OK


COMMANDS = {
    "instance": cmd_instance,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "bench": cmd_bench,
    "span": cmd_span,
}


def _add_instance_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("instance")
    g.add_argument("--instance-file", help="instance JSON written by the instance command")
    g.add_argument("--m1", type=int, help="even block-group size")
    g.add_argument("--m2", type=int, help="number of block groups per third")
    g.add_argument("--bd", type=int, help="odd block dimension >= 5")
    g.add_argument("--eps", type=float, help="instance construction accuracy")
    g.add_argument("--L-f", dest="L_f", type=float, help="smoothness constant")
    g.add_argument("--beta", type=float, help="regularizer weight")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--target-eps", dest="solver_eps", type=float,
                   help="solver accuracy (defaults to the instance accuracy)")
    g.add_argument("--tau", dest="solver_tau", type=float)
    g.add_argument("--sigma", dest="solver_sigma", type=float)
    g.add_argument("--delta-mode", dest="solver_delta_mode")
    g.add_argument("--delta", dest="solver_delta", type=float)
    g.add_argument("--inner-mode", dest="solver_inner_mode")
    g.add_argument("--max-outer", dest="solver_max_outer", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ipgkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--output", "-o", help="output path (stdout when omitted)")
        p.add_argument("--seed", type=int)
        return p

    p = add("instance", "write the instance summary JSON")
    _add_instance_flags(p)

    p = add("solve", "solve an instance and write the trace CSV and report JSON")
    _add_instance_flags(p)
    _add_solver_flags(p)
    p.add_argument("--trace-output", help="trace CSV path")

    p = add("verify", "run the property suites")
    p.add_argument("--fault", choices=FAULTS, help="inject a known defect (harness check)")
    p.add_argument("--quick", action="store_true", help="fewer samples per property")

    p = add("bench", "sweep solver accuracies on one instance")
    _add_instance_flags(p)
    _add_solver_flags(p)
    p.add_argument("--sweep", type=float, nargs="+", help="solver accuracies")

    p = add("span", "track supports under the span models")
    _add_instance_flags(p)
    p.add_argument("--model", choices=SPAN_MODELS)
    p.add_argument("--schedule", choices=sorted(SCHEDULES))
    p.add_argument("--T", type=int, help="number of iterations (default: until every coordinate is active)")
    p.add_argument("--outer-iters", type=int, help="outer steps for the solver replay")
    p.add_argument("--summary-output", help="first-activation CSV path")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        sys.stderr.write(f"ipgkit {args.command}: {exc}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
