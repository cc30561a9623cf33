"""Oracle-complexity sweeps over the target accuracy, plus CSV helpers.

The instance is built once at its own construction accuracy and every run in
the sweep solves that same instance to a different target.  Rebuilding the
instance at each target would make the runs exact rescalings of one another
and the step counts identical.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from typing import Iterable, Optional

from .instance import InstanceParams, build_instance, suboptimality_bound
from .ipg import IpgConfig, solve
from .structured import stacked_condition_number

WORKERS_ENV = "IPGKIT_WORKERS"

TRACE_COLUMNS = ("k", "step_norm", "split_feas", "affine_feas", "inner_steps",
                 "cum_grad_calls", "cum_matvecs", "cum_prox_calls")
BENCH_COLUMNS = ("eps", "outer_iters", "apg_steps", "grad_calls", "matvecs", "prox_calls",
                 "kappa", "predicted_scale", "certified", "exit_reason", "error")


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    if v is None:
        return ""
    return str(v)


def to_csv(rows: Iterable[dict], columns: tuple) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    return buf.getvalue()


def _parse_cell(text: str):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_csv(text: str) -> list:
    """Inverse of ``to_csv``: rows as dicts with numbers and booleans restored."""
    reader = csv.DictReader(io.StringIO(text))
    return [{k: _parse_cell(v) for k, v in row.items()} for row in reader]


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw == "":
        return default
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
    return n


def predicted_scale(params: InstanceParams, eps: float) -> float:
    """``kappa * L_f * Delta / eps^2`` with ``Delta`` the instance's gap bound."""
    return stacked_condition_number(params.m) * params.L_f * suboptimality_bound(params) / eps**2


def bench_row(params: InstanceParams, config: IpgConfig) -> dict:
    """One solve of the sweep; failures are recorded in the row instead of raised."""
    row = {
        "eps": float(config.eps),
        "kappa": stacked_condition_number(params.m),
        "predicted_scale": predicted_scale(params, config.eps),
        "error": "",
    }
    try:
        result = solve(build_instance(params, check_gradient=False), config)
    except Exception as exc:  # noqa: BLE001 - a failed run must not stop the sweep
        row.update(certified=False, exit_reason="error", error=f"{type(exc).__name__}: {exc}")
        return row
    row.update(
        outer_iters=result.outer_iters,
        apg_steps=result.total_inner_steps,
        grad_calls=result.counter.grad_f0_calls,
        matvecs=result.counter.matvecs,
        prox_calls=result.counter.prox_calls,
        certified=result.certified,
        exit_reason=result.exit_reason,
    )
    return row


def _bench_row_args(args):
    params, config = args
    return bench_row(InstanceParams(**params), IpgConfig(**config))


def run_sweep(params: InstanceParams, eps_list: Iterable[float], base: IpgConfig,
              workers: Optional[int] = None) -> list:
    """Rows in sweep order; runs are independent and each is single-threaded."""
    params = params.resolved()
    jobs = [(asdict(params), asdict(replace(base, eps=float(e)))) for e in eps_list]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [_bench_row_args(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_bench_row_args, jobs))


def halving_ratios(rows: list) -> list:
    """``apg_steps`` ratios between consecutive rows whose targets halve."""
    ordered = sorted((r for r in rows if r.get("apg_steps")), key=lambda r: -r["eps"])
    out = []
    for a, b in zip(ordered, ordered[1:]):
        if math.isclose(a["eps"], 2 * b["eps"], rel_tol=1e-9):
            out.append(b["apg_steps"] / a["apg_steps"])
    return out
