"""Command line interface (``fmtree``).

Exit codes: 0 ok, 1 runtime error, 2 I/O error, 3 malformed model (syntax or
validation), 4 state budget exceeded.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from functools import wraps

import click
from threadpoolctl import threadpool_limits

from .analysis import METRICS, TransientOptions, compute_metrics
from .decomposition import ComparisonRow, abstract_analyze, compare
from .model import CostModel, InvalidModelError, policy_warnings, validate
from .parser import FmtSyntaxError, load, parse_duration
from .prism import export
from .semantics import DEFAULT_STATE_BUDGET, StateBudgetExceeded
from .simulation import SimConfig, simulate
from .strategies import StrategyError, annotations, load_strategies, sweep

EXIT_OK, EXIT_RUNTIME, EXIT_IO, EXIT_INVALID, EXIT_BUDGET = range(5)
THREADS_ENV = "FMTREE_THREADS"


class Fail(click.ClickException):
    def __init__(self, message, code):
        super().__init__(message)
        self.exit_code = code


def _errors(fn):
    """Map library exceptions onto the documented exit codes."""
    @wraps(fn)
    def run(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except StateBudgetExceeded as exc:
            raise Fail(str(exc), EXIT_BUDGET) from None
        except FmtSyntaxError as exc:
            raise Fail(f"syntax error: {exc}", EXIT_INVALID) from None
        except InvalidModelError as exc:
            raise Fail("invalid model:\n  " + "\n  ".join(map(str, exc.violations)),
                       EXIT_INVALID) from None
        except StrategyError as exc:
            raise Fail(str(exc), EXIT_INVALID) from None
        except OSError as exc:
            raise Fail(f"{exc.strerror or exc}: {exc.filename or ''}".rstrip(": "),
                       EXIT_IO) from None
        except (ValueError, RuntimeError, KeyError) as exc:
            raise Fail(str(exc), EXIT_RUNTIME) from None
    return run


def parse_horizons(text: str) -> list[float]:
    """Comma list of durations or ``start:stop:step`` ranges (inclusive).

    A unit suffix on the step applies to bare start/stop values, so ``0:25:5y``
    is 0, 5, ..., 25 years.
    """
    out: list[float] = []
    for part in filter(None, (p.strip() for p in text.split(","))):
        if ":" not in part:
            out.append(parse_duration(part))
            continue
        pieces = part.split(":")
        if len(pieces) != 3:
            raise ValueError(f"bad horizon range {part!r}; use start:stop:step")
        unit = pieces[2].lstrip("0123456789.+-eE")
        vals = [parse_duration(p if p.lstrip("0123456789.+-eE") else p + unit) for p in pieces]
        start, stop, step = vals
        if not step > 0:
            raise ValueError("horizon step must be > 0")
        n = int(math.floor((stop - start) / step + 1e-9))
        out.extend(start + i * step for i in range(n + 1))
    if not out:
        raise ValueError("no horizons given")
    if any(h < 0 or math.isinf(h) for h in out):
        raise ValueError("horizons must be finite and >= 0")
    return out


def parse_costs(text: str | None, base: CostModel) -> CostModel:
    if not text:
        return base
    names = {"repair": "cost_repair", "replace": "cost_replace",
             "operational": "cost_operational_per_day", "failure": "cost_failure_per_day"}
    kw = vars(base).copy()
    for item in text.split(","):
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in names or not value:
            raise ValueError(f"bad cost {item!r}; use repair=, replace=, operational=, failure=")
        kw[names[key]] = float(value)
    return CostModel(**kw)


def _emit(text: str, output) -> None:
    if output:
        with open(output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        click.echo(text, nl=False)


def _csv(rows: list[dict], columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _threads(ctx_value):
    n = ctx_value or int(os.environ.get(THREADS_ENV, "0") or 0)
    return threadpool_limits(n) if n > 0 else threadpool_limits(None)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--threads", type=int, default=None,
              help=f"Worker threads for numeric kernels (default: ${THREADS_ENV} or library default).")
@click.pass_context
def main(ctx, threads):
    """Fault maintenance tree analysis."""
    ctx.obj = {"threads": threads}


def _with_threads(fn):
    @wraps(fn)
    @click.pass_context
    def run(ctx, *args, **kwargs):
        with _threads((ctx.obj or {}).get("threads")):
            return fn(*args, **kwargs)
    return run


@main.command()
@click.argument("path")
@_errors
def check(path):
    """Parse and validate PATH."""
    model = load(path)
    violations = validate(model)
    if violations:
        raise InvalidModelError(violations)
    for w in policy_warnings(model.policy):
        click.echo(f"warning: {w}", err=True)
    click.echo(f"ok: {len(model.nodes)} nodes, {len(model.ebes())} basic events, "
               f"top event {model.top_event!r}")


_metric = click.option("--metric", "-m", "metrics", multiple=True, default=("reliability",),
                       type=click.Choice([*METRICS, "all"]), show_default=True)
_horizons = click.option("--horizons", "-t", default="0:25:5y", show_default=True,
                         help="Durations (d/w/m/y) as a comma list or start:stop:step.")
_format = click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
                       show_default=True)
_output = click.option("--output", "-o", type=click.Path(dir_okay=False), default=None)


def _metric_list(metrics):
    return list(METRICS) if "all" in metrics else list(dict.fromkeys(metrics))


@main.command()
@click.argument("path")
@_metric
@_horizons
@click.option("--decompose", is_flag=True, help="Analyse module by module.")
@click.option("--budget", type=int, default=DEFAULT_STATE_BUDGET, show_default=True)
@click.option("--tolerance", type=float, default=1e-10, show_default=True)
@click.option("--costs", default=None, help="Overrides, e.g. repair=100,replace=5000.")
@_format
@_output
@_errors
@_with_threads
def analyze(path, metrics, horizons, decompose, budget, tolerance, costs, fmt, output):
    """Compute metrics of PATH at each horizon."""
    model = load(path)
    model = model.with_costs(parse_costs(costs, model.costs))
    hs = parse_horizons(horizons)
    opts = TransientOptions(tolerance=tolerance)
    name = os.path.splitext(os.path.basename(path))[0]
    results = []
    for metric in _metric_list(metrics):
        if decompose:
            results += abstract_analyze(model, metric, hs, name=name, budget=budget, opts=opts)
        else:
            results += compute_metrics(model, metric, hs, name=name, budget=budget, opts=opts)
    if fmt == "json":
        rows = [r.to_row() for r in results]
        _emit(json.dumps({"results": rows}, indent=2) + "\n", output)
    else:
        cols = results[0].CSV_COLUMNS
        _emit(_csv([r.to_row() for r in results], cols), output)


@main.command(name="compare")
@click.argument("path")
@click.option("--metric", "-m", type=click.Choice(METRICS), default="reliability",
              show_default=True)
@click.option("--horizons", "-t", default="5y,10y,15y", show_default=True)
@click.option("--budget", type=int, default=DEFAULT_STATE_BUDGET, show_default=True)
@_format
@_output
@_errors
@_with_threads
def compare_cmd(path, metric, horizons, budget, fmt, output):
    """Monolithic versus decomposed analysis of PATH (times in ms)."""
    rows = [r.to_row() for r in compare(load(path), metric, parse_horizons(horizons),
                                        budget=budget)]
    if fmt == "json":
        _emit(json.dumps({"metric": metric, "rows": rows}, indent=2) + "\n", output)
    else:
        _emit(_csv(rows, ComparisonRow.COLUMNS), output)


def _pareto(points: dict[str, tuple[float, float]]) -> set[str]:
    keep = set()
    for a, (ca, fa) in points.items():
        if not any(cb <= ca and fb <= fa and (cb, fb) != (ca, fa)
                   for b, (cb, fb) in points.items() if b != a):
            keep.add(a)
    return keep


@main.command(name="sweep")
@click.argument("path")
@click.option("--strategies", "-s", "strategies_path", default=None,
              help="Strategy TOML file (default: bundled M0-M5).")
@_horizons
@click.option("--metric", "-m", "metrics", multiple=True,
              default=("expected_cost", "expected_failures"), type=click.Choice(METRICS),
              show_default=True)
@click.option("--decompose/--monolithic", default=True, show_default=True)
@_output
@_errors
@_with_threads
def sweep_cmd(path, strategies_path, horizons, metrics, decompose, output):
    """Strategy x horizon matrices for PATH (one CSV block per metric).

    The ``pareto`` column marks strategies not dominated in expected cost and
    expected failures at the last horizon; ``note`` repeats the strategy file.
    """
    model = load(path)
    strategies = load_strategies(strategies_path, base=model.policy)
    hs = parse_horizons(horizons)
    metrics = list(dict.fromkeys(metrics))
    table = sweep(model, strategies, hs, metrics, decompose=decompose)
    notes = annotations(strategies)
    front = set()
    if {"expected_cost", "expected_failures"} <= set(metrics):
        front = _pareto({s.name: (table["expected_cost"][s.name][-1],
                                  table["expected_failures"][s.name][-1]) for s in strategies})
    cols = ["metric", "strategy", *[f"{h:g}" for h in hs], "pareto", "note"]
    rows = []
    for metric in metrics:
        for s in strategies:
            row = {"metric": metric, "strategy": s.name, "pareto": int(s.name in front),
                   "note": notes.get(s.name, "")}
            row.update({f"{h:g}": v for h, v in zip(hs, table[metric][s.name])})
            rows.append(row)
    _emit(_csv(rows, cols), output)


@main.command(name="simulate")
@click.argument("path")
@click.option("--runs", "-n", type=int, default=10_000, show_default=True)
@click.option("--horizon", "-t", default="10y", show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--confidence", type=float, default=0.99, show_default=True)
@click.option("--erlang/--deterministic", "erlang_mode", default=False, show_default=True,
              help="Erlang timers (as in the numeric engine) or exact deterministic ones.")
@click.option("--compare", "with_numeric", is_flag=True,
              help="Also run the numeric engine and report the gap.")
@click.option("--decompose", is_flag=True, help="Numeric side of --compare by modules.")
@click.option("--runs-csv", type=click.Path(dir_okay=False), default=None,
              help="Write per-run summaries here.")
@_output
@_errors
@_with_threads
def simulate_cmd(path, runs, horizon, seed, confidence, erlang_mode, with_numeric, decompose,
                 runs_csv, output):
    """Monte Carlo estimates of all four metrics as JSON."""
    model = load(path)
    h = parse_duration(horizon)
    res = simulate(model, SimConfig(runs=runs, horizon=h, seed=seed, confidence=confidence,
                                    erlang_mode=erlang_mode))
    doc = res.to_dict()
    if with_numeric:
        run = abstract_analyze if decompose else compute_metrics
        doc["numeric"] = {}
        for metric, est in res.estimates.items():
            v = run(model, metric, [h])[0].value
            doc["numeric"][metric] = {"value": v, "gap": est.mean - v,
                                      "inside_ci": est.low <= v <= est.high}
    if runs_csv:
        res.write_runs_csv(runs_csv)
    _emit(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", output)


def _json_default(x):
    return float(x)


@main.command(name="export-prism")
@click.argument("path")
@click.argument("out", type=click.Path(dir_okay=False))
@_errors
def export_prism(path, out):
    """Write PATH as a PRISM model OUT plus OUT's .props file."""
    model_file, props = export(load(path), out)
    click.echo(f"wrote {model_file} and {props}")


if __name__ == "__main__":
    sys.exit(main())
