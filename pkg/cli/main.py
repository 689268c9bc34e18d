"""
Command-line front end

    python -m cli estimate --input toy.csv --k 1 --p 2
    python -m cli select --input data.csv --p 10 --k-grid 1,3,5,7
    python -m cli verify --n 100 --k 1 --k 5 --p 1 --p 10 --p 30
    python -m cli bounds --n 100 --p 10 --k 4 --gamma-d 2 --t 0.5 --x 1 --q 4
    python -m cli oracle

Exit codes: 0 success, 1 failed verification or oracle, 2 malformed input,
3 infeasible configuration (p + k > n, enumeration cap, bound regime).
"""

import json
import logging
import os
import time
from typing import Any, Dict, List, Literal, Optional

import pandas as pd
import typer
from pydantic import BaseModel, Field, ValidationError, model_validator
from rich.console import Console
from rich.table import Table
from typing_extensions import Annotated

from backend import __version__
from backend.bounds import DEFAULT_STONE_GAMMA, BoundInputs, evaluate_all
from backend.config import configure_logging, get_settings
from backend.dataset_io import read_dataset_csv
from backend.errors import (
    EnumerationCapError,
    InfeasibleError,
    InputError,
    LpoError,
    RegimeError,
    check_feasible,
)
from backend.lpo_exact import lpo_bruteforce, lpo_exact
from backend.selection import coverage_to_x, select_k_curves
from backend.ustat import incomplete_ustat_estimate
from evaluation.distributions import DistributionSpec
from evaluation.evaluate import run_campaign_matrix
from evaluation.oracle import off_by_one_estimator, oracle_sweep

logger = logging.getLogger(__name__)

EXIT_FAILED = 1
EXIT_INPUT = 2
EXIT_INFEASIBLE = 3

app = typer.Typer(add_completion=False, help="Exact leave-p-out risk of kNN, its bounds and their verification")

Command = Literal["estimate", "select", "verify", "bounds", "oracle"]
OutputFormat = Literal["table", "json"]


class RunConfig(BaseModel):
    """Everything a run depends on, echoed into its report"""

    command: Command
    input: Optional[str] = None
    n: Optional[int] = Field(default=None, ge=2)
    p: List[int] = Field(default_factory=list)
    k: List[int] = Field(default_factory=list)
    method: Optional[str] = None
    replicates: Optional[int] = Field(default=None, ge=1)
    seed: int = 0
    t_grid: List[float] = Field(default_factory=list)
    q_max: Optional[int] = None
    gamma_d: Optional[float] = Field(default=None, ge=1.0)
    output: Optional[str] = None
    format: OutputFormat = "table"
    workers: int = Field(default=1, ge=1)
    extra: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self) -> "RunConfig":
        if any(p < 1 for p in self.p) or any(k < 1 for k in self.k):
            raise ValueError("p and k must be positive")
        if any(t <= 0 for t in self.t_grid):
            raise ValueError("deviation levels t must be positive")
        return self

    def check_feasible(self, n: int) -> None:
        for p in self.p:
            for k in self.k:
                check_feasible(n, p, k)


def parse_list(raw: Optional[str], cast=float) -> List:
    """Comma-separated numbers, e.g. '0.05,0.1,0.2'"""
    if raw is None or not raw.strip():
        return []
    try:
        return [cast(item) for item in raw.split(",") if item.strip()]
    except ValueError as e:
        raise InputError(f"malformed number list '{raw}'") from e


def exit_code_for(error: Exception) -> int:
    if isinstance(error, (InfeasibleError, EnumerationCapError, RegimeError)):
        return EXIT_INFEASIBLE
    return EXIT_INPUT


def _fail(error: Exception) -> None:
    code = exit_code_for(error)
    typer.echo(f"Error: {error}", err=True)
    raise typer.Exit(code)


def _build_config(**fields) -> RunConfig:
    try:
        return RunConfig(**fields)
    except ValidationError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(EXIT_INPUT)


def _document(config: RunConfig, result: Any) -> str:
    payload = {
        "version": __version__,
        "config": config.model_dump(mode="json"),
        "result": result,
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def _emit(config: RunConfig, result: Any, table: Table) -> None:
    """Print and write only once the whole result exists"""
    document = _document(config, result)
    if config.output:
        directory = os.path.dirname(config.output)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(config.output, "w", encoding="utf-8") as f:
            f.write(document + "\n")
    if config.format == "json":
        typer.echo(document)
    else:
        Console().print(table)


def _write_csv(frame: pd.DataFrame, path: Optional[str]) -> None:
    if not path:
        return
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame.to_csv(path, index=False, encoding="utf-8", float_format="%.17g")


def _fmt(value: Optional[float]) -> str:
    # repr keeps table and JSON values identical
    return "-" if value is None else repr(float(value))


@app.callback()
def main(
    log_level: Annotated[Optional[str], typer.Option(help="Logging level, defaults to LPO_LOG_LEVEL")] = None,
):
    configure_logging(log_level)


@app.command("estimate")
def run_estimate(
    input: Annotated[str, typer.Option(help="CSV with columns f1..fd,label")],
    k: Annotated[int, typer.Option(help="Number of neighbors")],
    p: Annotated[int, typer.Option(help="Size of the held-out set")],
    method: Annotated[str, typer.Option(help="exact, bruteforce or hoeffding")] = "exact",
    replicates: Annotated[int, typer.Option(help="Permutations for the hoeffding method")] = 10_000,
    seed: Annotated[int, typer.Option()] = 0,
    output: Annotated[Optional[str], typer.Option(help="Write the JSON report here")] = None,
    format: Annotated[str, typer.Option(help="table or json on stdout")] = "table",
    workers: Annotated[Optional[int], typer.Option(help="Parallel workers, defaults to LPO_WORKERS")] = None,
):
    """LpO risk of the kNN rule on a dataset"""
    config = _build_config(
        command="estimate", input=input, p=[p], k=[k], method=method, replicates=replicates,
        seed=seed, output=output, format=format, workers=workers or get_settings().workers,
    )
    try:
        if method not in ("exact", "bruteforce", "hoeffding"):
            raise InputError(f"unknown method '{method}'")
        dataset = read_dataset_csv(input)
        config.check_feasible(dataset.n)
        started = time.perf_counter()
        if method == "exact":
            result = lpo_exact(dataset, k, p, n_jobs=config.workers)
        elif method == "bruteforce":
            result = lpo_bruteforce(dataset, k, p)
        else:
            result = incomplete_ustat_estimate(dataset, k, p, replicates, seed, n_jobs=config.workers)
        elapsed = time.perf_counter() - started
    except LpoError as e:
        _fail(e)

    table = Table(title=f"Leave-{p}-out risk, k={k}, n={dataset.n}")
    for column in ("method", "value", "standard_error", "exact"):
        table.add_column(column)
    table.add_row(result.method, _fmt(result.value), _fmt(result.standard_error), result.exact or "-")
    _emit(config, {**result.model_dump(mode="json"), "elapsed_seconds": elapsed}, table)


@app.command("select")
def run_select(
    input: Annotated[str, typer.Option(help="CSV with columns f1..fd,label")],
    k_grid: Annotated[str, typer.Option(help="Comma-separated candidate k values")],
    p: Annotated[List[int], typer.Option(help="Leave-out size; repeat for side-by-side curves")],
    gamma_d: Annotated[Optional[float], typer.Option(help="Stone constant, built in for d=1")] = None,
    coverage: Annotated[float, typer.Option(help="Coverage of the confidence radius")] = 0.95,
    curve_csv: Annotated[Optional[str], typer.Option(help="Write the curves as CSV")] = None,
    output: Annotated[Optional[str], typer.Option()] = None,
    format: Annotated[str, typer.Option()] = "table",
):
    """Choose k by minimizing the exact LpO risk"""
    try:
        grid = parse_list(k_grid, int)
        config = _build_config(
            command="select", input=input, p=p, k=grid, output=output, format=format,
            gamma_d=gamma_d, extra={"coverage": coverage},
        )
        dataset = read_dataset_csv(input)
        gamma = gamma_d if gamma_d is not None else DEFAULT_STONE_GAMMA.get(dataset.dimension)
        curves = select_k_curves(dataset, p, grid, gamma_d=gamma, x=coverage_to_x(coverage))
    except LpoError as e:
        _fail(e)

    rows = []
    table = Table(title=f"LpO risk over k, n={dataset.n}")
    for column in ("p", "k", "estimate", "confidence_radius", "chosen"):
        table.add_column(column)
    for curve_p, curve in curves.items():
        for k, estimate_, radius in zip(curve.grid, curve.estimates, curve.confidence_radius):
            chosen = k == curve.chosen_k
            rows.append({"p": curve_p, "k": k, "estimate": estimate_.value, "confidence_radius": radius})
            table.add_row(str(curve_p), str(k), _fmt(estimate_.value), _fmt(radius), "*" if chosen else "")

    _write_csv(pd.DataFrame(rows, columns=["p", "k", "estimate", "confidence_radius"]), curve_csv)
    _emit(config, {str(key): curve.model_dump(mode="json") for key, curve in curves.items()}, table)


@app.command("verify")
def run_verify(
    n: Annotated[int, typer.Option(help="Sample size of every replicate")] = 100,
    k: Annotated[List[int], typer.Option(help="Repeat for several k")] = [1, 5],
    p: Annotated[List[int], typer.Option(help="Repeat for several p")] = [1, 10, 30],
    replicates: Annotated[int, typer.Option()] = 1000,
    seed: Annotated[int, typer.Option()] = 0,
    t_grid: Annotated[str, typer.Option(help="Comma-separated deviation levels")] = "0.05,0.1,0.15,0.2,0.3",
    q_max: Annotated[int, typer.Option(help="Highest moment order checked")] = 4,
    kind: Annotated[str, typer.Option(help="Distribution family")] = "gaussian_mixture_1d",
    dimension: Annotated[int, typer.Option()] = 1,
    class_prior: Annotated[float, typer.Option()] = 0.5,
    gamma_d: Annotated[Optional[float], typer.Option(help="Stone constant, built in for d=1")] = None,
    tail_csv: Annotated[Optional[str], typer.Option(help="Write the tail table as CSV")] = None,
    output: Annotated[Optional[str], typer.Option()] = None,
    format: Annotated[str, typer.Option()] = "table",
    workers: Annotated[Optional[int], typer.Option()] = None,
    bound_scale: Annotated[float, typer.Option(hidden=True)] = 1.0,
):
    """Monte-Carlo check of every bound; exits 1 on any violation"""
    try:
        config = _build_config(
            command="verify", n=n, p=p, k=k, replicates=replicates, seed=seed,
            t_grid=parse_list(t_grid), q_max=q_max, gamma_d=gamma_d, output=output, format=format,
            workers=workers or get_settings().workers,
            extra={"kind": kind, "dimension": dimension, "class_prior": class_prior, "bound_scale": bound_scale},
        )
        config.check_feasible(n)
        spec = DistributionSpec(kind=kind, dimension=dimension, class_prior=class_prior)
        matrix = run_campaign_matrix(
            spec, n, p, k, replicates, config.t_grid, q_max, seed,
            gamma_d=gamma_d, n_jobs=config.workers, bound_scale=bound_scale,
        )
    except ValidationError as e:
        _fail(InputError(str(e)))
    except LpoError as e:
        _fail(e)

    table = Table(title=f"Bound checks, n={n}, {replicates} replicates")
    for column in ("k", "p", "bound_id", "empirical", "se", "bound", "violated"):
        table.add_column(column)
    tail_rows = []
    for report in matrix.reports:
        for check in report.checks:
            table.add_row(
                str(report.k), str(report.p), check.bound_id, _fmt(check.empirical),
                _fmt(check.standard_error), _fmt(check.bound), "VIOLATED" if check.violated else "",
            )
        for row in report.tails:
            tail_rows.append({"k": report.k, "p": report.p, **row.model_dump()})

    columns = ["k", "p", "t", "empirical", "standard_error", "bound_id", "bound_value", "violated"]
    _write_csv(pd.DataFrame(tail_rows, columns=columns), tail_csv)
    _emit(config, {**matrix.model_dump(mode="json"), "violations": matrix.violations}, table)
    if matrix.violations:
        typer.echo(f"{matrix.violations} bound violations", err=True)
        raise typer.Exit(EXIT_FAILED)


@app.command("bounds")
def run_bounds(
    n: Annotated[int, typer.Option()],
    p: Annotated[int, typer.Option()],
    k: Annotated[int, typer.Option()],
    gamma_d: Annotated[float, typer.Option(help="Stone constant")] = 2.0,
    t: Annotated[float, typer.Option(help="Deviation level for the tail bounds")] = 0.1,
    x: Annotated[float, typer.Option(help="Confidence level parameter")] = 1.0,
    q: Annotated[float, typer.Option(help="Moment order")] = 2.0,
    output: Annotated[Optional[str], typer.Option()] = None,
    format: Annotated[str, typer.Option()] = "table",
):
    """Every bound at one (n, p, k); out-of-regime bounds are marked"""
    config = _build_config(command="bounds", n=n, p=[p], k=[k], gamma_d=gamma_d, output=output, format=format,
                           extra={"t": t, "x": x, "q": q})
    try:
        config.check_feasible(n)
        report = evaluate_all(BoundInputs(n=n, p=p, k=k, q=q, t=t, x=x, gamma_d=gamma_d))
    except ValidationError as e:
        _fail(InputError(str(e)))
    except LpoError as e:
        _fail(e)

    table = Table(title=f"Bounds at n={n}, p={p}, k={k}")
    for column in ("bound_id", "kind", "value", "clipped", "note"):
        table.add_column(column)
    for entry in report.entries:
        table.add_row(entry.bound_id, entry.kind, _fmt(entry.value), _fmt(entry.clipped), entry.note or "")
    _emit(config, report.model_dump(mode="json"), table)


@app.command("oracle")
def run_oracle(
    n_min: Annotated[int, typer.Option()] = 4,
    n_max: Annotated[int, typer.Option()] = 10,
    k_max: Annotated[int, typer.Option()] = 3,
    datasets: Annotated[int, typer.Option(help="Random datasets per n")] = 20,
    seed: Annotated[int, typer.Option()] = 0,
    cap: Annotated[Optional[int], typer.Option(help="Enumeration cap, defaults to LPO_ENUMERATION_CAP")] = None,
    output: Annotated[Optional[str], typer.Option()] = None,
    format: Annotated[str, typer.Option()] = "table",
    inject_fault: Annotated[bool, typer.Option(hidden=True)] = False,
):
    """Exact DP against brute-force enumeration and the permutation identity"""
    config = _build_config(
        command="oracle", seed=seed, output=output, format=format,
        extra={"n_min": n_min, "n_max": n_max, "k_max": k_max, "datasets": datasets, "cap": cap},
    )
    try:
        if n_min < 2 or n_max < n_min or k_max < 1 or datasets < 1:
            raise InputError("need 2 <= n_min <= n_max, k_max >= 1 and datasets >= 1")
        report = oracle_sweep(
            n_values=range(n_min, n_max + 1),
            k_values=range(1, k_max + 1),
            datasets=datasets,
            seed=seed,
            estimator=off_by_one_estimator if inject_fault else lpo_exact,
            cap=cap,
        )
    except LpoError as e:
        _fail(e)

    table = Table(title="Oracle sweep")
    for column in ("cases", "permutation_checks", "max_abs_discrepancy", "failures"):
        table.add_column(column)
    table.add_row(
        str(report.cases_checked), str(report.permutation_checks),
        _fmt(report.max_abs_discrepancy), str(len(report.failures)),
    )
    _emit(config, {**report.model_dump(mode="json"), "passed": report.passed}, table)
    if not report.passed:
        typer.echo(f"{len(report.failures)} oracle mismatches", err=True)
        raise typer.Exit(EXIT_FAILED)


if __name__ == "__main__":
    app()
