"""Command line interface: parse, build, analyse, enumerate and emulate mini-IR programs.

Exit codes: 0 success, 1 input error, 2 property violation, 3 resource cap.
"""

# pylint: disable=logging-fstring-interpolation, too-many-arguments

# Global imports
import functools
import logging
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

# 3rd party imports
import click
from rich.table import Table

# local imports
import param
import export
from analysis_parallel import AnalysisError, count_options, enumerate_plans, loop_sccs
from console import console, err_console, setup_logging
from emulator_ideal import DynTrace, EmulationError, TraceCapExceeded, check_semantics, emulate, best_plans, run_trace
from frontend_cilk import build_pspdg_cilk
from frontend_openmp import FrontendError, build_pspdg_omp
from mini_pir import PirError, Program, parse, print_program
from pdg_builder import Pdg, build_pdg, jk_pdg
from pspdg_core import Feature, PsPdg, ablate, canonicalize, diff, equal
from settings import RunConfig, load_run_config

MODELS = ("openmp", "cilk")
GRAPHS = ("pspdg", "pdg", "jk")


class InputError(Exception):
    """A file is missing or a flag combination makes no sense."""


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
def _fail(code: int, message: str) -> None:
    err_console.print(f"[bold red]error:[/] {message}", highlight=False)
    sys.exit(code)


def handle_errors(command: Callable[..., Any]) -> Callable[..., Any]:
    """Turn the package's exceptions into diagnostics on stderr and an exit code."""

    @functools.wraps(command)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        try:
            return command(*args, **kwargs)
        except (PirError, FrontendError) as e:
            for d in e.diagnostics:
                err_console.print(str(d), highlight=False, markup=False)
            _fail(param.exit_input_error, f"{len(e.diagnostics)} diagnostic(s)")
        except TraceCapExceeded as e:
            _fail(param.exit_resource_cap, str(e))
        except (InputError, EmulationError, AnalysisError, OSError, ValueError) as e:
            _fail(param.exit_input_error, str(e))
        return None

    return wrapper


def graph_options(command: Callable[..., Any]) -> Callable[..., Any]:
    """Options shared by every command that builds a graph."""
    options = [
        click.option("--model", type=click.Choice(MODELS), default="openmp", show_default=True, help="Annotation model of the input"),
        click.option("--graph", "graph_kind", type=click.Choice(GRAPHS), default="pspdg", show_default=True, help="Graph to build"),
        click.option("--ablate", "feature", type=click.Choice(sorted(param.ablate_names)), default=None, help="Remove one PS-PDG feature"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def plan_options(command: Callable[..., Any]) -> Callable[..., Any]:
    """Plan space and emulator limits; unset values come from the ini file or param.py."""
    options = [
        click.option("--cores", type=click.IntRange(min=1), default=None, help="Cores considered per plan"),
        click.option("--chunks", "chunk_sizes", type=click.IntRange(min=1), default=None, help="Number of DOALL chunk sizes"),
        click.option("--coverage", type=click.FloatRange(0.0, 1.0), default=None, help="Minimum share of dynamic instructions"),
        click.option("--trace-cap", type=click.IntRange(min=1), default=None, help="Maximum trace length"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _config(ctx: click.Context, **overrides: Any) -> RunConfig:
    return load_run_config(ctx.obj.get("config") if ctx.obj else None, **overrides)


def load_program(path: Path) -> Program:
    """Read and validate one .pir file.

    :raises InputError: when the file cannot be read
    :raises PirError: on syntax or validation errors
    """

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from e
    logging.info(f"parsing {path}")
    return parse(text)


def build_pspdg(p: Program, model: str, feature: str | None = None) -> PsPdg:
    """Build the PS-PDG of a program with the model's front end, optionally with one feature ablated.

    :raises FrontendError: when the program does not fit the model
    """

    base = build_pdg(p)
    g = build_pspdg_cilk(p, base) if model == "cilk" else build_pspdg_omp(p, base)
    if feature:
        g = ablate(g, Feature(param.ablate_names[feature]))
    return g


def build_graph(p: Program, model: str, graph_kind: str = "pspdg", feature: str | None = None) -> PsPdg | Pdg:
    """Build the requested graph of a program, optionally with one feature ablated.

    :raises InputError: when ablation is asked for a plain PDG
    :raises FrontendError: when the program does not fit the model
    """

    if graph_kind == "pspdg":
        return build_pspdg(p, model, feature)
    if feature:
        raise InputError("--ablate applies to the PS-PDG only")
    base = build_pdg(p)
    return base if graph_kind == "pdg" else jk_pdg(p, base)


def trace_of(p: Program, cap: int) -> DynTrace:
    """Run a program for its trace; a trace that hits the cap is kept with ``truncated`` set."""
    try:
        return run_trace(p, cap=cap)
    except TraceCapExceeded as e:
        logging.warning(f"{e}, using the partial trace")
        return e.trace


def _emit(text: str) -> None:
    click.echo(text, nl=False)


def _table(table: Table) -> None:
    console.print(table)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@click.group()
@click.version_option(version=param.version, prog_name="pspdg")
@click.option("--config", type=click.Path(path_type=Path, dir_okay=False), default=None, help="Path to pspdg.ini")
@click.option("-v", "--verbose", is_flag=True, default=False, help="Log at DEBUG level")
@click.pass_context
def main(ctx: click.Context, config: Path | None, verbose: bool) -> None:
    """Build and compare dependence graphs of parallel mini-IR programs."""

    setup_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj["config"] = config


@main.command("parse")
@click.argument("file", type=click.Path(path_type=Path))
@click.option("--format", "output_format", type=click.Choice(["text", "json"]), default="text", show_default=True)
@handle_errors
def parse_cmd(file: Path, output_format: str) -> None:
    """Parse and validate a program, then print it back."""

    p = load_program(file)
    if output_format == "json":
        document = {
            "functions": [f.name for f in p.functions],
            "globals": [g.name for g in p.globals],
            "loops": [loop.id for loop in p.loops()],
            "instructions": len(p.instructions),
        }
        _emit(export.dump_json(document))
    else:
        _emit(print_program(p))


@main.command()
@click.argument("file", type=click.Path(path_type=Path))
@graph_options
@click.option("--format", "output_format", type=click.Choice(["text", "json", "dot"]), default="text", show_default=True)
@handle_errors
def build(file: Path, model: str, graph_kind: str, feature: str | None, output_format: str) -> None:
    """Build a PDG or PS-PDG and print its canonical text, JSON or DOT."""

    g = build_graph(load_program(file), model, graph_kind, feature)
    if isinstance(g, Pdg):
        match output_format:
            case "dot":
                _emit(export.pdg_to_dot(g))
            case "json":
                _emit(export.dump_json(export.pdg_to_json(g)))
            case _:
                _emit("\n".join(export.pdg_lines(g)) + "\n")
        return
    match output_format:
        case "dot":
            _emit(export.ps_to_dot(g))
        case "json":
            _emit(export.dump_json(export.ps_to_json(g)))
        case _:
            _emit(canonicalize(g).text)


@main.command()
@click.argument("file", type=click.Path(path_type=Path))
@graph_options
@click.option("--loop", "loop_id", default=None, help="Only this loop")
@click.option("--format", "output_format", type=click.Choice(["text", "json", "table"]), default="text", show_default=True)
@handle_errors
def sccs(file: Path, model: str, graph_kind: str, feature: str | None, loop_id: str | None, output_format: str) -> None:
    """Strongly connected components of every loop body."""

    p = load_program(file)
    g = build_graph(p, model, graph_kind, feature)
    labels = canonicalize(g).labels if isinstance(g, PsPdg) else None
    loops = [loop.id for loop in p.loops() if loop_id in (None, loop.id)]
    if loop_id and not loops:
        raise InputError(f"unknown loop '{loop_id}'")
    partitions = [loop_sccs(g, loop) for loop in loops]
    document = export.sccs_json(partitions, labels)
    if output_format == "json":
        _emit(export.dump_json(document))
        return
    if output_format == "table":
        table = Table(title="Loop SCCs")
        for column in ("loop", "scc", "kind", "nodes"):
            table.add_column(column)
        for entry in document["loops"]:
            for number, scc in enumerate(entry["sccs"]):
                table.add_row(entry["loop"], str(number), scc["kind"], ",".join(scc["nodes"]))
        _table(table)
        return
    for entry in document["loops"]:
        sequential = sum(1 for scc in entry["sccs"] if scc["kind"] == "sequential")
        click.echo(f"loop {entry['loop']}: {len(entry['sccs'])} SCCs, {sequential} sequential")
        for scc in entry["sccs"]:
            click.echo(f"  {scc['kind']}: {','.join(scc['nodes'])}")


@main.command("enumerate")
@click.argument("file", type=click.Path(path_type=Path))
@graph_options
@plan_options
@click.option("--loop", "loop_id", default=None, help="List the plans of this loop")
@click.option("--format", "output_format", type=click.Choice(["text", "json", "table"]), default="table", show_default=True)
@click.pass_context
@handle_errors
def enumerate_cmd(
    ctx: click.Context,
    file: Path,
    model: str,
    graph_kind: str,
    feature: str | None,
    cores: int | None,
    chunk_sizes: int | None,
    coverage: float | None,
    trace_cap: int | None,
    loop_id: str | None,
    output_format: str,
) -> None:
    """Count the parallelization options of every loop, or list those of one loop."""

    cfg = _config(ctx, cores=cores, chunk_sizes=chunk_sizes, coverage=coverage, trace_cap=trace_cap)
    p = load_program(file)
    trace_coverage = trace_of(p, cfg.trace_cap).coverage()

    if loop_id is not None:
        g = build_graph(p, model, graph_kind, feature)
        plans = enumerate_plans(g, loop_id, cfg.enumeration(), trace_coverage)
        if output_format == "json":
            _emit(export.dump_json({"loop": loop_id, "plans": [export.plan_json(plan) for plan in plans]}))
        else:
            for plan in plans:
                click.echo(str(plan))
        return

    if graph_kind != "pspdg":
        raise InputError("option counts compare every graph; use --graph pspdg")
    g = build_pspdg(p, model, feature)
    report = count_options(p, g, cfg.enumeration(), trace_coverage)
    match output_format:
        case "json":
            _emit(export.dump_json(export.options_json(report)))
        case "table":
            _table(export.options_table(report))
        case _:
            for row in [*report.rows, report.total]:
                click.echo(f"{row.loop}: pdg={row.pdg} jk={row.jk} ps-pdg={row.ps} source={row.source} {row.note}".rstrip())


def emulation_options(command: Callable[..., Any]) -> Callable[..., Any]:
    options = [
        click.option("--model", type=click.Choice(MODELS), default="openmp", show_default=True),
        click.option("--ablate", "feature", type=click.Choice(sorted(param.ablate_names)), default=None),
        click.option("--baseline", type=click.Choice(["source", "sequential"]), default=None, help="Speedup denominator"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@main.command("emulate")
@click.argument("file", type=click.Path(path_type=Path))
@emulation_options
@plan_options
@click.option("--check", is_flag=True, default=False, help="Replay random plan-consistent orders and compare final memory")
@click.option("--format", "output_format", type=click.Choice(["text", "json", "table"]), default="table", show_default=True)
@click.pass_context
@handle_errors
def emulate_cmd(
    ctx: click.Context,
    file: Path,
    model: str,
    feature: str | None,
    baseline: str | None,
    cores: int | None,
    chunk_sizes: int | None,
    coverage: float | None,
    trace_cap: int | None,
    check: bool,
    output_format: str,
) -> None:
    """Critical paths on an ideal machine under sequential, PDG, source and PS-PDG plans."""

    cfg = _config(ctx, cores=cores, chunk_sizes=chunk_sizes, coverage=coverage, trace_cap=trace_cap, baseline=baseline)
    p = load_program(file)
    g = build_pspdg(p, model, feature)
    t = run_trace(p, cap=cfg.trace_cap)
    report = emulate(p, g, cfg.enumeration(), cfg.baseline, t)
    match output_format:
        case "json":
            _emit(export.dump_json(export.emulation_json(report)))
        case "table":
            _table(export.emulation_table(report))
        case _:
            for name, row in report.rows():
                click.echo(f"{name}: path={row.critical_path_length}/{row.total_instructions} speedup={row.speedup:.2f}")
    if check:
        problems = check_semantics(p, t, best_plans(t, p, g, cfg.enumeration()), g, cfg.extensions, cfg.seed)
        for problem in problems:
            err_console.print(problem, highlight=False, markup=False)
        if problems:
            _fail(param.exit_property_violation, f"{len(problems)} replay mismatch(es)")


@main.command()
@click.argument("file", type=click.Path(path_type=Path))
@emulation_options
@plan_options
@click.pass_context
@handle_errors
def report(
    ctx: click.Context,
    file: Path,
    model: str,
    feature: str | None,
    baseline: str | None,
    cores: int | None,
    chunk_sizes: int | None,
    coverage: float | None,
    trace_cap: int | None,
) -> None:
    """One JSON document with option counts and critical paths."""

    cfg = _config(ctx, cores=cores, chunk_sizes=chunk_sizes, coverage=coverage, trace_cap=trace_cap, baseline=baseline)
    p = load_program(file)
    g = build_pspdg(p, model, feature)
    t = trace_of(p, cfg.trace_cap)
    emulation = emulate(p, g, cfg.enumeration(), cfg.baseline, t)
    options = count_options(p, g, cfg.enumeration(), t.coverage())
    document = {
        "program": file.name,
        "model": model,
        **export.options_json(options),
        **export.emulation_json(emulation),
    }
    _emit(export.dump_json(document))
    if emulation.truncated:
        sys.exit(param.exit_resource_cap)


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class NecessityRow:
    pair: str
    feature: str
    equal_without: bool
    equal_with: bool

    @property
    def ok(self) -> bool:
        return self.equal_without and not self.equal_with


def necessity_rows(corpus: Path) -> list[NecessityRow]:
    """Compare the fast and slow program of every necessity pair with and without its feature.

    :param corpus: directory holding necessity/<pair>/fast.pir and slow.pir
    :raises InputError: when a pair file is missing
    """

    rows = []
    for pair, name in param.necessity_pairs.items():
        graphs = []
        for variant in ("fast", "slow"):
            path = corpus / "necessity" / pair / f"{variant}.pir"
            if not path.is_file():
                raise InputError(f"necessity pair {pair}: missing {path}")
            graphs.append(build_pspdg(load_program(path), "openmp"))
        fast, slow = graphs
        feature = Feature(name)
        rows.append(NecessityRow(pair, name, equal(ablate(fast, feature), ablate(slow, feature)), equal(fast, slow)))
        logging.info(f"pair {pair}: {rows[-1]}")
    return rows


@main.command()
@click.option("--corpus", type=click.Path(path_type=Path, file_okay=False), default=None, help="Corpus root")
@click.option("--format", "output_format", type=click.Choice(["json", "table"]), default="table", show_default=True)
@click.pass_context
@handle_errors
def necessity(ctx: click.Context, corpus: Path | None, output_format: str) -> None:
    """Check that each PS-PDG feature is needed to tell its pair of programs apart."""

    cfg = _config(ctx, corpus=corpus)
    rows = necessity_rows(cfg.corpus)
    if output_format == "json":
        document = {
            "necessity": [
                {"pair": r.pair, "feature": r.feature, "equal_without": r.equal_without, "equal_with": r.equal_with, "ok": r.ok}
                for r in rows
            ]
        }
        _emit(export.dump_json(document))
    else:
        table = Table(title="Feature necessity")
        for column in ("pair", "feature", "equal without", "equal with", "status"):
            table.add_column(column)
        for r in rows:
            status = "[green]ok[/]" if r.ok else "[bold red]FAIL[/]"
            table.add_row(r.pair, r.feature, str(r.equal_without).lower(), str(r.equal_with).lower(), status)
        _table(table)
    if not all(r.ok for r in rows):
        sys.exit(param.exit_property_violation)


@main.command("diff")
@click.argument("first", type=click.Path(path_type=Path))
@click.argument("second", type=click.Path(path_type=Path))
@click.option("--model", type=click.Choice(MODELS), default="openmp", show_default=True)
@click.option("--ablate", "feature", type=click.Choice(sorted(param.ablate_names)), default=None)
@click.option("--format", "output_format", type=click.Choice(["text", "json"]), default="text", show_default=True)
@handle_errors
def diff_cmd(first: Path, second: Path, model: str, feature: str | None, output_format: str) -> None:
    """Structural difference of two PS-PDGs under canonical alignment."""

    a, b = (build_pspdg(load_program(path), model, feature) for path in (first, second))
    d = diff(a, b)
    if output_format == "json":
        _emit(export.dump_json(export.diff_json(d)))
    elif d.is_empty:
        click.echo("graphs are equal")
    else:
        click.echo(str(d))


# -----------------------------------------------------------------------------
#
# -----------------------------------------------------------------------------
# pylint: disable=no-value-for-parameter
if __name__ == "__main__":
    main()
