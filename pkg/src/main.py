#!/usr/bin/env python3
"""
Entanglement Rate Allocation - Command Line

Solves scenario files, runs parameter sweeps into CSV/SVG artifacts and
validates the solver against the grid, enumeration and Monte-Carlo oracles.

Exit codes: 0 success, 1 usage or parse error, 2 infeasible scenario,
3 validation mismatch.
"""

import json
import sys
from pathlib import Path
from typing import List, Optional

# Add src directory to path
sys.path.append(str(Path(__file__).parent))

import click
import yaml
from rich.console import Console
from rich.table import Table

from model import RateAllocation, Scenario, memory_usage
from oracle import (
    MAX_ENUMERATION_CAPACITY,
    MAX_GRID_USERS,
    GridSpec,
    OracleCheck,
    check_against_enumeration,
    check_against_grid,
    monte_carlo_window,
)
from solver import Relaxation, SolverOptions, max_common_rate_min, max_feasible_tau, solve
from svg_chart import render_svg
from sweeps import (
    load_scenario,
    load_sweep_spec,
    run_sweep,
    sidecar_path,
    write_csv,
    write_metadata,
    write_raw_csv,
)
from utils.logger import setup_logger
from utils.settings import load_settings

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_MISMATCH = 3

console = Console()


class RateToolkit:
    """Settings, logging and the operations behind each subcommand."""

    def __init__(self, config_path: Optional[str] = None, debug: bool = False):
        self.settings = load_settings(config_path)
        level = "DEBUG" if debug else self.settings.logging["level"]
        self.logger = setup_logger(level=level, log_dir=self.settings.logging["log_dir"])

    def solver_options(self, integer: bool = False, tie_break: Optional[str] = None) -> SolverOptions:
        defaults = self.settings.solver
        return SolverOptions(
            relaxation=Relaxation.INTEGER if integer else defaults["relaxation"],
            tolerance=defaults["tolerance"],
            tie_break=tie_break or defaults["tie_break"],
        )

    def solve_scenario(self, path: str, integer: bool, as_json: bool, tie_break: Optional[str]) -> int:
        scenario = load_scenario(path)
        allocation = solve(scenario, self.solver_options(integer, tie_break))
        self.logger.info(f"Solved {path}: status {allocation.status.value}")

        if as_json:
            click.echo(json.dumps(allocation.to_dict(), indent=2))
        else:
            self._print_allocation(scenario, allocation, title=f"Allocation for {Path(path).name}")
        return EXIT_OK if allocation.is_optimal else EXIT_INFEASIBLE

    def run_sweep_spec(self, path: str, csv_path: str, svg_path: Optional[str], raw: bool,
                       workers: Optional[int], chart: Optional[str]) -> int:
        spec = load_sweep_spec(path, default_options=self.solver_options(),
                               default_runs=self.settings.sweeps["randomized_runs"])
        result = run_sweep(spec, workers=workers or self.settings.sweeps["workers"])

        write_csv(result, csv_path)
        write_metadata(result, sidecar_path(csv_path, "meta.yaml"))
        console.print(f"[green]✓ Wrote {len(result.rows)} points to {csv_path}[/green]")
        if raw:
            if result.raw_rows:
                raw_path = sidecar_path(csv_path, "raw.csv")
                write_raw_csv(result, raw_path)
                console.print(f"[green]✓ Wrote per-run rows to {raw_path}[/green]")
            else:
                console.print("[yellow]⚠ --raw ignored: the sweep is not randomized[/yellow]")
        if svg_path:
            render_svg(result, svg_path, kind=chart)
            console.print(f"[green]✓ Wrote chart to {svg_path}[/green]")

        infeasible = len(result.rows) - len(result.feasible_rows)
        if infeasible:
            console.print(f"[yellow]⚠ {infeasible} of {len(result.rows)} points infeasible or rejected[/yellow]")
        return EXIT_OK

    def oracle_check(self, path: str, grid_step: Optional[float]) -> int:
        scenario = load_scenario(path)
        if scenario.size > MAX_GRID_USERS:
            raise click.UsageError(f"oracle-check supports at most {MAX_GRID_USERS} users, got {scenario.size}")

        grid = GridSpec(step=grid_step or self.settings.oracle["grid_step_ebit_s"])
        checks: List[OracleCheck] = [check_against_grid(scenario, grid, self.solver_options())]
        if scenario.node.memory_capacity <= MAX_ENUMERATION_CAPACITY:
            checks.append(check_against_enumeration(scenario, self.solver_options(integer=True)))

        table = Table(title=f"Oracle check for {Path(path).name}")
        table.add_column("Oracle", style="cyan")
        table.add_column("Solver", style="green")
        table.add_column("Oracle value", style="green")
        table.add_column("Tolerance", style="yellow")
        table.add_column("Result")
        for check in checks:
            table.add_row(
                check.label,
                _describe(check.solver),
                _describe(check.oracle),
                f"{check.tolerance:.3g}",
                "[green]match[/green]" if check.matched else "[red]MISMATCH[/red]",
            )
        console.print(table)

        if not all(check.matched for check in checks):
            self.logger.error(f"Oracle mismatch for {path}")
            return EXIT_MISMATCH
        if not checks[0].solver.is_optimal:
            return EXIT_INFEASIBLE
        return EXIT_OK

    def mc_validate(self, path: str, trials: Optional[int], seed: Optional[int], workers: int) -> int:
        scenario = load_scenario(path)
        oracle_settings = self.settings.oracle
        trials = trials or oracle_settings["mc_trials"]
        seed = oracle_settings["mc_seed"] if seed is None else seed
        z_limit = oracle_settings["mc_z_limit"]

        allocation = solve(scenario, self.solver_options())
        if not allocation.is_optimal:
            console.print(f"[red]✗ Scenario is infeasible ({allocation.reason})[/red]")
            return EXIT_INFEASIBLE

        table = Table(title=f"Monte-Carlo validation ({trials} windows, seed {seed})")
        for column in ("User", "Rate (ebit/s)", "K", "Simulated", "Std. error", "Analytic", "Discrete", "z"):
            table.add_column(column)

        passed = True
        for j, (user, rate) in enumerate(zip(scenario.users, allocation.rates)):
            report = monte_carlo_window(user, rate, scenario.node, trials, seed + j,
                                        block_size=oracle_settings["mc_block_size"], workers=workers)
            ok = abs(report.z_score) <= z_limit
            passed &= ok
            table.add_row(
                str(j),
                f"{rate:.6g}",
                str(report.pairs_per_window),
                f"{report.mean:.6g}",
                f"{report.stderr:.3g}",
                f"{report.analytic:.6g}",
                f"{report.analytic_discrete:.6g}",
                f"[{'green' if ok else 'red'}]{report.z_score:.2f}[/]",
            )
        console.print(table)

        if not passed:
            self.logger.error(f"Monte-Carlo mean outside {z_limit} standard errors for {path}")
            return EXIT_MISMATCH
        console.print("[green]✓ Simulation agrees with the analytic model[/green]")
        return EXIT_OK

    def show_thresholds(self, path: str) -> int:
        scenario = load_scenario(path)
        rate = max_common_rate_min(scenario)
        tau = max_feasible_tau(scenario)

        table = Table(title=f"Feasibility thresholds for {Path(path).name}")
        table.add_column("Quantity", style="cyan")
        table.add_column("Value", style="green")
        table.add_row("largest common minimum rate (ebit/s)", "none" if rate is None else f"{rate:.6g}")
        table.add_row("largest window length (ns)", "none" if tau is None else f"{tau * 1e9:.6g}")
        table.add_row("current window length (ns)", f"{scenario.tau * 1e9:.6g}")
        console.print(table)
        return EXIT_OK

    @staticmethod
    def _print_allocation(scenario: Scenario, allocation: RateAllocation, title: str) -> None:
        if not allocation.is_optimal:
            console.print(f"[red]✗ Infeasible: {allocation.reason}[/red]")
            return
        table = Table(title=title)
        table.add_column("User", style="cyan")
        table.add_column("Distance (km)")
        table.add_column("Rate (ebit/s)", style="green")
        table.add_column("Yield", style="green")
        table.add_column("Memory cells", style="yellow")
        for j, user in enumerate(scenario.users):
            table.add_row(
                str(j),
                f"{user.distance:g}",
                f"{allocation.rates[j]:.9g}",
                f"{allocation.yields[j]:.6f}",
                str(allocation.memory_cells[j]),
            )
        console.print(table)
        used, cells = memory_usage(scenario, allocation.rates)
        console.print(f"Objective: [bold]{allocation.objective:.9g}[/bold]  "
                      f"memory {used:.6f} ({cells} cells of {scenario.node.memory_capacity})")


def _describe(allocation: RateAllocation) -> str:
    if allocation.is_optimal:
        return f"{allocation.objective:.9g}"
    return f"infeasible ({allocation.reason})"


class RateToolkitGroup(click.Group):
    """Maps usage, parse and oracle errors onto the documented exit codes."""

    def main(self, *args, **kwargs):
        standalone = kwargs.pop("standalone_mode", True)
        try:
            result = super().main(*args, standalone_mode=False, **kwargs)
            code = result if isinstance(result, int) else EXIT_OK
        except click.ClickException as e:
            e.show()
            code = EXIT_USAGE
        except click.exceptions.Abort:
            console.print("[red]Aborted[/red]")
            code = EXIT_USAGE
        except (ValueError, RuntimeError, OSError, yaml.YAMLError) as e:
            console.print(f"[red]💥 Error: {e}[/red]")
            code = EXIT_USAGE
        if standalone:
            sys.exit(code)
        return code


@click.group(cls=RateToolkitGroup)
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), help='Settings file (default: config/solver_config.yaml)')
@click.option('--debug', is_flag=True, help='Enable debug logging')
@click.pass_context
def cli(ctx: click.Context, config_path: Optional[str], debug: bool):
    """Entanglement generation rate allocation for a quantum node's memory."""
    ctx.obj = RateToolkit(config_path, debug)


@cli.command('solve')
@click.argument('scenario_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--integer', is_flag=True, help='Respect integer memory cells')
@click.option('--json', 'as_json', is_flag=True, help='Print the allocation as JSON')
@click.option('--tie-break', type=click.Choice(['waterfill', 'lexicographic', 'equal_surplus']),
              help='Rule for users with equal coefficients')
@click.pass_obj
def solve_cmd(toolkit: RateToolkit, scenario_file: str, integer: bool, as_json: bool, tie_break: Optional[str]):
    """Solve one scenario file."""
    return toolkit.solve_scenario(scenario_file, integer, as_json, tie_break)


@cli.command()
@click.argument('spec_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--csv', 'csv_path', required=True, type=click.Path(dir_okay=False), help='CSV destination')
@click.option('--svg', 'svg_path', type=click.Path(dir_okay=False), help='Optional SVG chart destination')
@click.option('--raw', is_flag=True, help='Also write per-run rows of randomized sweeps')
@click.option('--workers', type=click.IntRange(min=1), help='Sweep points evaluated concurrently')
@click.option('--chart', type=click.Choice(['rates', 'objective']), help="Override the sweep spec's chart kind")
@click.pass_obj
def sweep(toolkit: RateToolkit, spec_file: str, csv_path: str, svg_path: Optional[str], raw: bool,
          workers: Optional[int], chart: Optional[str]):
    """Run a parameter sweep and write its CSV (and optionally SVG)."""
    return toolkit.run_sweep_spec(spec_file, csv_path, svg_path, raw, workers, chart)


@cli.command('oracle-check')
@click.argument('scenario_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--grid-step', type=float, help='Grid spacing in ebit/s')
@click.pass_obj
def oracle_check(toolkit: RateToolkit, scenario_file: str, grid_step: Optional[float]):
    """Compare the solver with exhaustive oracles (N <= 3)."""
    return toolkit.oracle_check(scenario_file, grid_step)


@cli.command('mc-validate')
@click.argument('scenario_file', type=click.Path(exists=True, dir_okay=False))
@click.option('--trials', type=click.IntRange(min=1), help='Simulated windows per user')
@click.option('--seed', type=int, help='Base random seed')
@click.option('--workers', type=click.IntRange(min=1), default=1, help='Simulation threads')
@click.pass_obj
def mc_validate(toolkit: RateToolkit, scenario_file: str, trials: Optional[int], seed: Optional[int], workers: int):
    """Check the analytic yield against a Monte-Carlo simulation."""
    return toolkit.mc_validate(scenario_file, trials, seed, workers)


@cli.command()
@click.argument('scenario_file', type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def thresholds(toolkit: RateToolkit, scenario_file: str):
    """Largest common minimum rate and window length that still fit in memory."""
    return toolkit.show_thresholds(scenario_file)


def main():
    cli()


if __name__ == "__main__":
    main()
