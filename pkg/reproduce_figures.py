#!/usr/bin/env python3
"""
Figure Reproduction

Runs every shipped sweep spec under sweeps/ and writes CSV, metadata and
SVG artifacts to results/. Variant specs under sweeps/variants/ are added
with --all.
"""

import sys
from pathlib import Path
from typing import Dict, List

# Add src directory to path
sys.path.append(str(Path(__file__).parent / "src"))

import argparse
from rich.console import Console
from rich.table import Table
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn

from svg_chart import ChartError, render_svg
from sweeps import load_sweep_spec, run_sweep, sidecar_path, write_csv, write_metadata, write_raw_csv
from solver import SolverOptions
from utils.logger import setup_logger
from utils.settings import load_settings

console = Console()

PROJECT_ROOT = Path(__file__).parent
SWEEPS_DIR = PROJECT_ROOT / "sweeps"


class FigureReproduction:
    """Batch runner for the shipped sweep specs."""

    def __init__(self, config_path: str = None):
        self.settings = load_settings(config_path)
        self.logger = setup_logger(level=self.settings.logging["level"],
                                   log_dir=self.settings.logging["log_dir"])
        solver = self.settings.solver
        self.default_options = SolverOptions(
            relaxation=solver["relaxation"], tolerance=solver["tolerance"], tie_break=solver["tie_break"]
        )

    @staticmethod
    def find_specs(include_variants: bool) -> List[Path]:
        specs = sorted(SWEEPS_DIR.glob("*.yaml"))
        if include_variants:
            specs += sorted((SWEEPS_DIR / "variants").glob("*.yaml"))
        return specs

    def list_specs(self, include_variants: bool):
        """Show the sweep specs that a run would execute."""
        table = Table(title="Sweep Specs")
        table.add_column("File", style="cyan")
        table.add_column("Axis", style="green")
        table.add_column("Points", style="yellow")
        table.add_column("Runs/point", style="magenta")
        table.add_column("Tie-break", style="blue")

        for path in self.find_specs(include_variants):
            spec = load_sweep_spec(path, self.default_options, self.settings.sweeps["randomized_runs"])
            axis = spec.axis.value if spec.user is None else f"{spec.axis.value}[{spec.user}]"
            table.add_row(
                str(path.relative_to(PROJECT_ROOT)),
                axis,
                str(len(spec.range.values())),
                str(spec.randomized.runs) if spec.randomized else "1",
                spec.options.tie_break.value,
            )
        console.print(table)

    def run(self, output_dir: Path, include_variants: bool, raw: bool, workers: int) -> Dict[str, int]:
        """Run every spec; a failing spec is reported and the batch continues."""
        specs = self.find_specs(include_variants)
        results = {"completed": 0, "charts": 0, "failed": 0}

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            console=console
        ) as progress:

            task = progress.add_task("Running sweeps...", total=len(specs))

            for path in specs:
                progress.update(task, description=f"Sweeping {path.stem}...")
                subdir = "variants" if path.parent.name == "variants" else ""
                csv_path = output_dir / subdir / f"{path.stem}.csv"

                try:
                    spec = load_sweep_spec(path, self.default_options, self.settings.sweeps["randomized_runs"])
                    result = run_sweep(spec, workers=workers)
                    write_csv(result, csv_path)
                    write_metadata(result, sidecar_path(csv_path, "meta.yaml"))
                    if raw and result.raw_rows:
                        write_raw_csv(result, sidecar_path(csv_path, "raw.csv"))
                    results["completed"] += 1
                except (ValueError, OSError) as e:
                    results["failed"] += 1
                    console.print(f"[red]✗ {path.name}: {e}[/red]")
                    self.logger.error(f"Sweep {path} failed: {e}")
                    progress.advance(task)
                    continue

                try:
                    render_svg(result, csv_path.with_suffix(".svg"))
                    results["charts"] += 1
                except ChartError as e:
                    console.print(f"[yellow]⚠ {path.name}: no chart ({e})[/yellow]")

                console.print(f"[green]✓ {path.stem}: {len(result.rows)} points[/green]")
                progress.advance(task)

        results_table = Table()
        results_table.add_column("Result", style="cyan")
        results_table.add_column("Count", style="green")
        results_table.add_row("Sweeps completed", str(results["completed"]))
        results_table.add_row("Charts written", str(results["charts"]))
        results_table.add_row("Failed", str(results["failed"]))
        console.print(results_table)
        return results


def main():
    """Reproduce the shipped figures."""
    parser = argparse.ArgumentParser(
        description="Reproduce the rate-allocation figures from the shipped sweep specs",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Commands:
  python3 reproduce_figures.py list                 # Show the sweep specs
  python3 reproduce_figures.py run                  # Run sweeps/*.yaml into results/
  python3 reproduce_figures.py run --all --raw      # Include variants and per-run rows
        """
    )

    parser.add_argument('action', choices=['list', 'run'], help='Action to perform')
    parser.add_argument('--all', action='store_true', help='Include sweeps/variants/')
    parser.add_argument('--raw', action='store_true', help='Write per-run rows for randomized sweeps')
    parser.add_argument('--output', default=str(PROJECT_ROOT / "results"), help='Output directory')
    parser.add_argument('--workers', type=int, default=None, help='Sweep points evaluated concurrently')
    parser.add_argument('--config', default=None, help='Settings file')

    args = parser.parse_args()

    try:
        console.print(Panel.fit(
            "[bold blue]📈 Figure Reproduction[/bold blue]\n"
            f"Action: [yellow]{args.action}[/yellow]\n"
            f"Specs: [green]{'sweeps/ + variants/' if args.all else 'sweeps/'}[/green]",
            title="Entanglement Rate Allocation"
        ))

        reproduction = FigureReproduction(args.config)

        if args.action == 'list':
            reproduction.list_specs(args.all)
            return 0

        workers = args.workers or reproduction.settings.sweeps["workers"]
        results = reproduction.run(Path(args.output), args.all, args.raw, workers)
        return 0 if results["failed"] == 0 else 1

    except KeyboardInterrupt:
        console.print("\n[yellow]⚠️ Operation cancelled[/yellow]")
        return 1
    except Exception as e:
        console.print(f"[red]💥 Error: {e}[/red]")
        return 1


if __name__ == "__main__":
    sys.exit(main())
