#!/usr/bin/env python3
"""
Feasibility Threshold Verification

Recomputes the feasibility boundaries of the shipped scenarios by bisection
and compares them with their closed-form values.
"""

import sys
from pathlib import Path

# Add src directory to path for imports
current_file = Path(__file__)
project_root = current_file.parent.parent
src_path = project_root / "src"
sys.path.append(str(src_path))

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from solver import max_common_rate_min, max_feasible_tau
from sweeps import load_scenario

console = Console()

SCENARIOS = project_root / "scenarios"

# (description, scenario file, quantity, expected value, absolute tolerance)
CHECKS = [
    ("common minimum rate, identical pair", "symmetric_pair.yaml", "rate", 35 / (2 * 3e-9), 0.0002 * 35 / (2 * 3e-9)),
    ("window length, minima 2.6e9 / 2.8e9", "unequal_minima.yaml", "tau", 35 / 5.4e9, 1e-12),
    ("window length, minima 2.4e9 / 2.4e9", "equal_minima.yaml", "tau", 35 / 4.8e9, 1e-12),
]


def run_checks() -> bool:
    table = Table(title="Feasibility Thresholds")
    table.add_column("Check", style="cyan")
    table.add_column("Expected", style="yellow")
    table.add_column("Computed", style="green")
    table.add_column("Status")

    all_passed = True
    for description, filename, quantity, expected, tolerance in CHECKS:
        scenario = load_scenario(SCENARIOS / filename)
        if quantity == "rate":
            computed = max_common_rate_min(scenario)
            shown = (f"{expected:.6g} ebit/s", "none" if computed is None else f"{computed:.6g} ebit/s")
        else:
            computed = max_feasible_tau(scenario)
            shown = (f"{expected * 1e9:.5f} ns", "none" if computed is None else f"{computed * 1e9:.5f} ns")

        passed = computed is not None and abs(computed - expected) <= tolerance
        all_passed &= passed
        table.add_row(description, *shown, "[green]✓ PASS[/green]" if passed else "[red]✗ FAIL[/red]")

    console.print(table)
    return all_passed


def main():
    console.print(Panel.fit(
        "[bold blue]Feasibility Threshold Verification[/bold blue]\n"
        "[dim]Bisection on the minimum-rate memory demand[/dim]",
        border_style="blue"
    ))

    try:
        if run_checks():
            console.print("\n[green]🎉 All thresholds match their closed-form values[/green]")
            return 0
        console.print("\n[red]✗ Threshold mismatch[/red]")
        return 1
    except (ValueError, OSError) as e:
        console.print(f"[red]💥 Error: {e}[/red]")
        return 1


if __name__ == "__main__":
    sys.exit(main())
