"""Console tables for fit summaries and spectral diagnostics."""

from typing import Optional

from rich.console import Console
from rich.table import Table, box

from .lspia import CONVERGED, MAX_ITERS, STAGNATED
from .oracle import SpectralReport


def _get_termination_color(termination: str) -> str:
    """Get color for a termination reason."""
    colors = {
        CONVERGED: "green",
        MAX_ITERS: "yellow",
        STAGNATED: "magenta",
    }
    return colors.get(termination, "white")


def _flag(ok: bool) -> str:
    return "[green]✓ pass[/green]" if ok else "[red]✗ fail[/red]"


def _new_table(title: str) -> Table:
    table = Table(
        show_header=True,
        header_style="bold magenta",
        box=box.ROUNDED,
        title=title,
        title_style="bold yellow"
    )
    table.add_column("Quantity", style="cyan", no_wrap=True)
    table.add_column("Value", justify="right")
    return table


def fit_summary_table(summary: dict) -> Table:
    """
    Build the table shown after a fit.

    Args:
        summary: Summary dictionary as written to the summary JSON file
    """
    problem = summary.get('problem', {})
    table = _new_table(f"lspiafit fit ({summary['variant']})")

    color = _get_termination_color(summary['termination'])
    table.add_row("Termination", f"[{color}]{summary['termination'].upper()}[/{color}]")
    table.add_row("Iterations", str(summary['iterations_used']))
    table.add_row("Final residual", f"{summary['final_residual']:.6e}")
    table.add_row("Final update", f"{summary['final_delta']:.6e}")
    table.add_row("RMS error", f"{summary['rms_error']:.6e}")
    table.add_row("Max error", f"{summary['max_error']:.6e}")
    table.add_row("Normal-equation residual", f"{summary['normal_residual']:.6e}")
    if summary.get('alpha') is not None:
        table.add_row("Alpha", f"{summary['alpha']:.6g}")
    table.add_row("Wall time", f"{summary['wall_time']:.3f} s")
    if problem:
        table.add_row("Control points", f"{problem['size']} {tuple(problem['controls'])}")
        table.add_row("Data points", str(problem['samples']))
        if problem.get('frozen'):
            table.add_row("Frozen controls", f"[yellow]{len(problem['frozen'])}[/yellow]")
    return table


def spectral_table(report: SpectralReport, projector_error: Optional[str] = None) -> Table:
    """
    Build the table shown after diagnostics.

    Args:
        report: Spectral report of the assembled system
        projector_error: Message of a failed projector check, None if it passed
    """
    table = _new_table("lspiafit diagnose")
    table.add_row("Order of A^T A", str(report.order))
    table.add_row("Rank of A^T A", str(report.rank))
    table.add_row("Rank deficiency n0", str(report.n0))
    table.add_row("Zero eigenvalues", str(report.zero_count))
    table.add_row("Eigenvalue range", f"[{report.eig_min:.3e}, {report.eig_max:.6f}]")
    table.add_row("Max imaginary part", f"{report.max_imag:.3e}")
    table.add_row("Real, in [0, 1]", _flag(report.flags['real'] and report.flags['unit_interval']))
    table.add_row("Zero count = n0", _flag(report.flags['zero_count']))
    table.add_row("Rank preserved by Lambda", _flag(report.flags['rank_match']))
    worst = max(report.penrose.values()) if report.penrose else 0.0
    table.add_row("Penrose residual (max)", f"{worst:.3e}")
    table.add_row("Projector check", _flag(projector_error is None))
    if projector_error is not None:
        table.add_row("", f"[dim]{projector_error}[/dim]")
    return table


def show(table: Table, console: Optional[Console] = None) -> None:
    """Print a table; output goes to stdout, logs stay on stderr."""
    (console or Console()).print(table)
