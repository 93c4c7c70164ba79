"""Rich terminal UI components for the hpdm CLI."""

import logging
from datetime import datetime, timedelta
from typing import Optional, Sequence, Union

from rich.box import DOUBLE, HEAVY, ROUNDED
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

console = Console()


def setup_logging(verbose: bool = False) -> None:
    """Route library loggers through rich."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, rich_tracebacks=True, show_path=verbose)],
        force=True,
    )


class HPDMUI:
    """Rich UI manager for the hpdm CLI."""

    def __init__(self):
        self.console = console
        self.start_time: Optional[datetime] = None
        self.target_steps = 0

    def print_banner(self, subtitle: str = "Hierarchical Patch Diffusion for Video") -> None:
        """Print the HPDM banner."""
        banner = f"""
    ╦ ╦╔═╗╔╦╗╔╦╗
    ╠═╣╠═╝ ║║║║║
    ╩ ╩╩  ═╩╝╩ ╩
    {subtitle}
        """
        self.console.print(Panel(
            Text(banner, style="bold cyan", justify="center"),
            box=DOUBLE,
            border_style="cyan",
            padding=(0, 2)
        ))
        self.console.print()

    def print_config(self, rows: Sequence[tuple[str, str]], title: str = "Configuration") -> None:
        """Print a settings table inside a panel."""
        table = Table(box=ROUNDED, border_style="dim")
        table.add_column("Setting", style="cyan")
        table.add_column("Value", style="white")
        for key, value in rows:
            table.add_row(key, value)
        self.console.print(Panel(table, title=f"[bold]{title}[/bold]", border_style="blue"))
        self.console.print()

    def print_table(
        self,
        title: str,
        columns: Sequence[str],
        rows: Sequence[Sequence[object]],
    ) -> None:
        """Print a titled table of rows."""
        table = Table(box=ROUNDED, border_style="dim", title=f"[bold]{title}[/bold]")
        for i, column in enumerate(columns):
            table.add_column(column, style="cyan" if i == 0 else "white")
        for row in rows:
            table.add_row(*(str(v) for v in row))
        self.console.print(table)
        self.console.print()

    def start_session(self, target_steps: int) -> None:
        """Mark the start of a training session."""
        self.start_time = datetime.now()
        self.target_steps = target_steps

    def print_step(self, status_line: str) -> None:
        """Print one training status line."""
        self.console.print(f"  [cyan]•[/cyan] {status_line}")

    def print_checkpoint(self, step: int, path: str) -> None:
        """Print checkpoint saved message."""
        self.console.print(f"  [green]✓[/green] checkpoint at step {step}: {path}", style="dim")

    def print_training_complete(self, steps: int, elapsed: Union[datetime, timedelta]) -> None:
        """Print training finished message."""
        total_duration = datetime.now() - elapsed if isinstance(elapsed, datetime) else elapsed
        self.console.print()
        panel = Panel(
            Text.assemble(
                ("Training finished\n\n", "bold green"),
                ("Steps: ", "dim"),
                (str(steps), "cyan"),
                ("\nTotal time: ", "dim"),
                (self._format_duration(total_duration), "cyan"),
            ),
            title="[bold green]✓ Success[/bold green]",
            border_style="green",
            box=HEAVY,
            padding=(1, 2)
        )
        self.console.print(panel)

    def print_summary(self, title: str, rows: Sequence[tuple[str, str]]) -> None:
        """Print key/value results in a panel."""
        text = Text()
        for i, (key, value) in enumerate(rows):
            text.append(f"{key}: ", style="dim")
            text.append(value, style="cyan")
            if i < len(rows) - 1:
                text.append("\n")
        self.console.print(Panel(
            text,
            title=f"[bold green]{title}[/bold green]",
            border_style="green",
            box=HEAVY,
            padding=(1, 2)
        ))

    def print_error(self, message: str, exception: Optional[Exception] = None) -> None:
        """Print error message."""
        self.console.print()
        error_text = Text()
        error_text.append(f"{message}\n", style="bold red")
        if exception:
            error_text.append(f"\n{type(exception).__name__}: {exception}", style="dim red")
        panel = Panel(
            error_text,
            title="[bold red]✗ Error[/bold red]",
            border_style="red",
            padding=(1, 2)
        )
        self.console.print(panel)

    def print_interrupted(self, step: int) -> None:
        """Print interrupted message."""
        self.console.print()
        self.console.print(
            Panel(
                f"[yellow]Training interrupted after step {step}; "
                f"run [cyan]hpdm train --resume[/cyan] to continue[/yellow]",
                border_style="yellow",
                padding=(0, 2)
            )
        )

    def print_status(self, status: str) -> None:
        """Print a status update."""
        self.console.print(f"  [dim]→ {status}[/dim]")

    def _format_duration(self, delta: timedelta) -> str:
        """Format a timedelta as a human-readable string."""
        total_seconds = int(delta.total_seconds())
        hours, remainder = divmod(total_seconds, 3600)
        minutes, seconds = divmod(remainder, 60)

        if hours > 0:
            return f"{hours}h {minutes}m {seconds}s"
        elif minutes > 0:
            return f"{minutes}m {seconds}s"
        else:
            return f"{seconds}s"


# Global UI instance
ui = HPDMUI()
