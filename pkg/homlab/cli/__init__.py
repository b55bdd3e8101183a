"""Command-line entry point"""
from typing import List, Optional

import click

from homlab.cli.commands import cli
from homlab.cli.output import error_line


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code (0 ok, 1 invalid input, 2 numerical failure)."""
    try:
        rv = cli.main(args=argv, prog_name='homlab', standalone_mode=False)
    except click.ClickException as e:
        # only group-level option errors get here; command errors are handled by the group
        click.echo(error_line(e), err=True)
        return 1
    except click.Abort:
        click.echo(error_line(KeyboardInterrupt('aborted')), err=True)
        return 1
    return rv if isinstance(rv, int) else 0


__all__ = ['cli', 'main']
