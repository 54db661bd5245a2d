"""Command-line entry point."""

from pean.cli.main import build_parser, main

__all__ = ["build_parser", "main"]
