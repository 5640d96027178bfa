"""Shared CLI types and helpers."""

from __future__ import annotations

import argparse
import json
import logging
import os
from dataclasses import dataclass
from typing import Any, Optional

from rich.console import Console
from rich.logging import RichHandler

from app.config import load_config, parse_overrides


@dataclass
class CommandContext:
    """Global options passed to command handlers."""

    verbose: int = 0
    workspace: str = None
    no_color: bool = False
    console: Console = None


def setup_logging(verbose: int, no_color: bool = False) -> None:
    level = logging.WARNING if verbose <= 0 else logging.INFO if verbose == 1 else logging.DEBUG
    console = Console(stderr=True, color_system=None if no_color else "auto")
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=verbose >= 2)],
        force=True,
    )


def add_run_arguments(parser: argparse.ArgumentParser, *flags: str) -> argparse.ArgumentParser:
    """Add the shared per-command flags named in ``flags``."""
    parser.add_argument("-c", "--config", help="YAML config file")
    parser.add_argument(
        "--set",
        action="append",
        metavar="KEY=VALUE",
        dest="overrides",
        help="Override a config key (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="Master seed")
    if "trials" in flags:
        parser.add_argument("--trials", type=int, help="Monte Carlo trials")
    if "out" in flags:
        parser.add_argument("-o", "--out", help="Output path (relative paths land in the workspace)")
    if "budget" in flags:
        parser.add_argument("--budget", type=int, help="Refuse to run above this many labelings")
    if "threads" in flags:
        parser.add_argument("--threads", type=int, help="Worker processes")
    return parser


def command_config(ns: argparse.Namespace, schema_name: str) -> dict:
    """Config file, ``--set`` overrides and explicit flags, validated; flags win."""
    overrides = parse_overrides(getattr(ns, "overrides", None))
    for key in ("seed", "trials", "budget", "threads"):
        value = getattr(ns, key, None)
        if value is not None:
            overrides[key] = value
    return load_config(getattr(ns, "config", None), schema_name, overrides)


def resolve_out(ctx: CommandContext, path: Optional[str]) -> Optional[str]:
    if path is None:
        return None
    if os.path.isabs(path) or not ctx.workspace:
        return path
    return os.path.join(ctx.workspace, path)


def dump_json(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def emit_json(ctx: CommandContext, data: Any, out: Optional[str]) -> Optional[str]:
    """Write ``data`` as JSON to ``out`` (under the workspace) or to stdout."""
    target = resolve_out(ctx, out)
    text = dump_json(data)
    if target is None:
        print(text, end="")
        return None
    os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
    with open(target, "w") as f:
        f.write(text)
    return target


__all__ = [
    "CommandContext",
    "setup_logging",
    "add_run_arguments",
    "command_config",
    "resolve_out",
    "dump_json",
    "emit_json",
]
