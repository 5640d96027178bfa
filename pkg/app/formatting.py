"""Rich-markup rendering of result dictionaries for the console."""

from __future__ import annotations

import math
from typing import Any, Optional

from rich.markup import escape

VERDICT_STYLE = {"pass": "green", "fail": "red", "inconclusive": "yellow"}


def _scalar(value: Any) -> str:
    if isinstance(value, float):
        if math.isnan(value):
            return "[dim]nan[/dim]"
        return f"[green]{value:.6g}[/green]"
    if value is None:
        return "[dim]-[/dim]"
    return f"[green]{escape(str(value))}[/green]"


def format_result(obj: Any, indent: int = 0, max_items: Optional[int] = 12) -> str:
    """Return a rich-markup representation of a nested result object.

    Long lists of scalars are shown on one line and cut at ``max_items``.
    """
    pad = "  " * indent
    if isinstance(obj, dict):
        lines = []
        for k, v in obj.items():
            if isinstance(v, (dict, list)) and v and any(isinstance(i, (dict, list)) for i in _items(v)):
                lines.append(f"{pad}[bold blue]{escape(str(k))}[/bold blue]:")
                lines.append(format_result(v, indent + 1, max_items))
            elif isinstance(v, list):
                lines.append(f"{pad}[blue]{escape(str(k))}[/blue]: {_inline(v, max_items)}")
            else:
                lines.append(f"{pad}[blue]{escape(str(k))}[/blue]: {_scalar(v)}")
        return "\n".join(lines) if lines else f"{pad}[dim]<empty>[/dim]"
    if isinstance(obj, list):
        if not obj:
            return f"{pad}[dim]<empty list>[/dim]"
        lines = []
        for item in obj:
            if isinstance(item, (dict, list)):
                lines.append(f"{pad}-")
                lines.append(format_result(item, indent + 1, max_items))
            else:
                lines.append(f"{pad}- {_scalar(item)}")
        return "\n".join(lines)
    return f"{pad}{_scalar(obj)}"


def _items(v):
    return v.values() if isinstance(v, dict) else v


def _inline(values: list, max_items: Optional[int]) -> str:
    shown = values if max_items is None else values[:max_items]
    text = ", ".join(_scalar(v) for v in shown)
    if len(shown) < len(values):
        text += f" [dim]... ({len(values)} items)[/dim]"
    return f"\\[{text}]"


def verdict_tag(verdict: str) -> str:
    style = VERDICT_STYLE.get(verdict, "white")
    return f"[{style}][{verdict.upper()}][/{style}]"


def ok_fail(ok: bool) -> str:
    return "[green][OK][/green]" if ok else "[red][FAIL][/red]"


__all__ = ["format_result", "verdict_tag", "ok_fail"]
