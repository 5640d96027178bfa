"""App package root.

Library modules for the mixture model, templates, Hermite polynomials, moments
and the estimator; ``app.commands`` holds the CLI commands.
"""

from __future__ import annotations

__all__ = ["commands"]
