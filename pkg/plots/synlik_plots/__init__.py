"""Read-only figure rendering for the synthetic-likelihood CSV artifacts."""

from .render import SchemaError, build_figure, main

__all__ = ["SchemaError", "build_figure", "main"]
