"""Batch figure rendering for hotspot-sim metric tables."""

__version__ = "0.1.0"

from .render import FIGURE_KINDS, RENDERERS, SchemaError, render  # noqa: F401
