"""Figure rendering for sil sweep outputs; no statistics are recomputed
here — every curve and fitted line comes from the CSV contracts."""

__version__ = "0.1.0"

from .render import FigureSpec, RenderError, render  # noqa: F401
