"""Synthetic traffic-sign recognition data: defects, rendering, camera effects, analysis."""

__version__ = "1.0.0"
