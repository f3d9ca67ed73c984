"""Render figures from pilotwave output bundles.

This package never imports the simulator; it consumes bundles purely
through their on-disk formats (binary field dumps, CSV tables, JSON
reports), so it can plot results produced anywhere.
"""

from .bundle import (BundleFormatError, Channel, Field, MissingArtifact,
                     field_steps, read_channels, read_endpoints, read_field,
                     read_trajectory, resolve_snapshot)
from .render import KINDS, FigureSpec, RenderInfo, render

__all__ = [
    "BundleFormatError",
    "Channel",
    "Field",
    "FigureSpec",
    "KINDS",
    "MissingArtifact",
    "RenderInfo",
    "field_steps",
    "read_channels",
    "read_endpoints",
    "read_field",
    "read_trajectory",
    "render",
    "resolve_snapshot",
]
