"""Contingency motion planner with online-learned reachable-set barriers."""

from reachplan.ellipsoid import AxisAlignedEllipse, Ellipsoid

__all__ = ["AxisAlignedEllipse", "Ellipsoid"]
__version__ = "0.1.0"
