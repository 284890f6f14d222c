"""Dynamical critical percolation on crossing rectangles and balls."""

from .lattice import KINDS, BallGeometry, CrossingGeometry, GatedGraph, ball_geometry, crossing_geometry
from .simulate import *  # noqa: F401,F403
from .simulate import __all__ as _sim_all

__all__ = ["KINDS", "BallGeometry", "CrossingGeometry", "GatedGraph", "ball_geometry",
           "crossing_geometry", *_sim_all]
