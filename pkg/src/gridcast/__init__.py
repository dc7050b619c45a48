"""Hierarchical Byzantine-resilient broadcast on fractal grids."""

from .grid import GridSpec
from .base_protocol import CorrectnessMap, ReliableSet, rel_base
from .reliable import rel_k, verify_reliable
from .sim import Schedule, run

__version__ = "0.1.0"
