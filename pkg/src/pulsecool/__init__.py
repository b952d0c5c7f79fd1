"""Pulsed sideband-cooling laboratory for a trapped two-level system.

The package simulates, optimizes and stress-tests pulse sequences that
cool the motional mode of a trapped ion (or any harmonically confined
two-level system) faster than the trap period, using only carrier-type
spin-motion couplings and free evolution.  See ``core`` for the numeric
conventions shared by all modules.
"""

__version__ = "0.1.0"

from . import chain, cooling, core, noise, optimize, pulses  # noqa: F401
from .core import SystemParams, make_params  # noqa: F401
