"""OTFS link-level simulator: delay-Doppler pilot schemes and receivers.

Compares a full-guard embedded impulse pilot, a reduced-guard variant with
iterative refinement, and a split two-impulse pilot with joint channel
estimation and detection, over EVA time-varying channels.
"""

__version__ = "0.1.0"

from .detection import DetectorConfig
from .frame import FrameConfig, Scheme
from .simulate import SweepSpec, run_sweep, simulate_frame

__all__ = [
    "DetectorConfig",
    "FrameConfig",
    "Scheme",
    "SweepSpec",
    "run_sweep",
    "simulate_frame",
    "__version__",
]
