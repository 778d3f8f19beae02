"""THz ultra-massive MIMO superposition-coding and NOMA link-level simulator."""

__version__ = "0.1.0"

from .constellation import Constellation, build_qam
from .detectors import ChannelFactors, DetectorKind, Stream, StreamPlan, detect_superposed
from .numerics import qr_decompose, wr_decompose

__all__ = [
    "ChannelFactors", "Constellation", "DetectorKind", "Stream", "StreamPlan", "build_qam",
    "detect_superposed", "qr_decompose", "wr_decompose", "__version__",
]
