"""Tight-frame iterative segmentation of tubular structures in 2-D and 3-D."""

from tfseg.errors import NoCandidatesError, TfsegError
from tfseg.segment import SegmentParams, IterationStats, segment, smooth_binary
from tfseg.transform import FrameBackend, ThresholdVector, analyze, denoise, synthesize

__version__ = "0.1.0"

__all__ = [
    "FrameBackend",
    "IterationStats",
    "NoCandidatesError",
    "SegmentParams",
    "TfsegError",
    "ThresholdVector",
    "analyze",
    "denoise",
    "segment",
    "smooth_binary",
    "synthesize",
]
