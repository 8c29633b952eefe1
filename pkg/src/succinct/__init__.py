"""Succinct interest points: detectors, score network, pose pipeline and succinctness metrics."""

__version__ = "0.1.0"
