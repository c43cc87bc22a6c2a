"""Gaze-redirected Gaussian-splat head rendering with rigged eyeballs."""

__version__ = "0.1.0"
