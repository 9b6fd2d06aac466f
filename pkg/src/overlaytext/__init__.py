"""Overlay text band detection, tracking and extraction for news video frames."""

__version__ = "0.1.0"
