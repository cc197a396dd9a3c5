"""Pupil detection and pupillometry toolkit."""

__version__ = "0.1.0"
