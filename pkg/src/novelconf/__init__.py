"""Calibration metrics and methods for familiar vs. novel inputs."""
__version__ = "0.1.0"
