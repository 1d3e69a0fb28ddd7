"""Coordinated hybrid beamforming for multi-cell mmWave networks."""

__version__ = "0.1.0"
