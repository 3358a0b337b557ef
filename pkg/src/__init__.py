"""
Sequential multiple testing toolkit: procedures, calibration, simulation and theory for K data streams.
"""

__version__ = "1.0.0"
