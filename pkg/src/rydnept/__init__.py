"""Mean-field Rydberg bistability simulator with a critical-point metrology chain."""

__version__ = "0.1.0"
