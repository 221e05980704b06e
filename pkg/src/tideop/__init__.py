"""Learn time-derivative operators for PDEs; integrate them with classical steppers."""

__version__ = "0.1.0"
