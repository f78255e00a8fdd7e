"""Multi-dimensional modulo-hysteresis sampling and reconstruction."""
