"""bandgen: feasibility-guided adversarial traffic scenario generation on a
deterministic 2D kinematic micro-simulator."""

__version__ = "0.1.0"
