"""Tube, dynamic tube and adaptive dynamic tube MPC for an uncertain pendulum."""

__version__ = "0.1.0"
