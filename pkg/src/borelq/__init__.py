"""Borel-quantized kinematics and nonlinear Schroedinger dynamics on flat periodic manifolds."""

__version__ = "0.1.0"
