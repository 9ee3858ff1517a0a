"""Monotone equilibria, stability and instability of an energy balance model with a discontinuous co-albedo."""

__version__ = "0.1.0"
