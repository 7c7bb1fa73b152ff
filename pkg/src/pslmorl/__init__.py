"""Pareto set learning for multi-objective RL with a preference-conditioned hypernetwork."""

__version__ = "0.1.0"
