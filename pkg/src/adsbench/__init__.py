"""Desk-scale testbed for reinforcement-learning based online testing of a driving system."""

__version__ = "0.1.0"
