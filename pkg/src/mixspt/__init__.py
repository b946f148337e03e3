"""Simulation and decoding toolkit for decohered cluster-state SPT phases."""

__version__ = "0.1.0"
