"""Lipid-bilayer memcapacitor simulator and reservoir-computing benchmarks."""

__version__ = "0.1.0"
