"""Large-deviation laboratory for quantum and classical lattice spin systems."""

__version__ = "0.1.0"
