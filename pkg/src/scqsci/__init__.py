"""Size-consistent quantum-selected configuration interaction engine."""

__version__ = "0.1.0"
