"""Secret-key based identification: rate regions, layered codes and exact analysis."""

__version__ = "0.1.0"
