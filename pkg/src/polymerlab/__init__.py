"""Long-range directed polymer simulation toolkit."""

__version__ = "0.1.0"
