"""Joint laws matching a reference law in marginals and in the law of the sum."""

__version__ = "0.1.0"
