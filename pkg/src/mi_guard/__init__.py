"""MI Guard - membership inference auditing toolkit."""

__version__ = "0.1.0"
