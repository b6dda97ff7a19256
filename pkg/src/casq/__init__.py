"""casq: batch query jobs, personal databases, shared scans, federation."""

__version__ = "0.1.0"
