"""Task-driven co-design of mobile robot perception, planning, body and compute."""

__version__ = "0.1.0"
