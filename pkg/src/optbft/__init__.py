"""Optimistic reliable broadcast, dispersal and DAG consensus with a deterministic simulator."""

__version__ = "0.1.0"
