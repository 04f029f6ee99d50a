"""DAG-based atomic broadcast with leader vertices and one-step commit."""

from .dag import Dag, Vertex, VertexRef, decode_vertex
from .node import Effects, Event, SailfishNode, TimeoutMessage, Transport

__all__ = [
    "Dag",
    "Effects",
    "Event",
    "SailfishNode",
    "TimeoutMessage",
    "Transport",
    "Vertex",
    "VertexRef",
    "decode_vertex",
]
