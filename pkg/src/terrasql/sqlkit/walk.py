"""Generic AST traversal."""

from __future__ import annotations

import dataclasses
from typing import Iterator

from .nodes import Node


def walk(node: Node | None) -> Iterator[Node]:
    """Yield node and every Node reachable from it, depth-first, pre-order."""
    if node is None:
        return
    yield node
    for f in dataclasses.fields(node):
        value = getattr(node, f.name)
        yield from _walk_value(value)


def _walk_value(value: object) -> Iterator[Node]:
    if isinstance(value, Node):
        yield from walk(value)
    elif isinstance(value, (list, tuple)):
        for item in value:
            yield from _walk_value(item)
