"""
Versioned text format for surrogate chains.

    annealmap-surrogate v1
    dimension 2
    depth 2
    map 1
    component 1 order 4 nodes 12 coefficients 0.0 0.125 ...
    component 2 order 4 nodes 12 coefficients ...
    map 2
    ...

Maps are listed innermost first. Coefficients use shortest round-trip decimals,
so a reloaded surrogate evaluates bit-identically.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from annealmap import settings
from annealmap.exceptions import ContractViolationError

from ..models import Density, MapComponent, MultiIndexSet, Surrogate, TriangularMap, UniformPrior

HEADER = f"annealmap-surrogate v{settings.SURROGATE_FORMAT_VERSION}"


class SurrogateFormatError(ContractViolationError):
    """Raised when a serialized surrogate cannot be parsed."""
    pass


def dumps_surrogate(density: Density) -> str:
    maps = density.chain() if isinstance(density, Surrogate) else []
    lines = [HEADER, f"dimension {density.dimension}", f"depth {len(maps)}"]
    for m, transport_map in enumerate(maps, start=1):
        lines.append(f"map {m}")
        for k, component in enumerate(transport_map.components, start=1):
            coefficients = " ".join(repr(float(c)) for c in component.coefficients)
            lines.append(
                f"component {k} order {component.order} nodes {component.integration_nodes} "
                f"coefficients {coefficients}".rstrip()
            )
    return "\n".join(lines) + "\n"


def _expect(tokens: list[str], keyword: str, line_no: int) -> int:
    if len(tokens) < 2 or tokens[0] != keyword:
        raise SurrogateFormatError(f"line {line_no}: expected '{keyword} <int>', got {' '.join(tokens)!r}")
    try:
        return int(tokens[1])
    except ValueError as exc:
        raise SurrogateFormatError(f"line {line_no}: {keyword} must be an integer") from exc


def _parse_component(tokens: list[str], *, dimension: int, line_no: int) -> MapComponent:
    if len(tokens) < 7 or tokens[2] != "order" or tokens[4] != "nodes" or tokens[6] != "coefficients":
        raise SurrogateFormatError(f"line {line_no}: malformed component line")
    try:
        order = int(tokens[3])
        nodes = int(tokens[5])
        coefficients = np.array([float(value) for value in tokens[7:]])
    except ValueError as exc:
        raise SurrogateFormatError(f"line {line_no}: {exc}") from exc
    return MapComponent(
        index_set=MultiIndexSet(dimension=dimension, order=order),
        coefficients=coefficients,
        integration_nodes=nodes,
    )


def loads_surrogate(text: str) -> Density:
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or lines[0] != HEADER:
        raise SurrogateFormatError(f"missing header {HEADER!r}")
    dimension = _expect(lines[1].split(), "dimension", 2)
    depth = _expect(lines[2].split(), "depth", 3)

    expected = 3 + depth * (dimension + 1)
    if len(lines) != expected:
        raise SurrogateFormatError(f"expected {expected} lines for depth {depth}, found {len(lines)}")

    density: Density = UniformPrior(dimension)
    cursor = 3
    for m in range(1, depth + 1):
        if _expect(lines[cursor].split(), "map", cursor + 1) != m:
            raise SurrogateFormatError(f"line {cursor + 1}: maps must be numbered in order")
        cursor += 1
        components = []
        for k in range(1, dimension + 1):
            tokens = lines[cursor].split()
            if _expect(tokens, "component", cursor + 1) != k:
                raise SurrogateFormatError(f"line {cursor + 1}: components must be numbered in order")
            components.append(_parse_component(tokens, dimension=k, line_no=cursor + 1))
            cursor += 1
        density = Surrogate(map=TriangularMap(components=tuple(components)), reference=density)
    return density


def dump_surrogate(density: Density, path: Path) -> None:
    Path(path).write_text(dumps_surrogate(density))


def load_surrogate(path: Path) -> Density:
    return loads_surrogate(Path(path).read_text())
