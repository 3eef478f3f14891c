"""Structured bilinear quadrilateral meshes on rectangles.

Nodes are numbered row-major (y outer, x inner) and elements list their four
nodes counterclockwise starting from the lower-left corner.  Coordinates are
generated from integer lattice indices so that meshes cut from the same global
lattice share bit-identical node coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

SIDES = ("bottom", "right", "top", "left")

OUTWARD_NORMALS = {
    "bottom": (0.0, -1.0),
    "right": (1.0, 0.0),
    "top": (0.0, 1.0),
    "left": (-1.0, 0.0),
}

# local (element) node pair forming each side, ordered by increasing coordinate
SIDE_LOCAL_NODES = {
    "bottom": (0, 1),
    "right": (1, 2),
    "top": (3, 2),
    "left": (0, 3),
}


@dataclass(frozen=True, eq=False)
class Mesh:
    """Uniform ``nx`` x ``ny`` grid of bilinear elements.

    ``lattice_offset`` is the position of the lower-left node in the global
    lattice; it is (0, 0) for a standalone mesh.
    """

    nx: int
    ny: int
    origin: tuple[float, float]
    spacing: tuple[float, float]
    lattice_offset: tuple[int, int] = (0, 0)
    nodes: np.ndarray = field(init=False, repr=False)
    elements: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        i0, j0 = self.lattice_offset
        gi = i0 + np.arange(self.nx + 1)
        gj = j0 + np.arange(self.ny + 1)
        x = self.origin[0] + gi * self.spacing[0]
        y = self.origin[1] + gj * self.spacing[1]
        X, Y = np.meshgrid(x, y)  # row-major: y outer
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        ii, jj = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        ll = (jj * (self.nx + 1) + ii).ravel()
        elements = np.column_stack([ll, ll + 1, ll + self.nx + 2, ll + self.nx + 1])
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "elements", elements.astype(np.int64))

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return self.spacing[0]

    @property
    def hy(self) -> float:
        return self.spacing[1]

    @property
    def lower(self) -> tuple[float, float]:
        return tuple(self.nodes[0])

    @property
    def upper(self) -> tuple[float, float]:
        return tuple(self.nodes[-1])

    @property
    def area(self) -> float:
        (x0, y0), (x1, y1) = self.lower, self.upper
        return (x1 - x0) * (y1 - y0)

    def node_id(self, i: int, j: int) -> int:
        """Index of the node in column ``i`` and row ``j``."""
        return j * (self.nx + 1) + i

    @property
    def node_index(self) -> dict[tuple[int, int], int]:
        """Map from local lattice coordinates ``(i, j)`` to node index."""
        return {(i, j): self.node_id(i, j)
                for j in range(self.ny + 1) for i in range(self.nx + 1)}

    def locate(self, x: float, y: float, tol: float = 1e-9) -> int:
        """Index of the node at physical point ``(x, y)``; KeyError if none."""
        i = (x - self.nodes[0, 0]) / self.hx
        j = (y - self.nodes[0, 1]) / self.hy
        ri, rj = int(round(i)), int(round(j))
        if (abs(i - ri) > tol or abs(j - rj) > tol
                or not (0 <= ri <= self.nx and 0 <= rj <= self.ny)):
            raise KeyError(f"no mesh node at ({x}, {y})")
        return self.node_id(ri, rj)

    def nearest_node(self, x: float, y: float) -> int:
        i = int(np.clip(round((x - self.nodes[0, 0]) / self.hx), 0, self.nx))
        j = int(np.clip(round((y - self.nodes[0, 1]) / self.hy), 0, self.ny))
        return self.node_id(i, j)

    def contains(self, x: float, y: float) -> bool:
        (x0, y0), (x1, y1) = self.lower, self.upper
        return x0 <= x <= x1 and y0 <= y <= y1

    def side_nodes(self, side: str) -> np.ndarray:
        """Node indices along ``side`` in increasing coordinate order."""
        nx, ny = self.nx, self.ny
        if side == "bottom":
            return np.arange(nx + 1)
        if side == "top":
            return ny * (nx + 1) + np.arange(nx + 1)
        if side == "left":
            return np.arange(ny + 1) * (nx + 1)
        if side == "right":
            return np.arange(ny + 1) * (nx + 1) + nx
        raise ValueError(f"unknown side {side!r}")

    def side_elements(self, side: str) -> np.ndarray:
        """Element indices touching ``side`` in increasing coordinate order."""
        nx, ny = self.nx, self.ny
        if side == "bottom":
            return np.arange(nx)
        if side == "top":
            return (ny - 1) * nx + np.arange(nx)
        if side == "left":
            return np.arange(ny) * nx
        if side == "right":
            return np.arange(ny) * nx + nx - 1
        raise ValueError(f"unknown side {side!r}")

    def global_node_ids(self, global_nx: int) -> np.ndarray:
        """Indices of this mesh's nodes in a global lattice ``global_nx`` wide."""
        i0, j0 = self.lattice_offset
        ii, jj = np.meshgrid(i0 + np.arange(self.nx + 1), j0 + np.arange(self.ny + 1))
        return (jj * (global_nx + 1) + ii).ravel()


def build_mesh(nx: int, ny: int, rect) -> Mesh:
    """Uniform mesh of ``rect = (x0, y0, x1, y1)`` with ``nx`` x ``ny`` elements."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ConfigError(f"element counts must be positive integers, got ({nx}, {ny})")
    x0, y0, x1, y1 = map(float, rect)
    if not (x1 > x0 and y1 > y0) or not np.all(np.isfinite([x0, y0, x1, y1])):
        raise ConfigError(f"degenerate rectangle {rect}")
    return Mesh(int(nx), int(ny), (x0, y0), ((x1 - x0) / nx, (y1 - y0) / ny))
