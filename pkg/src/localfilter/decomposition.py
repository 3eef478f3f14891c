"""Non-overlapping rectangular decomposition and interface bookkeeping.

Subdomains are numbered from 0, row-major from the bottom-left corner with x
varying fastest.  All meshes are cut from one global node lattice, so nodes on
a shared side have bit-identical coordinates in both neighbours.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .flow import FlowField
from .mesh import OUTWARD_NORMALS, SIDES, Mesh

OPPOSITE = {"left": "right", "right": "left", "bottom": "top", "top": "bottom"}


@dataclass(frozen=True, eq=False)
class Subdomain:
    id: int
    grid_pos: tuple[int, int]
    lattice_rect: tuple[int, int, int, int]  # (i0, j0, i1, j1) in global lattice units
    mesh: Mesh
    interface_sides: dict  # side -> interface id
    neighbors: dict  # side -> neighbour subdomain id
    global_nodes: np.ndarray
    external_nodes: np.ndarray
    free_nodes: np.ndarray

    @property
    def rect(self) -> tuple[float, float, float, float]:
        (x0, y0), (x1, y1) = self.mesh.lower, self.mesh.upper
        return (x0, y0, x1, y1)

    @property
    def center(self) -> np.ndarray:
        x0, y0, x1, y1 = self.rect
        return np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)])

    @property
    def area(self) -> float:
        return self.mesh.area


@dataclass(frozen=True, eq=False)
class Interface:
    """Shared side between subdomains ``i < j``.

    ``side_i`` is the side of ``i`` that touches ``j``.  ``nodes_i`` and
    ``nodes_j`` are local node indices in increasing coordinate order, so
    ``nodes_i[k]`` and ``nodes_j[k]`` are the same physical node.
    """

    id: int
    i: int
    j: int
    side_i: str
    side_j: str
    nodes_i: np.ndarray
    nodes_j: np.ndarray
    coords: np.ndarray

    @property
    def n_shared(self) -> int:
        return len(self.nodes_i)

    def side_of(self, sub: int) -> str:
        return self.side_i if sub == self.i else self.side_j

    def nodes_of(self, sub: int) -> np.ndarray:
        if sub == self.i:
            return self.nodes_i
        if sub == self.j:
            return self.nodes_j
        raise KeyError(f"subdomain {sub} is not on interface {self.id}")

    def other(self, sub: int) -> int:
        return self.j if sub == self.i else self.i


@dataclass(frozen=True, eq=False)
class SubdomainTopology:
    grid_dims: tuple[int, int]
    elems_per_subdomain: tuple[int, int]
    global_mesh: Mesh
    subdomains: list = field(default_factory=list)
    interfaces: list = field(default_factory=list)

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)

    @property
    def global_n_nodes(self) -> int:
        return self.global_mesh.n_nodes

    def interface(self, iface_id: int) -> Interface:
        try:
            return self.interfaces[iface_id]
        except (IndexError, TypeError):
            raise KeyError(f"unknown interface id {iface_id!r}") from None

    def sweep_order(self, velocity) -> list[int]:
        """Subdomain ids sorted upwind-first along ``velocity`` (ties by id)."""
        v = np.asarray(velocity, dtype=float)
        key = [(float(s.center @ v), s.id) for s in self.subdomains]
        return [sid for _, sid in sorted(key)]

    def summary(self, flow: FlowField | None = None, t: float = 0.0) -> str:
        """Plain-text dump of rectangles, interfaces and flow directions."""
        lines = [f"grid {self.grid_dims[0]} x {self.grid_dims[1]} subdomains, "
                 f"{self.elems_per_subdomain[0]} x {self.elems_per_subdomain[1]} elements each",
                 f"global nodes {self.global_n_nodes}"]
        for s in self.subdomains:
            x0, y0, x1, y1 = s.rect
            nb = ", ".join(f"{side}->{s.neighbors[side]}" for side in SIDES if side in s.neighbors)
            lines.append(f"subdomain {s.id} pos {s.grid_pos} rect [{x0:g},{x1:g}]x[{y0:g},{y1:g}] "
                         f"nodes {s.mesh.n_nodes} neighbours {{{nb}}}")
        v = None if flow is None else flow.velocity_at(t)
        for f in self.interfaces:
            line = f"interface {f.id}: {f.i} ({f.side_i}) | {f.j} ({f.side_j}) shared {f.n_shared}"
            if v is not None:
                mn = float(np.dot(v, OUTWARD_NORMALS[f.side_i]))
                line += f"  flow {'i->j' if mn > 0 else 'j->i' if mn < 0 else 'tangential'}"
            lines.append(line)
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class BoundaryExchange:
    source: int
    target: int
    interface: int
    values: np.ndarray
    step: int = 0
    iteration: int = 0

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError(
                f"non-finite boundary data on interface {self.interface} at step {self.step}")


def partition(global_rect, sx: int, sy: int, elems_per_subdomain) -> SubdomainTopology:
    """Split ``global_rect`` into ``sx`` x ``sy`` equal subdomains with conforming meshes."""
    ex, ey = elems_per_subdomain
    for name, v in (("sx", sx), ("sy", sy), ("elements x", ex), ("elements y", ey)):
        if int(v) != v or v < 1:
            raise ConfigError(f"{name} must be a positive integer, got {v}")
    sx, sy, ex, ey = int(sx), int(sy), int(ex), int(ey)
    x0, y0, x1, y1 = map(float, global_rect)
    if not (x1 > x0 and y1 > y0):
        raise ConfigError(f"degenerate rectangle {global_rect}")
    gnx, gny = sx * ex, sy * ey
    spacing = ((x1 - x0) / gnx, (y1 - y0) / gny)
    gmesh = Mesh(gnx, gny, (x0, y0), spacing)

    subs = []
    iface_list = []
    pending = {}
    for iy in range(sy):
        for ix in range(sx):
            sid = iy * sx + ix
            mesh = Mesh(ex, ey, (x0, y0), spacing, lattice_offset=(ix * ex, iy * ey))
            nb = {}
            if ix > 0:
                nb["left"] = sid - 1
            if ix < sx - 1:
                nb["right"] = sid + 1
            if iy > 0:
                nb["bottom"] = sid - sx
            if iy < sy - 1:
                nb["top"] = sid + sx
            ext = set()
            for side in SIDES:
                if side not in nb:
                    ext.update(mesh.side_nodes(side).tolist())
            ext = np.array(sorted(ext), dtype=np.int64)
            free = np.setdiff1d(np.arange(mesh.n_nodes), ext)
            subs.append(dict(id=sid, grid_pos=(ix, iy), mesh=mesh, neighbors=nb,
                             lattice_rect=(ix * ex, iy * ey, (ix + 1) * ex, (iy + 1) * ey),
                             global_nodes=mesh.global_node_ids(gnx), external_nodes=ext,
                             free_nodes=free))
    # interfaces in canonical order: by lower id, then right before top
    for s in subs:
        sid = s["id"]
        for side in ("right", "top"):
            if side not in s["neighbors"]:
                continue
            j = s["neighbors"][side]
            mj = subs[j]["mesh"]
            ni = s["mesh"].side_nodes(side)
            nj = mj.side_nodes(OPPOSITE[side])
            ci, cj = s["mesh"].nodes[ni], mj.nodes[nj]
            if ci.shape != cj.shape or not np.array_equal(ci, cj):
                raise ConfigError(f"non-conforming interface between {sid} and {j}")
            iface_list.append(Interface(len(iface_list), sid, j, side, OPPOSITE[side], ni, nj, ci))
    for f in iface_list:
        pending.setdefault(f.i, {})[f.side_i] = f.id
        pending.setdefault(f.j, {})[f.side_j] = f.id
    subdomains = [Subdomain(interface_sides=pending.get(s["id"], {}), **s) for s in subs]
    return SubdomainTopology((sx, sy), (ex, ey), gmesh, subdomains, iface_list)


def extract_boundary(topology: SubdomainTopology, source: int, state: np.ndarray, iface_id: int,
                     step: int = 0, iteration: int = 0) -> BoundaryExchange:
    """Restrict subdomain ``source``'s nodal vector to a shared interface."""
    f = topology.interface(iface_id)
    sub = topology.subdomains[source]
    state = np.asarray(state, dtype=float)
    if state.shape != (sub.mesh.n_nodes,):
        raise ValueError(f"state has shape {state.shape}, subdomain {source} has "
                         f"{sub.mesh.n_nodes} nodes")
    return BoundaryExchange(source, f.other(source), iface_id, state[f.nodes_of(source)].copy(),
                            step, iteration)


def interface_jumps(states, topology: SubdomainTopology) -> np.ndarray:
    """Per-interface RMS difference of the two sides' nodal values."""
    out = np.zeros(len(topology.interfaces))
    for f in topology.interfaces:
        d = np.asarray(states[f.i])[f.nodes_i] - np.asarray(states[f.j])[f.nodes_j]
        out[f.id] = np.sqrt(np.mean(d * d))
    return out


def interface_error(states, topology: SubdomainTopology) -> float:
    """Max over interfaces of the RMS jump between neighbours; 0 without interfaces."""
    jumps = interface_jumps(states, topology)
    return float(jumps.max()) if jumps.size else 0.0
