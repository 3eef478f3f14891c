"""Bilinear FEM assembly for one subdomain of the d-ADN decomposition.

Matrix rows index test functions and columns index trial coefficients, so the
semi-discrete model reads ``M du/dt = S(t) u + f(t)`` with
``S = stiffness_omega + stiffness_nin + stiffness_dout``.

Interface edges are split by the sign of ``mu . n`` (outward normal).  Inflow
edges take Dirichlet data from the neighbour through the source vector and
keep their diffusive flux term; outflow edges carry the damping term
``-(mu . n) u v`` and drop the diffusive flux (homogeneous Neumann).
External edges keep only the diffusive flux; their Dirichlet data is zero.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, StaleBoundaryError
from .flow import FlowField, flow_at
from .mesh import OUTWARD_NORMALS, SIDE_LOCAL_NODES, SIDES, Mesh

_G = 1.0 / np.sqrt(3.0)
_REF_NODES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
_GAUSS_2D = np.array([[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]])
_GAUSS_1D = np.array([-_G, _G])

FLUX_MODES = ("normal", "literal")


def _shape(xi, eta):
    """Shape values and reference gradients at points; shapes (q,4), (q,4), (q,4)."""
    xi = np.atleast_1d(xi)[:, None]
    eta = np.atleast_1d(eta)[:, None]
    xa, ea = _REF_NODES[:, 0], _REF_NODES[:, 1]
    n = 0.25 * (1 + xa * xi) * (1 + ea * eta)
    dxi = 0.25 * xa * (1 + ea * eta)
    deta = 0.25 * ea * (1 + xa * xi)
    return n, dxi, deta


_N2, _DXI2, _DETA2 = _shape(_GAUSS_2D[:, 0], _GAUSS_2D[:, 1])


@dataclass(frozen=True, eq=False)
class BoundaryClassification:
    """Node sets of a subdomain at one evaluation time.

    ``interface_sides`` maps a mesh side to its interface id (external sides
    are absent).  ``inflow_edges`` maps each interface side to a boolean array
    over the element edges along it.
    """

    d_in: np.ndarray
    d_out: np.ndarray
    n_in: np.ndarray
    interior: np.ndarray
    interface_sides: dict
    inflow_edges: dict
    t: float

    def inflow_sides(self) -> list[str]:
        return [s for s, e in self.inflow_edges.items() if e.any()]


@dataclass(frozen=True, eq=False)
class StiffnessBlocks:
    omega: np.ndarray
    nin: np.ndarray
    dout: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.omega + self.nin + self.dout


@dataclass(frozen=True, eq=False)
class FemSystem:
    """Mass matrix, the three stiffness blocks and the source of one subdomain."""

    mass: np.ndarray
    stiffness_omega: np.ndarray
    stiffness_nin: np.ndarray
    stiffness_dout: np.ndarray
    source: np.ndarray

    @property
    def n(self) -> int:
        return self.mass.shape[0]

    @property
    def stiffness(self) -> np.ndarray:
        return self.stiffness_omega + self.stiffness_nin + self.stiffness_dout


def _element_points(mesh: Mesh, ref_pts: np.ndarray, elems=None) -> tuple[np.ndarray, np.ndarray]:
    """Physical coordinates (ne, q) of reference points in each element."""
    elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
    ll = mesh.nodes[mesh.elements[elems, 0]]
    x = ll[:, 0:1] + (ref_pts[None, :, 0] + 1) * 0.5 * mesh.hx
    y = ll[:, 1:2] + (ref_pts[None, :, 1] + 1) * 0.5 * mesh.hy
    return x, y


def _scatter(n: int, elems: np.ndarray, local: np.ndarray) -> np.ndarray:
    """Sum per-element 4x4 blocks ``local`` (ne,4,4) into a dense n x n matrix."""
    out = np.zeros((n, n))
    rows = np.broadcast_to(elems[:, :, None], local.shape)
    cols = np.broadcast_to(elems[:, None, :], local.shape)
    np.add.at(out, (rows.ravel(), cols.ravel()), local.ravel())
    return out


def element_mass(hx: float, hy: float) -> np.ndarray:
    det = 0.25 * hx * hy
    return det * np.einsum("qa,qb->ab", _N2, _N2)


def assemble_mass(mesh: Mesh) -> np.ndarray:
    """Consistent mass matrix ``{int phi_k phi_s}`` with 2x2 Gauss quadrature."""
    me = element_mass(mesh.hx, mesh.hy)
    local = np.broadcast_to(me, (mesh.n_elements, 4, 4))
    return _scatter(mesh.n_nodes, mesh.elements, local)


def _side_reference_points(side: str) -> np.ndarray:
    if side == "bottom":
        return np.column_stack([_GAUSS_1D, [-1.0, -1.0]])
    if side == "top":
        return np.column_stack([_GAUSS_1D, [1.0, 1.0]])
    if side == "left":
        return np.column_stack([[-1.0, -1.0], _GAUSS_1D])
    return np.column_stack([[1.0, 1.0], _GAUSS_1D])


def _edge_length(mesh: Mesh, side: str) -> float:
    return mesh.hx if side in ("bottom", "top") else mesh.hy


def _flux_speed(mu: np.ndarray, normal, flux: str) -> np.ndarray:
    if flux == "normal":
        return mu[..., 0] * normal[0] + mu[..., 1] * normal[1]
    if flux == "literal":
        return mu[..., 0] + mu[..., 1]
    raise ConfigError(f"unknown flux mode {flux!r}")


def _edge_mass_flux(mesh: Mesh, side: str, flow: FlowField, t: float, flux: str):
    """Per-edge matrices ``int (mu.n) phi_k phi_s`` along ``side``; shape (m,4,4)."""
    ref = _side_reference_points(side)
    n, _, _ = _shape(ref[:, 0], ref[:, 1])
    elems = mesh.side_elements(side)
    x, y = _element_points(mesh, ref, elems)
    speed = _flux_speed(flow_at(flow, x, y, t), OUTWARD_NORMALS[side], flux)
    w = 0.5 * _edge_length(mesh, side)
    return w * np.einsum("eq,qs,qk->esk", speed, n, n)


def _edge_neumann(mesh: Mesh, side: str, eps: float):
    """Per-edge matrices ``int eps phi_s dphi_k/dn`` along ``side``; shape (m,4,4)."""
    ref = _side_reference_points(side)
    n, dxi, deta = _shape(ref[:, 0], ref[:, 1])
    nx_, ny_ = OUTWARD_NORMALS[side]
    dn = dxi * (2.0 / mesh.hx) * nx_ + deta * (2.0 / mesh.hy) * ny_
    w = 0.5 * _edge_length(mesh, side)
    local = w * eps * np.einsum("qs,qk->sk", n, dn)
    m = len(mesh.side_elements(side))
    return np.broadcast_to(local, (m, 4, 4))


def classify_boundary(mesh: Mesh, interface_sides: dict, flow: FlowField,
                      t: float) -> BoundaryClassification:
    """Split interface nodes into inflow/outflow sets by the sign of ``mu . n``.

    Each element edge on an interface side is inflow when ``mu . n < 0`` at its
    midpoint and outflow otherwise (``mu . n = 0`` counts as outflow).  A node on
    any inflow edge is in ``d_in``; this gives inflow precedence at corners.
    """
    inflow_edges = {}
    d_in, d_out, n_in = set(), set(), set()
    for side, _iface in interface_sides.items():
        elems = mesh.side_elements(side)
        a, b = SIDE_LOCAL_NODES[side]
        ref = _side_reference_points(side).mean(axis=0, keepdims=True)
        x, y = _element_points(mesh, ref, elems)
        speed = _flux_speed(flow_at(flow, x, y, t), OUTWARD_NORMALS[side], "normal")[:, 0]
        is_in = speed < 0.0
        inflow_edges[side] = is_in
        for e, flag in zip(elems, is_in):
            edge_nodes = mesh.elements[e, [a, b]]
            if flag:
                d_in.update(edge_nodes.tolist())
                n_in.update(mesh.elements[e].tolist())
            else:
                d_out.update(edge_nodes.tolist())
    d_out -= d_in
    n_in -= d_in | d_out
    all_nodes = set(range(mesh.n_nodes))
    interior = all_nodes - d_in - d_out - n_in
    as_arr = lambda s: np.array(sorted(s), dtype=np.int64)
    return BoundaryClassification(as_arr(d_in), as_arr(d_out), as_arr(n_in), as_arr(interior),
                                  dict(interface_sides), inflow_edges, float(t))


def assemble_stiffness(mesh: Mesh, cls: BoundaryClassification, flow: FlowField,
                       eps: float, t: float, flux: str = "normal") -> StiffnessBlocks:
    """The three additive stiffness blocks at time ``t``.

    ``omega``: volume diffusion and advection plus the diffusive flux through
    external edges.  ``nin``: diffusive flux through inflow interface edges.
    ``dout``: outflow damping ``-int (mu.n) phi_k phi_s`` on outflow edges.
    """
    if eps < 0:
        raise ConfigError(f"diffusion coefficient must be non-negative, got {eps}")
    n = mesh.n_nodes
    det = 0.25 * mesh.hx * mesh.hy
    dx = _DXI2 * (2.0 / mesh.hx)
    dy = _DETA2 * (2.0 / mesh.hy)
    diff = -eps * det * (np.einsum("qs,qk->sk", dx, dx) + np.einsum("qs,qk->sk", dy, dy))
    x, y = _element_points(mesh, _GAUSS_2D)
    mu = flow_at(flow, x, y, t)  # (ne, q, 2)
    adv = det * np.einsum("qk,eq,qs->esk", _N2, mu[..., 0], dx) \
        + det * np.einsum("qk,eq,qs->esk", _N2, mu[..., 1], dy)
    omega = _scatter(n, mesh.elements, adv + diff[None])

    nin = np.zeros((n, n))
    dout = np.zeros((n, n))
    for side in SIDES:
        elems = mesh.side_elements(side)
        conn = mesh.elements[elems]
        if side not in cls.interface_sides:
            if eps > 0:
                omega += _scatter(n, conn, _edge_neumann(mesh, side, eps))
            continue
        is_in = cls.inflow_edges[side]
        if eps > 0 and is_in.any():
            nin += _scatter(n, conn[is_in], _edge_neumann(mesh, side, eps)[is_in])
        if (~is_in).any():
            fl = _edge_mass_flux(mesh, side, flow, t, flux)
            dout -= _scatter(n, conn[~is_in], fl[~is_in])
    return StiffnessBlocks(omega, nin, dout)


def inflow_coupling(mesh: Mesh, cls: BoundaryClassification, side: str, flow: FlowField,
                    t: float, flux: str = "normal") -> np.ndarray:
    """Matrix ``-int_{inflow edges of side} (mu.n) phi_k phi_s`` (n x n)."""
    is_in = cls.inflow_edges[side]
    if not is_in.any():
        return np.zeros((mesh.n_nodes, mesh.n_nodes))
    conn = mesh.elements[mesh.side_elements(side)]
    fl = _edge_mass_flux(mesh, side, flow, t, flux)
    return -_scatter(mesh.n_nodes, conn[is_in], fl[is_in])


def assemble_source(mesh: Mesh, cls: BoundaryClassification, f_body, neighbor_dirichlet: dict,
                    flow: FlowField, t: float, flux: str = "normal",
                    mass: np.ndarray | None = None) -> np.ndarray:
    """Body forcing plus inflow Dirichlet coupling.

    ``f_body`` is None, an array of nodal values, or a callable ``f(x, y, t)``.
    ``neighbor_dirichlet`` maps interface id to the neighbour's values along
    the shared side (ordered as ``mesh.side_nodes``).
    """
    out = np.zeros(mesh.n_nodes)
    if f_body is not None:
        if callable(f_body):
            fb = np.asarray(f_body(mesh.nodes[:, 0], mesh.nodes[:, 1], t), dtype=float)
        else:
            fb = np.asarray(f_body, dtype=float)
        m = assemble_mass(mesh) if mass is None else mass
        out += m @ np.broadcast_to(fb, (mesh.n_nodes,))
    for side, iface in cls.interface_sides.items():
        if not cls.inflow_edges[side].any():
            continue
        if iface not in neighbor_dirichlet:
            raise StaleBoundaryError(f"no neighbour data for interface {iface} ({side} side)")
        g = np.zeros(mesh.n_nodes)
        g[mesh.side_nodes(side)] = neighbor_dirichlet[iface]
        out += inflow_coupling(mesh, cls, side, flow, t, flux) @ g
    return out


def assemble_system(mesh: Mesh, interface_sides: dict, flow: FlowField, eps: float, t: float,
                    f_body=None, neighbor_dirichlet: dict | None = None,
                    flux: str = "normal") -> tuple[FemSystem, BoundaryClassification]:
    """Classification plus all matrices and the source at time ``t``."""
    cls = classify_boundary(mesh, interface_sides, flow, t)
    mass = assemble_mass(mesh)
    blocks = assemble_stiffness(mesh, cls, flow, eps, t, flux)
    src = assemble_source(mesh, cls, f_body, neighbor_dirichlet or {}, flow, t, flux, mass)
    return FemSystem(mass, blocks.omega, blocks.nin, blocks.dout, src), cls
