"""Discrete minimax filter on one subdomain.

Vectors here are nodal values ``u`` (the FEM coefficients), and ``P`` is the
Riccati matrix of the mass-weighted estimate ``M u``.  The Riccati equation is

    dP/dt = S M^-1 P + P M^-1 S^T + g Q^1/2 M Q^1/2 - g^-1 P M^-1 Pi R^1/2 M R^1/2 Pi M^-1 P

with ``g`` the ellipsoid scale and ``Pi`` the diagonal 0/1 observation mask.
It is integrated through its linear Hamiltonian form ``P = U V^-1`` with the
implicit midpoint rule, which is a Cayley (Moebius) map of ``[P; I]``.

The estimate obeys ``M du/dt = S u + f + K (y - u)`` with gain
``K = g^-1 P M^-1 Pi R^1/2 M R^1/2 Pi``, also stepped with the midpoint rule.

All functions accept whatever index set the caller works on; the orchestrator
passes matrices restricted to nodes off the external Dirichlet boundary.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigError, NumericalError, StaleBoundaryError, StepSizeError


@dataclass(frozen=True)
class UncertaintySpec:
    """Diagonal entries of Q0, Q and R plus the ellipsoid scale gamma.

    Each weight is a scalar or a per-node array.
    """

    q0: float | np.ndarray
    q: float | np.ndarray
    r: float | np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        # q = 0 (exact model) and r = 0 (useless sensors) are legal limits; P0 must be SPD
        for name in ("q0", "q", "r"):
            v = np.asarray(getattr(self, name), dtype=float)
            bad = np.any(v <= 0) if name == "q0" else np.any(v < 0)
            if not np.all(np.isfinite(v)) or bad:
                sign = "positive" if name == "q0" else "non-negative"
                raise ConfigError(f"{name} must be finite and {sign}")
        if not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ConfigError(f"gamma must be positive, got {self.gamma}")

    def diag(self, name: str, n: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()

    def scaled(self, alpha: float) -> "UncertaintySpec":
        """Equivalent spec for a Riccati matrix multiplied by ``alpha``."""
        return replace(self, q0=np.multiply(self.q0, alpha), q=np.multiply(self.q, alpha),
                       r=np.divide(self.r, alpha))


@dataclass(frozen=True, eq=False)
class ObservationFrame:
    observed_mask: np.ndarray
    y: np.ndarray
    is_pseudo: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.observed_mask, dtype=bool)
        if np.any(self.is_pseudo & ~m):
            raise ValueError("pseudo-observation nodes must be observed")
        if not np.all(np.isfinite(self.y[m])):
            raise ValueError("observation values must be finite on observed nodes")

    @classmethod
    def empty(cls, n: int) -> "ObservationFrame":
        z = np.zeros(n, dtype=bool)
        return cls(z, np.zeros(n), z.copy())

    @classmethod
    def from_values(cls, mask, y) -> "ObservationFrame":
        mask = np.asarray(mask, dtype=bool)
        y = np.where(mask, np.asarray(y, dtype=float), 0.0)
        return cls(mask, y, np.zeros_like(mask))

    @property
    def n(self) -> int:
        return len(self.observed_mask)

    @property
    def real_mask(self) -> np.ndarray:
        return self.observed_mask & ~self.is_pseudo

    def restrict(self, idx) -> "ObservationFrame":
        return ObservationFrame(self.observed_mask[idx], self.y[idx], self.is_pseudo[idx])


@dataclass(eq=False)
class FilterState:
    """Nodal estimate, Riccati matrix and reinitialization bookkeeping."""

    u_hat: np.ndarray
    p: np.ndarray
    k: int = 0
    reinit_epsilon: float | None = None
    windows: int = 0

    def copy(self) -> "FilterState":
        return FilterState(self.u_hat.copy(), self.p.copy(), self.k, self.reinit_epsilon,
                           self.windows)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def mass_inverse(mass: np.ndarray) -> np.ndarray:
    try:
        c = sla.cho_factor(mass)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("mass matrix is not positive definite") from exc
    return _sym(sla.cho_solve(c, np.eye(mass.shape[0])))


def initial_riccati(mass: np.ndarray, spec: UncertaintySpec) -> np.ndarray:
    """``P0 = g Q0^1/2 M Q0^1/2``."""
    s = np.sqrt(spec.diag("q0", mass.shape[0]))
    return spec.gamma * _sym(s[:, None] * mass * s[None, :])


def initial_state(mass: np.ndarray, spec: UncertaintySpec, u0=None,
                  reinit_epsilon: float | None = None) -> FilterState:
    n = mass.shape[0]
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    return FilterState(u, initial_riccati(mass, spec), 0, reinit_epsilon)


def observation_weight(mass: np.ndarray, mask: np.ndarray, spec: UncertaintySpec) -> np.ndarray:
    """``g^-1 Pi R^1/2 M R^1/2 Pi`` as a dense matrix."""
    rh = np.sqrt(spec.diag("r", mass.shape[0])) * np.asarray(mask, dtype=float)
    return _sym(rh[:, None] * mass * rh[None, :]) / spec.gamma


def hamiltonian(mass: np.ndarray, minv: np.ndarray, stiffness: np.ndarray, mask: np.ndarray,
                spec: UncertaintySpec) -> np.ndarray:
    """Dense ``H`` of ``d/dt [U; V] = H [U; V]`` (reference form, used in tests)."""
    n = mass.shape[0]
    a = stiffness @ minv
    qh = np.sqrt(spec.diag("q", n))
    b = spec.gamma * _sym(qh[:, None] * mass * qh[None, :])
    d = _sym(minv @ observation_weight(mass, mask, spec) @ minv)
    return np.block([[a, b], [d, -a.T]])


def mass_factor(mass):
    """Sparse LU of the mass matrix, reused for every ``M^-1`` application."""
    try:
        return spla.splu(sp.csc_matrix(mass))
    except RuntimeError as exc:
        raise NumericalError("mass matrix is singular") from exc


def _weights(mass, mask, spec):
    """Sparse ``g Q^1/2 M Q^1/2`` and ``g^-1 Pi R^1/2 M R^1/2 Pi``."""
    n = mass.shape[0]
    m = sp.csr_matrix(mass)
    qh = sp.diags(np.sqrt(spec.diag("q", n)))
    rh = sp.diags(np.sqrt(spec.diag("r", n)) * np.asarray(mask, dtype=float))
    return spec.gamma * (qh @ m @ qh), (rh @ m @ rh) / spec.gamma


def riccati_step(p: np.ndarray, mass: np.ndarray, stiffness: np.ndarray, mask: np.ndarray,
                 spec: UncertaintySpec, h: float, mass_lu=None) -> np.ndarray:
    """Advance ``P`` by one implicit-midpoint step of the Hamiltonian system.

    ``stiffness`` is evaluated at the half step; ``mask`` marks real sensors
    only.  Raises StepSizeError when ``V`` is singular.

    With ``U = M X`` the Hamiltonian system becomes the sparse pencil
    ``diag(M, M) d/dt [X; V] = [[S, B], [W, -S^T]] [X; V]``, and the midpoint
    rule is invariant under that change of variables.  Eliminating ``V``
    leaves ``M - h/2 S`` plus a correction whose rank is the number of
    sensor nodes, solved with the Woodbury identity.
    """
    m = sp.csc_matrix(mass)
    s = sp.csc_matrix(stiffness)
    mass_lu = mass_factor(mass) if mass_lu is None else mass_lu
    b, w = _weights(mass, mask, spec)
    if not np.all(np.isfinite(p)):
        raise NumericalError("non-finite Riccati matrix")
    x0 = mass_lu.solve(np.asarray(p, dtype=float))
    half = 0.5 * h
    hb, hw = (half * b).tocsr(), (half * w).tocsc()
    rx = p + half * (s @ x0) + hb.toarray()
    rv = m.toarray() + hw @ x0 - half * s.T.toarray()
    if not (np.all(np.isfinite(rx)) and np.all(np.isfinite(rv))):
        raise StepSizeError(f"Hamiltonian step overflows (h={h})")
    try:
        a_lu = spla.splu(sp.csc_matrix(m - half * s))
        c_lu = spla.splu(sp.csc_matrix(m + half * s.T))
    except RuntimeError as exc:
        raise StepSizeError(f"singular Hamiltonian step matrix (h={h})") from exc
    crv = c_lu.solve(rv)
    x = a_lu.solve(rx + hb @ crv)
    v = crv
    cols = np.nonzero(np.asarray(mask, dtype=bool))[0]
    if cols.size:
        # W only has sensor columns, so C^-1 W x needs just those columns of C^-1 W
        cw = c_lu.solve(hw[:, cols].toarray())
        au = a_lu.solve(hb @ cw)
        cap = np.eye(cols.size) - au[cols]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            cap_lu = sla.lu_factor(cap)
        if not np.all(np.abs(np.diag(cap_lu[0])) > 1e-12 * max(1.0, np.abs(cap).max())):
            raise StepSizeError(f"singular Hamiltonian step matrix (h={h})")
        x = x + au @ sla.lu_solve(cap_lu, x[cols])
        v = crv + cw @ x[cols]
    u = m @ x
    # V starts as the identity; U may legitimately be many orders larger when P has grown
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        vlu = sla.lu_factor(v)
    piv = np.abs(np.diag(vlu[0]))
    if not np.all(piv > 1e-12 * max(1.0, np.abs(v).max())):
        raise StepSizeError(f"singular V in Riccati step (h={h})")
    p_next = sla.lu_solve(vlu, u.T, trans=1).T
    if not np.all(np.isfinite(p_next)):
        raise NumericalError("non-finite Riccati matrix")
    return _sym(p_next)


@dataclass(frozen=True, eq=False)
class FilterOperator:
    """Factorized midpoint filter system for one step; reusable across Schwarz sweeps.

    With ``A = M - h/2 S`` and ``K' = h/2 K`` the step solves
    ``(A + K') u1 = (M + h/2 S) u0 + h f + K' (2 y - u0)``.  Since ``K'`` only
    reads observed entries, this is evaluated as ``u1 = z + (A + K')^-1 (r - A z)``
    with ``z = 2 y - u0`` on observed nodes, so a very large gain never enters
    the right-hand side.
    """

    lu: tuple
    implicit: np.ndarray
    explicit: np.ndarray
    gain: np.ndarray
    mask: np.ndarray
    h: float

    def solve(self, u: np.ndarray, f_mid: np.ndarray, y: np.ndarray | None = None) -> np.ndarray:
        rhs = self.explicit @ u + self.h * f_mid
        if y is not None and self.mask.any():
            z = np.where(self.mask, 2.0 * np.asarray(y, dtype=float) - u, 0.0)
            out = z + sla.lu_solve(self.lu, rhs - self.implicit @ z)
        else:
            out = sla.lu_solve(self.lu, rhs)
        if not np.all(np.isfinite(out)):
            raise NumericalError("non-finite filter estimate")
        return out


def prepare_filter(mass: np.ndarray, stiffness: np.ndarray, p_mid: np.ndarray | None,
                   mask: np.ndarray, spec: UncertaintySpec, h: float,
                   mass_lu=None) -> FilterOperator:
    """Factorize ``M - h/2 S + h/2 K`` for one step.

    ``p_mid`` is the average of the Riccati matrices at both ends of the step;
    ``mask`` includes pseudo-observation nodes.  With ``p_mid=None`` or an
    empty mask the gain is zero and this is the forward midpoint scheme.
    """
    n = mass.shape[0]
    mask = np.asarray(mask, dtype=bool)
    gain = np.zeros((n, n))
    if p_mid is None or not mask.any():
        mask = np.zeros(n, dtype=bool)
    else:
        # K = P M^-1 W has nonzero columns only on observed nodes
        mass_lu = mass_factor(mass) if mass_lu is None else mass_lu
        _, w = _weights(mass, mask, spec)
        cols = np.nonzero(mask)[0]
        gain[:, cols] = p_mid @ mass_lu.solve(w[:, cols].toarray())
    implicit = mass - 0.5 * h * stiffness
    lhs = implicit + 0.5 * h * gain
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(lhs)
    piv = np.abs(np.diag(lu[0]))
    colmax = np.abs(lhs).max(axis=0)
    if np.any(piv <= 1e-14 * colmax):
        raise StepSizeError(f"singular filter system (h={h})")
    return FilterOperator(lu, implicit, mass + 0.5 * h * stiffness, gain, mask, h)


def filter_step(state: FilterState, mass: np.ndarray, stiffness: np.ndarray, f_mid: np.ndarray,
                obs: ObservationFrame, spec: UncertaintySpec, p_next: np.ndarray,
                h: float, mass_lu=None) -> np.ndarray:
    """New nodal estimate for one midpoint step (observations given at the half step)."""
    if f_mid is None:
        raise StaleBoundaryError("source vector was not refreshed before the filter step")
    op = prepare_filter(mass, stiffness, 0.5 * (state.p + p_next), obs.observed_mask,
                        spec, h, mass_lu)
    return op.solve(state.u_hat, f_mid, obs.y)


def reinitialize(state: FilterState, spec: UncertaintySpec, epsilon: float,
                 measure: float = 1.0) -> tuple[FilterState, UncertaintySpec]:
    """Restart the Riccati window: ``P <- (1+eps) P`` and ``gamma = 1+eps``."""
    if epsilon < 0:
        raise ConfigError(f"reinitialization window must be non-negative, got {epsilon}")
    if measure > 1.0 + 1e-12:
        warnings.warn(f"subdomain measure {measure:g} exceeds 1; reinitialization "
                      "bounds are loose", RuntimeWarning, stacklevel=2)
    new = state.copy()
    new.p = (1.0 + epsilon) * state.p
    new.windows = state.windows + 1
    new.reinit_epsilon = epsilon
    return new, replace(spec, gamma=1.0 + epsilon)


def make_pseudo_observations(mesh, cls, neighbor_dirichlet: dict,
                             base: ObservationFrame) -> ObservationFrame:
    """Use inflow boundary data as observations on a sensorless subdomain.

    Nodes shared by two inflow sides get the average of both neighbours.
    """
    if np.any(base.observed_mask):
        return base
    acc = np.zeros(base.n)
    cnt = np.zeros(base.n)
    for side, iface in cls.interface_sides.items():
        edges = cls.inflow_edges[side]
        if not edges.any():
            continue
        if iface not in neighbor_dirichlet:
            raise StaleBoundaryError(f"no neighbour data for interface {iface}")
        nodes = mesh.side_nodes(side)
        on_inflow = np.zeros(len(nodes), dtype=bool)
        on_inflow[:-1] |= edges
        on_inflow[1:] |= edges
        vals = np.asarray(neighbor_dirichlet[iface], dtype=float)
        acc[nodes[on_inflow]] += vals[on_inflow]
        cnt[nodes[on_inflow]] += 1
    mask = cnt > 0
    y = np.where(mask, acc / np.maximum(cnt, 1), 0.0)
    return ObservationFrame(mask, y, mask.copy())


def pointwise_bounds(p: np.ndarray, minv: np.ndarray) -> np.ndarray:
    """``sqrt(diag(P M^-1))`` for every node, negatives from roundoff clamped to 0."""
    d = np.einsum("ij,ji->i", p, minv)
    return np.sqrt(np.maximum(d, 0.0))


def pointwise_bound(state: FilterState, mass: np.ndarray, node: int,
                    minv: np.ndarray | None = None) -> float:
    if not 0 <= node < state.p.shape[0]:
        raise IndexError(f"node {node} out of range")
    minv = mass_inverse(mass) if minv is None else minv
    return float(np.sqrt(max(float(state.p[node] @ minv[:, node]), 0.0)))
