"""
The Riccati step and the pointwise bound
========================================

Each subdomain filter carries a Riccati matrix P.  It is advanced with the
implicit midpoint rule applied to the linear Hamiltonian system behind the
Riccati equation, then recovered as P = U V^-1.  This script checks that step
on a scalar problem with a closed-form answer, then shows how sensors and the
model-noise weight shape the pointwise bound on a small FEM block.

Run:  python demos/01_riccati_step.py
"""
import numpy as np

from localfilter import fem
from localfilter.filter import UncertaintySpec, initial_riccati, riccati_step
from localfilter.flow import FlowField
from localfilter.mesh import build_mesh

# p' = -r p^2 has the solution p0 / (1 + r p0 t); no dynamics, no model noise
p0, r = 2.0, 3.0
spec = UncertaintySpec(q0=p0, q=0.0, r=r, gamma=1.0)
for h in (0.1, 0.01, 0.001):
    p = np.array([[p0]])
    for _ in range(round(1.0 / h)):
        p = riccati_step(p, np.eye(1), np.zeros((1, 1)), np.array([True]), spec, h)
    print(f"h={h:<6} p(1)={p[0, 0]:.15f}  exact={p0 / (1 + r * p0):.15f}")

# the midpoint map is a Moebius transformation, exact for this pure quadratic
# equation; with dynamics and model noise it is second order instead

mesh = build_mesh(12, 12, (0.0, 0.0, 1.0, 1.0))
flow = FlowField.constant(0.2, 0.1)
cls = fem.classify_boundary(mesh, {}, flow, 0.0)
boundary = np.unique(np.concatenate([mesh.side_nodes(s)
                                     for s in ("left", "right", "bottom", "top")]))
free = np.setdiff1d(np.arange(mesh.n_nodes), boundary)
m = fem.assemble_mass(mesh)[np.ix_(free, free)]
s = fem.assemble_stiffness(mesh, cls, flow, 1e-3, 0.0).total[np.ix_(free, free)]
minv = np.linalg.inv(m)
x, y = mesh.nodes[free].T
left_half = x < 0.5

print("\nbound sqrt((P M^-1)_kk) after 50 steps at three nodes:")
print(f"{'setup':<28}{'x=0.25':>10}{'x=0.50':>10}{'x=0.75':>10}")
probes = [int(np.argmin((x - a) ** 2 + (y - 0.5) ** 2)) for a in (0.25, 0.5, 0.75)]
for label, mask, q in [("no sensors, q=0.1", np.zeros(len(free), bool), 0.1),
                       ("sensors on left half, q=0.1", left_half, 0.1),
                       ("sensors on left half, q=1", left_half, 1.0)]:
    spec = UncertaintySpec(q0=0.1, q=q, r=12.0, gamma=1.1)
    p = initial_riccati(m, spec)
    for _ in range(50):
        p = riccati_step(p, m, s, mask, spec, 0.1)
    bound = np.sqrt(np.maximum(np.einsum("ij,ji->i", p, minv), 0.0))
    print(f"{label:<28}" + "".join(f"{bound[k]:10.4f}" for k in probes))

# sensors shrink the bound where they sit and, through the flow, downstream of
# them; a larger model-noise weight q loosens it everywhere
