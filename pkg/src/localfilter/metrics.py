"""Stitching of subdomain fields and the error metrics."""
from __future__ import annotations

import numpy as np

from .errors import NumericalError


def stitch(topology, fields) -> np.ndarray:
    """Global nodal vector from per-subdomain vectors.

    Nodes shared by several subdomains are counted once, taking the mean of
    the copies.
    """
    acc = np.zeros(topology.global_n_nodes)
    cnt = np.zeros(topology.global_n_nodes)
    for s in topology.subdomains:
        np.add.at(acc, s.global_nodes, fields[s.id])
        np.add.at(cnt, s.global_nodes, 1.0)
    return acc / cnt


def spatial_norm(u, mass=None) -> float:
    """Nodal 2-norm, or ``sqrt(u . M u)`` when a mass matrix is given."""
    u = np.asarray(u, dtype=float)
    if mass is None:
        return float(np.linalg.norm(u))
    return float(np.sqrt(max(u @ (mass @ u), 0.0)))


def spatial_error(u, truth, mass=None) -> float:
    """Relative error ``|u - truth| / |truth|``."""
    den = spatial_norm(truth, mass)
    if den == 0.0:
        raise NumericalError("relative error undefined for a zero reference field")
    return spatial_norm(np.asarray(u) - np.asarray(truth), mass) / den


def estimation_error(err_norms, truth_norms, h: float) -> float:
    """Ratio of time integrals (trapezoid rule) of error and truth norms."""
    e = np.asarray(err_norms, dtype=float)
    a = np.asarray(truth_norms, dtype=float)
    if e.size < 2 or e.shape != a.shape:
        raise ValueError("need at least two matching samples")
    den = np.trapezoid(a, dx=h) if hasattr(np, "trapezoid") else np.trapz(a, dx=h)
    if den == 0.0:
        raise NumericalError("estimation error undefined for a zero reference series")
    num = np.trapezoid(e, dx=h) if hasattr(np, "trapezoid") else np.trapz(e, dx=h)
    return float(num / den)


def estimation_error_fields(fields, truths, h: float, mass=None) -> float:
    """Estimation error from series of stitched fields."""
    err = [spatial_norm(np.asarray(u) - np.asarray(a), mass) for u, a in zip(fields, truths)]
    ref = [spatial_norm(a, mass) for a in truths]
    return estimation_error(err, ref, h)
