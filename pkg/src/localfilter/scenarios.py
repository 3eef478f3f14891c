"""Closed-form Gaussian plumes, synthetic sensors and the two canned experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .filter import ObservationFrame
from .flow import FlowField


@dataclass(frozen=True)
class GaussianTruthParams:
    """Gaussian of width ``sigma0 + sigma_rate * t`` centred at ``(x0, y0) + m(t)``.

    The drift ``m(t)`` is the displacement of ``drift`` (a FlowField) since t=0.
    """

    sigma0: float
    sigma_rate: float
    x0: float
    y0: float
    drift: FlowField = FlowField()

    def sigma(self, t: float) -> float:
        s = self.sigma0 + self.sigma_rate * t
        if s <= 0:
            raise ConfigError(f"plume width is non-positive at t={t}")
        return s

    def center(self, t: float) -> tuple[float, float]:
        mx, my = self.drift.displacement(t)
        return self.x0 + mx, self.y0 + my


def gaussian_truth(params: GaussianTruthParams, x, y, t: float):
    s = params.sigma(t)
    cx, cy = params.center(t)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return np.exp(-0.5 * ((x - cx) / s) ** 2 - 0.5 * ((y - cy) / s) ** 2) / (2.0 * math.pi * s * s)


def noise_rng(seed: int, subdomain: int, step: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, subdomain, step)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, subdomain, step])))


def synth_observations(truth: GaussianTruthParams, topology, observed, step: int, h: float,
                       seed: int, noise: float = 0.5) -> dict:
    """Noisy point samples of the truth at time ``step * h`` on every node of the observed subdomains.

    Returns a frame for every subdomain; unobserved ones are empty.
    """
    observed = set(observed)
    t = step * h
    frames = {}
    for s in topology.subdomains:
        n = s.mesh.n_nodes
        if s.id not in observed:
            frames[s.id] = ObservationFrame.empty(n)
            continue
        y = gaussian_truth(truth, s.mesh.nodes[:, 0], s.mesh.nodes[:, 1], t)
        if noise > 0:
            y = y + noise_rng(seed, s.id, step).uniform(-noise, noise, size=n)
        frames[s.id] = ObservationFrame.from_values(np.ones(n, dtype=bool), y)
    return frames


def experiment_config(which: int, desk: bool = False):
    """RunConfig of experiment 1 (constant flow channel) or 2 (rotating flow square).

    ``desk=True`` returns the reduced-size variants used for quick checks.
    """
    from .config import RunConfig

    if which == 1:
        sx, e, steps = (8, 8, 250) if desk else (20, 15, 1000)
        observed = (0, 1, 2, 3) if desk else (0, 1, 2, 3, 8, 9, 10, 11, 16, 17, 18, 19)
        flow = FlowField.constant(0.2, 0.0)
        return RunConfig(
            name=f"experiment1{'-desk' if desk else ''}",
            rect=(0.0, 0.0, float(sx), 1.0), sx=sx, sy=1, ex=e, ey=e,
            flow=flow, eps=1e-5,
            # width grows at twice the diffusivity
            truth=GaussianTruthParams(0.06, 2e-5, 0.25, 0.25, flow),
            q0=0.1, q=0.1, r=12.0, reinit_window=0.1,
            h=0.1, steps=steps, observed=observed, probe=(sx / 2.0 + 0.4, 0.4))
    if which == 2:
        e = 8 if desk else 15
        flow = FlowField.harmonic((0.12, 0.24), (math.pi, math.pi / 2), (0.1, 0.2))
        return RunConfig(
            name=f"experiment2{'-desk' if desk else ''}",
            rect=(0.0, 0.0, 3.0, 3.0), sx=3, sy=3, ex=e, ey=e,
            flow=flow, eps=1e-5,
            truth=GaussianTruthParams(0.1, 0.01, 0.25, 1.5, flow),
            q0=1.4, q=5.0, r=12.0, reinit_window=0.1,
            h=0.1, steps=2000, observed=(3, 4), probe=(1.4, 1.4))
    raise ConfigError(f"unknown experiment id {which!r}")
