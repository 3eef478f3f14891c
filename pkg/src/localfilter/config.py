"""Run configuration and its INI-style text form."""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .errors import ConfigError
from .flow import FlowField
from .scenarios import GaussianTruthParams

MODES = ("localized", "global", "forward")


@dataclass(frozen=True)
class RunConfig:
    name: str = "run"
    # geometry and decomposition
    rect: tuple = (0.0, 0.0, 1.0, 1.0)
    sx: int = 1
    sy: int = 1
    ex: int = 8
    ey: int = 8
    # physics
    flow: FlowField = FlowField()
    eps: float = 1e-5
    flux: str = "normal"
    truth: GaussianTruthParams = GaussianTruthParams(0.1, 0.0, 0.5, 0.5)
    # uncertainty
    q0: float = 1.0
    q: float = 1.0
    r: float = 12.0
    gamma: float | None = None  # None: 1+window with reinitialization, else (T+1)*area
    reinit_window: float = 0.0  # 0 disables reinitialization
    pseudo_obs: bool = True
    pseudo_r: float | None = None  # weight of pseudo-observations, None: same as r
    # run
    mode: str = "localized"
    h: float = 0.1
    steps: int = 10
    observed: tuple = ()
    noise: float = 0.5
    seed: int = 0
    workers: int = 1
    schwarz_tol: float = 1e-6
    schwarz_max_iter: int = 50
    probe: tuple = (0.5, 0.5)
    mass_weighted: bool = False
    # output
    out_dir: str = ""
    snapshot_every: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise ConfigError(f"time step must be positive, got {self.h}")
        if self.steps < 1:
            raise ConfigError(f"steps must be at least 1, got {self.steps}")
        if not self.schwarz_tol > 0:
            raise ConfigError(f"Schwarz threshold must be positive, got {self.schwarz_tol}")
        if self.schwarz_max_iter < 1:
            raise ConfigError("max Schwarz iterations must be at least 1")
        if self.reinit_window < 0:
            raise ConfigError("reinitialization window must be non-negative")
        if self.reinit_window > 0:
            ratio = self.reinit_window / self.h
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError("reinitialization window must be a multiple of the time step")
        if self.pseudo_r is not None and not (math.isfinite(self.pseudo_r) and self.pseudo_r >= 0):
            raise ConfigError(f"pseudo_r must be finite and non-negative, got {self.pseudo_r}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.eps < 0:
            raise ConfigError("diffusion coefficient must be non-negative")
        if self.flux not in ("normal", "literal"):
            raise ConfigError(f"unknown flux mode {self.flux!r}")
        n_sub = self.sx * self.sy
        bad = [i for i in self.observed if not 0 <= i < n_sub]
        if bad:
            raise ConfigError(f"observed subdomains {bad} out of range 0..{n_sub - 1}")

    @property
    def horizon(self) -> float:
        return self.steps * self.h

    @property
    def subdomain_area(self) -> float:
        x0, y0, x1, y1 = self.rect
        return (x1 - x0) * (y1 - y0) / (self.sx * self.sy)

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


def _fmt(v) -> str:
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _floats(s: str) -> tuple:
    s = s.strip()
    return tuple(float(x) for x in s.split(",")) if s else ()


def _ints(s: str) -> tuple:
    s = s.strip()
    return tuple(int(x) for x in s.split(",")) if s else ()


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def to_ini(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser()
    cp["geometry"] = {"rect": _fmt(cfg.rect)}
    cp["decomposition"] = {"subdomains": _fmt((cfg.sx, cfg.sy)),
                           "elements": _fmt((cfg.ex, cfg.ey))}
    fl = cfg.flow
    cp["flow"] = {"kind": fl.kind, "velocity": _fmt(fl.velocity), "amplitude": _fmt(fl.amplitude),
                  "phase": _fmt(fl.phase), "rate": _fmt(fl.rate), "eps": _fmt(cfg.eps),
                  "flux": cfg.flux}
    tr = cfg.truth
    cp["truth"] = {"sigma0": _fmt(tr.sigma0), "sigma_rate": _fmt(tr.sigma_rate),
                   "center": _fmt((tr.x0, tr.y0))}
    cp["uncertainty"] = {"q0": _fmt(cfg.q0), "q": _fmt(cfg.q), "r": _fmt(cfg.r),
                         "gamma": "auto" if cfg.gamma is None else _fmt(cfg.gamma),
                         "reinit_window": _fmt(cfg.reinit_window),
                         "pseudo_obs": _fmt(cfg.pseudo_obs),
                         "pseudo_r": "auto" if cfg.pseudo_r is None else _fmt(cfg.pseudo_r)}
    cp["run"] = {"name": cfg.name, "mode": cfg.mode, "h": _fmt(cfg.h), "steps": _fmt(cfg.steps),
                 "observed": _fmt(cfg.observed), "noise": _fmt(cfg.noise), "seed": _fmt(cfg.seed),
                 "workers": _fmt(cfg.workers), "schwarz_tol": _fmt(cfg.schwarz_tol),
                 "schwarz_max_iter": _fmt(cfg.schwarz_max_iter), "probe": _fmt(cfg.probe),
                 "mass_weighted": _fmt(cfg.mass_weighted)}
    cp["output"] = {"out_dir": cfg.out_dir, "snapshot_every": _fmt(cfg.snapshot_every)}
    lines = []
    for sec in cp.sections():
        lines.append(f"[{sec}]")
        lines.extend(f"{k} = {v}" for k, v in cp[sec].items())
        lines.append("")
    return "\n".join(lines)


def from_ini(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    base = RunConfig()
    kw = {}
    try:
        g = cp["geometry"] if cp.has_section("geometry") else {}
        if "rect" in g:
            kw["rect"] = _floats(g["rect"])
            if len(kw["rect"]) != 4:
                raise ConfigError("rect needs four numbers: x0, y0, x1, y1")
        d = cp["decomposition"] if cp.has_section("decomposition") else {}
        if "subdomains" in d:
            kw["sx"], kw["sy"] = _ints(d["subdomains"])
        if "elements" in d:
            kw["ex"], kw["ey"] = _ints(d["elements"])
        f = cp["flow"] if cp.has_section("flow") else {}
        flow = base.flow
        if f:
            kind = f.get("kind", "constant").strip()
            if kind == "constant":
                flow = FlowField.constant(*_floats(f.get("velocity", "0, 0")))
            else:
                flow = FlowField.harmonic(_floats(f["amplitude"]), _floats(f["phase"]),
                                          _floats(f["rate"]))
            if "eps" in f:
                kw["eps"] = float(f["eps"])
            if "flux" in f:
                kw["flux"] = f["flux"].strip()
        kw["flow"] = flow
        t = cp["truth"] if cp.has_section("truth") else {}
        tr = base.truth
        if t:
            cx, cy = _floats(t.get("center", f"{tr.x0}, {tr.y0}"))
            tr = GaussianTruthParams(float(t.get("sigma0", tr.sigma0)),
                                     float(t.get("sigma_rate", tr.sigma_rate)), cx, cy)
        kw["truth"] = replace(tr, drift=flow)
        u = cp["uncertainty"] if cp.has_section("uncertainty") else {}
        for k in ("q0", "q", "r", "reinit_window"):
            if k in u:
                kw[k] = float(u[k])
        if "gamma" in u:
            kw["gamma"] = None if u["gamma"].strip() == "auto" else float(u["gamma"])
        if "pseudo_obs" in u:
            kw["pseudo_obs"] = _bool(u["pseudo_obs"])
        if "pseudo_r" in u:
            kw["pseudo_r"] = None if u["pseudo_r"].strip() == "auto" else float(u["pseudo_r"])
        r = cp["run"] if cp.has_section("run") else {}
        conv = {"name": str.strip, "mode": str.strip, "h": float, "steps": int, "observed": _ints,
                "noise": float, "seed": int, "workers": int, "schwarz_tol": float,
                "schwarz_max_iter": int, "probe": _floats, "mass_weighted": _bool}
        for k, fn in conv.items():
            if k in r:
                kw[k] = fn(r[k])
        o = cp["output"] if cp.has_section("output") else {}
        if "out_dir" in o:
            kw["out_dir"] = o["out_dir"].strip()
        if "snapshot_every" in o:
            kw["snapshot_every"] = int(o["snapshot_every"])
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return from_ini(p.read_text())


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(to_ini(cfg))


def config_dict(cfg: RunConfig) -> dict:
    return asdict(cfg)
