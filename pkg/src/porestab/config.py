"""Run configuration: YAML in, validated dataclasses out.

Units (any consistent system): lengths in L, time in T, bulk
concentrations in amount/L^3, surface concentrations in amount/L^2.

* ``geometry``: ``radius``, ``height`` [L]; grid counts ``n_r``, ``n_theta``, ``n_z``
* ``species``: ``alpha``, ``beta`` (stoichiometry); ``kappa_f``, ``kappa_b``
  (rate constants, units depend on the reaction orders); ``k_ad`` [L/T],
  ``k_de`` [1/T]; ``d_bulk``, ``d_surf`` [L^2/T]
* ``velocity``: ``profile`` (poiseuille | plug), ``w_max`` [L/T]
* ``equilibrium``: ``mode`` (balance | explicit), ``xi`` for explicit mode
"""
from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigurationError

SCENARIOS = ("analyze", "simulate", "poincare", "sweep")
SWEEP_AXES = {
    "kappa_f": "species", "kappa_b": "species", "k_ad": "species", "k_de": "species",
    "radius": "geometry", "height": "geometry", "w_max": "velocity",
}
SPECIES_FIELDS = ("alpha", "beta", "kappa_f", "kappa_b", "k_ad", "k_de", "d_bulk", "d_surf")


@dataclass(frozen=True)
class GeometryConfig:
    radius: float = 1.0
    height: float = 1.0
    n_r: int = 12
    n_theta: int = 12
    n_z: int = 12


@dataclass(frozen=True)
class SpeciesConfig:
    alpha: tuple = (1.0, 0.0)
    beta: tuple = (0.0, 1.0)
    kappa_f: float = 0.25
    kappa_b: float = 0.25
    k_ad: tuple = (1.0,)
    k_de: tuple = (1.0,)
    d_bulk: tuple = (1.0,)
    d_surf: tuple = (0.1,)


@dataclass(frozen=True)
class VelocityConfig:
    profile: str = "poiseuille"
    w_max: float = 1.0


@dataclass(frozen=True)
class EquilibriumConfig:
    mode: str = "balance"
    xi: tuple | None = None


@dataclass(frozen=True)
class AnalyzeConfig:
    k: int = 40
    method: str = "auto"
    b_scale: float = 1.0
    export_operator: bool = False


@dataclass(frozen=True)
class SimulateConfig:
    t_end: float = 60.0
    dt: float = 0.05
    delta: float = 1e-3
    sample_every: int = 4
    predict: bool = True
    k: int = 10


@dataclass(frozen=True)
class PoincareConfig:
    resolutions: tuple = (32, 64, 128)


@dataclass(frozen=True)
class SweepConfig:
    axes: dict = field(default_factory=dict)
    k: int = 20
    max_points: int = 256


@dataclass(frozen=True)
class RunConfig:
    scenario: str = "analyze"
    output_dir: str = "runs/out"
    seed: int = 0
    geometry: GeometryConfig = GeometryConfig()
    species: SpeciesConfig = SpeciesConfig()
    velocity: VelocityConfig = VelocityConfig()
    equilibrium: EquilibriumConfig = EquilibriumConfig()
    analyze: AnalyzeConfig = AnalyzeConfig()
    simulate: SimulateConfig = SimulateConfig()
    poincare: PoincareConfig = PoincareConfig()
    sweep: SweepConfig = SweepConfig()

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def sweep_points(self) -> list[dict]:
        names = list(self.sweep.axes)
        return [dict(zip(names, combo))
                for combo in itertools.product(*(self.sweep.axes[n] for n in names))]

    def with_overrides(self, point: dict) -> "RunConfig":
        """Copy with sweep-axis values substituted."""
        sections = {}
        for name, value in point.items():
            sec = SWEEP_AXES[name]
            sections.setdefault(sec, {})[name] = value
        cfg = self
        for sec, changes in sections.items():
            cfg = dataclasses.replace(cfg, **{sec: dataclasses.replace(getattr(cfg, sec), **changes)})
        return cfg


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _number(path: str, value, kind=float):
    if isinstance(value, str):
        # YAML 1.1 reads exponent literals without a dot (1e-3) as strings
        try:
            value = float(value)
        except ValueError:
            raise ConfigurationError(f"{path} must be a number, got {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{path} must be a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigurationError(f"{path} must be an integer, got {value!r}")
        return int(value)
    value = float(value)
    if not np.isfinite(value):
        raise ConfigurationError(f"{path} must be finite, got {value!r}")
    return value


def _vector(path: str, value) -> tuple:
    items = value if isinstance(value, (list, tuple)) else [value]
    if not items:
        raise ConfigurationError(f"{path} must not be empty")
    return tuple(_number(f"{path}[{i}]", v) for i, v in enumerate(items))


def _section(cls, path: str, data) -> object:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must be a mapping, got {type(data).__name__}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(f"{path}.{unknown[0]}: unknown key")
    values = {}
    for name, raw in data.items():
        default = getattr(cls(), name) if name not in ("axes",) else {}
        p = f"{path}.{name}"
        if isinstance(default, bool):
            if not isinstance(raw, bool):
                raise ConfigurationError(f"{p} must be true or false, got {raw!r}")
            values[name] = raw
        elif isinstance(default, int):
            values[name] = _number(p, raw, int)
        elif isinstance(default, float):
            values[name] = _number(p, raw)
        elif isinstance(default, str):
            if not isinstance(raw, str):
                raise ConfigurationError(f"{p} must be a string, got {raw!r}")
            values[name] = raw
        elif name == "resolutions":
            items = raw if isinstance(raw, (list, tuple)) else [raw]
            values[name] = tuple(_number(f"{p}[{i}]", v, int) for i, v in enumerate(items))
        elif isinstance(default, tuple) or name == "xi":
            values[name] = None if raw is None else _vector(p, raw)
        elif name == "axes":
            values[name] = raw
        else:  # pragma: no cover - all field kinds are handled above
            values[name] = raw
    return cls(**values)


def _validate(cfg: RunConfig) -> None:
    g = cfg.geometry
    for name in ("radius", "height"):
        if not getattr(g, name) > 0.0:
            raise ConfigurationError(f"geometry.{name} must be > 0, got {getattr(g, name)!r}")
    for name, low in (("n_r", 2), ("n_theta", 4), ("n_z", 2)):
        if getattr(g, name) < low:
            raise ConfigurationError(f"geometry.{name} must be >= {low}, got {getattr(g, name)}")
    s = cfg.species
    try:
        build_species(s)
    except ConfigurationError as exc:
        msg = str(exc)
        head = msg.split("[")[0].split(" ")[0]
        raise ConfigurationError(f"species.{msg}" if head in SPECIES_FIELDS else f"species: {msg}") from None
    v = cfg.velocity
    if v.profile not in ("poiseuille", "plug"):
        raise ConfigurationError(f"velocity.profile must be poiseuille or plug, got {v.profile!r}")
    if not v.w_max >= 0.0:
        raise ConfigurationError(f"velocity.w_max must be >= 0, got {v.w_max!r}")
    e = cfg.equilibrium
    if e.mode not in ("balance", "explicit"):
        raise ConfigurationError(f"equilibrium.mode must be balance or explicit, got {e.mode!r}")
    if e.mode == "explicit":
        if e.xi is None or len(e.xi) != len(s.alpha):
            raise ConfigurationError(f"equilibrium.xi must list {len(s.alpha)} values")
        if min(e.xi) <= 0.0:
            raise ConfigurationError("equilibrium.xi must be componentwise > 0")
    a = cfg.analyze
    if a.k < 1:
        raise ConfigurationError(f"analyze.k must be >= 1, got {a.k}")
    if a.method not in ("auto", "dense", "sparse"):
        raise ConfigurationError(f"analyze.method must be auto, dense or sparse, got {a.method!r}")
    m = cfg.simulate
    if not m.t_end > 0.0:
        raise ConfigurationError(f"simulate.t_end must be > 0, got {m.t_end!r}")
    if not m.dt > 0.0:
        raise ConfigurationError(f"simulate.dt must be > 0, got {m.dt!r}")
    if m.delta < 0.0:
        raise ConfigurationError(f"simulate.delta must be >= 0, got {m.delta!r}")
    if m.sample_every < 1:
        raise ConfigurationError("simulate.sample_every must be >= 1")
    if m.k < 1:
        raise ConfigurationError("simulate.k must be >= 1")
    res = cfg.poincare.resolutions
    if not res or any(int(n) != n or n < 4 for n in res):
        raise ConfigurationError("poincare.resolutions must be integers >= 4")
    sw = cfg.sweep
    if sw.k < 1:
        raise ConfigurationError("sweep.k must be >= 1")
    if not isinstance(sw.axes, dict):
        raise ConfigurationError("sweep.axes must be a mapping of axis name to values")
    if cfg.scenario == "sweep" and not sw.axes:
        raise ConfigurationError("sweep.axes must name at least one axis")
    n_points = 1
    for name, values in sw.axes.items():
        if name not in SWEEP_AXES:
            raise ConfigurationError(f"sweep.axes.{name}: unknown axis (allowed: {', '.join(SWEEP_AXES)})")
        if not isinstance(values, (list, tuple)) or len(values) == 0:
            raise ConfigurationError(f"sweep.axes.{name} must be a non-empty list")
        n_points *= len(values)
    if n_points > sw.max_points:
        raise ConfigurationError(f"sweep grid has {n_points} points, above sweep.max_points = {sw.max_points}")


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping")
    known = {f.name: f for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(f"{unknown[0]}: unknown key")
    values = {}
    for name in ("scenario", "output_dir"):
        if name in data:
            if not isinstance(data[name], str):
                raise ConfigurationError(f"{name} must be a string")
            values[name] = data[name]
    if "seed" in data:
        values["seed"] = _number("seed", data["seed"], int)
    sections = {
        "geometry": GeometryConfig, "species": SpeciesConfig, "velocity": VelocityConfig,
        "equilibrium": EquilibriumConfig, "analyze": AnalyzeConfig,
        "simulate": SimulateConfig, "poincare": PoincareConfig, "sweep": SweepConfig,
    }
    for name, cls in sections.items():
        if name in data:
            values[name] = _section(cls, name, data[name])
    if "sweep" in values:
        axes = values["sweep"].axes
        if isinstance(axes, dict):
            clean = {k: tuple(_number(f"sweep.axes.{k}[{i}]", v) for i, v in enumerate(vals))
                     if isinstance(vals, (list, tuple)) else vals for k, vals in axes.items()}
            values["sweep"] = dataclasses.replace(values["sweep"], axes=clean)
    cfg = RunConfig(**values)
    if cfg.scenario not in SCENARIOS:
        raise ConfigurationError(f"scenario must be one of {', '.join(SCENARIOS)}, got {cfg.scenario!r}")
    _validate(cfg)
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: not valid YAML ({exc})") from None
    return parse_config(data or {})


def build_species(s: SpeciesConfig):
    from .model import SpeciesSystem

    return SpeciesSystem(alpha=s.alpha, beta=s.beta, kappa_f=s.kappa_f, kappa_b=s.kappa_b,
                         k_ad=s.k_ad, k_de=s.k_de, d_bulk=s.d_bulk, d_surf=s.d_surf)
