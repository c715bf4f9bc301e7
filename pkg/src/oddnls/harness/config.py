"""YAML experiment configuration with a single defaults block and path-named validation errors.

Layout (every section optional, unknown keys rejected)::

    experiment: dichotomy
    seed: 0
    output_dir: out
    defaults: {p: 7, omega: 1, half_length: 60, n_points: 8192, mu0: null, R: 5}
    params: {p, omega}                      # override defaults.p / defaults.omega
    grid: {n_points, half_length}           # override defaults.n_points / defaults.half_length
    evolve: {dt_init, dt_min, t_max, cfl_safety, blowup_factor, conservation_tol,
             odd_project_every, record_every, snapshot_every, sponge: {width, strength} | null}
    data_spec: {y, lambda0, nu0, k_sign_target, newton_tol, amplitude_scale}
    classifier: {decay_threshold, shrink_factor, n_windows, decay_window_start,
                 strichartz_window_start}
    modulation: {R, mu0, y_min, y_max, y_step}
    virial: {R, R_list, t_max, snapshot_every, dt}
    blowup_ineq: {n_fields, R}
    coercivity: {n_points, half_length, R, y}
    min_seq: {y_list}
    overlap: {y_min, y_max, n_y, tolerance}
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from ..evolve import EvolveConfig, SpongeConfig
from ..grid import Grid
from ..modulation import default_mu0
from ..soliton import GroundStateParams
from .experiments import ClassifierConfig, ThresholdDataSpec


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending field path."""


class Experiment(str, enum.Enum):
    DICHOTOMY = "dichotomy"
    MINIMIZING_SEQUENCE = "min-seq"
    OVERLAP_ASYMPTOTICS = "overlap-asymptotics"
    COERCIVITY = "coercivity"
    MODULATION_AUDIT = "modulation-audit"
    VIRIAL_AUDIT = "virial-audit"
    BLOWUP_INEQUALITY = "blowup-ineq"
    VERIFY_ALL = "verify-all"


DEFAULTS: dict[str, Any] = {
    "p": 7.0,
    "omega": 1.0,
    "half_length": 60.0,
    "n_points": 8192,
    "mu0": None,
    "R": 5.0,
}


@dataclass(frozen=True)
class ModulationSettings:
    R: float = 5.0
    mu0: float | None = None
    y_min: float = 6.0
    y_max: float = 12.0
    y_step: float = 1.0


@dataclass(frozen=True)
class VirialSettings:
    R: float = 20.0
    R_list: tuple[float, ...] = (5.0, 10.0, 20.0, 40.0)
    t_max: float = 2.0
    snapshot_every: float = 0.01
    dt: float = 2.5e-4


@dataclass(frozen=True)
class BlowupIneqSettings:
    n_fields: int = 200
    R: float = 5.0


@dataclass(frozen=True)
class CoercivitySettings:
    n_points: int = 2048
    half_length: float = 40.0
    R: float = 10.0
    y: float = 25.0


@dataclass(frozen=True)
class MinSeqSettings:
    y_list: tuple[float, ...] = (4.0, 6.0, 8.0, 10.0, 12.0)


@dataclass(frozen=True)
class OverlapSettings:
    y_min: float = 4.0
    y_max: float = 10.0
    n_y: int = 13
    tolerance: float = 0.05


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment = Experiment.DICHOTOMY
    params: GroundStateParams = GroundStateParams()
    grid: Grid = Grid(8192, 60.0)
    evolve: EvolveConfig = EvolveConfig(t_max=40.0)
    data_spec: ThresholdDataSpec = ThresholdDataSpec()
    classifier: ClassifierConfig = ClassifierConfig()
    modulation: ModulationSettings = ModulationSettings()
    virial: VirialSettings = VirialSettings()
    blowup_ineq: BlowupIneqSettings = BlowupIneqSettings()
    coercivity: CoercivitySettings = CoercivitySettings()
    min_seq: MinSeqSettings = MinSeqSettings()
    overlap: OverlapSettings = OverlapSettings()
    seed: int = 0
    output_dir: str = "out"
    defaults: dict = field(default_factory=lambda: dict(DEFAULTS))

    @property
    def mu0(self) -> float:
        return self.modulation.mu0 if self.modulation.mu0 is not None else default_mu0(self.params)

    def to_dict(self) -> dict:
        def conv(v):
            if isinstance(v, enum.Enum):
                return v.value
            if hasattr(v, "to_dict"):
                return v.to_dict()
            if hasattr(v, "__dataclass_fields__"):
                return {f.name: conv(getattr(v, f.name)) for f in fields(v)}
            if isinstance(v, (list, tuple)):
                return [conv(x) for x in v]
            if isinstance(v, dict):
                return {k: conv(x) for k, x in v.items()}
            return v

        return {f.name: conv(getattr(self, f.name)) for f in fields(self)}


# --- validation -----------------------------------------------------------------------------

def _number(path: str, v, *, integer=False, positive=False, nonneg=False, allow_none=False):
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer and (not float(v).is_integer()):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if not math.isfinite(float(v)):
        raise ConfigError(f"{path}: must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{path}: must be > 0, got {v}")
    if nonneg and v < 0:
        raise ConfigError(f"{path}: must be >= 0, got {v}")
    return int(v) if integer else float(v)


def _section(raw: dict, name: str, allowed: set[str]) -> dict:
    sec = raw.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{name}: expected a mapping")
    for k in sec:
        if k not in allowed:
            raise ConfigError(f"{name}.{k}: unknown field (allowed: {', '.join(sorted(allowed))})")
    return sec


_POSITIVE = dict(positive=True)


def _fill(sec: dict, name: str, spec: dict) -> dict:
    out = {}
    for key, opts in spec.items():
        if key in sec:
            out[key] = _number(f"{name}.{key}", sec[key], **opts)
    return out


def _guard(name: str, ctor, **kwargs):
    try:
        return ctor(**kwargs)
    except ValueError as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith(name) else f"{name}: {msg}") from exc


def parse_config(raw: dict | None, experiment: str | None = None) -> ExperimentConfig:
    """Validate a raw mapping and build the config; errors name the field path."""
    raw = dict(raw or {})
    top = {
        "experiment", "seed", "output_dir", "defaults", "params", "grid", "evolve", "data_spec",
        "classifier", "modulation", "virial", "blowup_ineq", "coercivity", "min_seq", "overlap",
    }
    for k in raw:
        if k not in top:
            raise ConfigError(f"{k}: unknown top-level field")

    d = dict(DEFAULTS)
    dsec = _section(raw, "defaults", set(DEFAULTS))
    d.update(
        _fill(
            dsec,
            "defaults",
            {
                "p": _POSITIVE,
                "omega": _POSITIVE,
                "half_length": _POSITIVE,
                "n_points": dict(integer=True, positive=True),
                "mu0": dict(positive=True, allow_none=True),
                "R": _POSITIVE,
            },
        )
    )
    if "mu0" in dsec and dsec["mu0"] is None:
        d["mu0"] = None

    psec = _fill(_section(raw, "params", {"p", "omega"}), "params", {"p": _POSITIVE, "omega": _POSITIVE})
    p = psec.get("p", d["p"])
    if not p > 5:
        raise ConfigError(f"params.p: must exceed 5 (L2-supercritical), got {p}")
    params = GroundStateParams(p, psec.get("omega", d["omega"]))

    gsec = _fill(
        _section(raw, "grid", {"n_points", "half_length"}),
        "grid",
        {"n_points": dict(integer=True, positive=True), "half_length": _POSITIVE},
    )
    n = gsec.get("n_points", d["n_points"])
    if n < 64 or n % 2:
        raise ConfigError(f"grid.n_points: must be even and >= 64, got {n}")
    grid = Grid(n, gsec.get("half_length", d["half_length"]))

    esec = _section(raw, "evolve", {f.name for f in fields(EvolveConfig)})
    ekw = _fill(
        esec,
        "evolve",
        {
            "dt_init": _POSITIVE,
            "dt_min": _POSITIVE,
            "t_max": _POSITIVE,
            "cfl_safety": _POSITIVE,
            "blowup_factor": _POSITIVE,
            "conservation_tol": _POSITIVE,
            "odd_project_every": dict(integer=True, nonneg=True),
            "record_every": _POSITIVE,
            "snapshot_every": dict(positive=True, allow_none=True),
        },
    )
    if "adaptive" in esec:
        if not isinstance(esec["adaptive"], bool):
            raise ConfigError("evolve.adaptive: expected true or false")
        ekw["adaptive"] = esec["adaptive"]
    if esec.get("sponge") is not None:
        ssec = esec["sponge"]
        if not isinstance(ssec, dict):
            raise ConfigError("evolve.sponge: expected a mapping or null")
        for k in ssec:
            if k not in ("width", "strength"):
                raise ConfigError(f"evolve.sponge.{k}: unknown field")
        skw = _fill(ssec, "evolve.sponge", {"width": _POSITIVE, "strength": _POSITIVE})
        ekw["sponge"] = SpongeConfig(**skw)
    ekw.setdefault("t_max", 40.0)
    evolve_cfg = _guard("evolve", EvolveConfig, **ekw)
    if evolve_cfg.sponge is not None and evolve_cfg.sponge.width >= grid.half_length:
        raise ConfigError("evolve.sponge.width: must be smaller than the grid half-length")

    dsp = _section(raw, "data_spec", {f.name for f in fields(ThresholdDataSpec)})
    dkw = _fill(
        dsp,
        "data_spec",
        {
            "y": _POSITIVE,
            "lambda0": _POSITIVE,
            "nu0": _POSITIVE,
            "newton_tol": _POSITIVE,
            "amplitude_scale": _POSITIVE,
        },
    )
    if "k_sign_target" in dsp:
        ks = str(dsp["k_sign_target"]).lower()
        if ks not in ("positive", "negative"):
            raise ConfigError(f"data_spec.k_sign_target: expected positive or negative, got {dsp['k_sign_target']!r}")
        dkw["k_sign_target"] = ks
    data_spec = _guard("data_spec", ThresholdDataSpec, **dkw)

    csec = _section(raw, "classifier", {f.name for f in fields(ClassifierConfig)})
    ckw = _fill(
        csec,
        "classifier",
        {
            "decay_threshold": {},
            "shrink_factor": _POSITIVE,
            "n_windows": dict(integer=True, positive=True),
            "decay_window_start": dict(nonneg=True),
            "strichartz_window_start": dict(nonneg=True),
        },
    )
    classifier = _guard("classifier", ClassifierConfig, **ckw)

    msec = _fill(
        _section(raw, "modulation", {f.name for f in fields(ModulationSettings)}),
        "modulation",
        {"R": _POSITIVE, "mu0": dict(positive=True, allow_none=True), "y_min": _POSITIVE,
         "y_max": _POSITIVE, "y_step": _POSITIVE},
    )
    msec.setdefault("R", d["R"])
    msec.setdefault("mu0", d["mu0"])
    modulation = ModulationSettings(**msec)
    if modulation.y_min <= modulation.R:
        raise ConfigError(f"modulation.y_min: must exceed modulation.R={modulation.R}")
    if modulation.y_max < modulation.y_min:
        raise ConfigError("modulation.y_max: must be >= modulation.y_min")

    vraw = _section(raw, "virial", {f.name for f in fields(VirialSettings)})
    vsec = _fill(
        vraw,
        "virial",
        {"R": _POSITIVE, "t_max": _POSITIVE, "snapshot_every": _POSITIVE, "dt": _POSITIVE},
    )
    if "R_list" in vraw:
        vsec["R_list"] = tuple(
            _number(f"virial.R_list[{i}]", r, positive=True) for i, r in enumerate(_list("virial.R_list", vraw["R_list"]))
        )
    virial = VirialSettings(**vsec)

    bsec = _fill(
        _section(raw, "blowup_ineq", {"n_fields", "R"}),
        "blowup_ineq",
        {"n_fields": dict(integer=True, positive=True), "R": _POSITIVE},
    )
    blowup = BlowupIneqSettings(**bsec)

    co = _fill(
        _section(raw, "coercivity", {"n_points", "half_length", "R", "y"}),
        "coercivity",
        {"n_points": dict(integer=True, positive=True), "half_length": _POSITIVE, "R": _POSITIVE,
         "y": dict(nonneg=True)},
    )
    coercivity = CoercivitySettings(**co)
    if coercivity.y <= coercivity.R:
        raise ConfigError(f"coercivity.y: cutoff coercivity needs y > R={coercivity.R}")

    mraw = _section(raw, "min_seq", {"y_list"})
    min_seq = MinSeqSettings()
    if "y_list" in mraw:
        ys = tuple(_number(f"min_seq.y_list[{i}]", y, positive=True) for i, y in enumerate(_list("min_seq.y_list", mraw["y_list"])))
        if any(b <= a for a, b in zip(ys, ys[1:])):
            raise ConfigError("min_seq.y_list: must be strictly increasing")
        min_seq = MinSeqSettings(ys)

    osec = _fill(
        _section(raw, "overlap", {f.name for f in fields(OverlapSettings)}),
        "overlap",
        {"y_min": _POSITIVE, "y_max": _POSITIVE, "n_y": dict(integer=True, positive=True), "tolerance": _POSITIVE},
    )
    overlap = OverlapSettings(**osec)
    if overlap.y_max <= overlap.y_min:
        raise ConfigError("overlap.y_max: must exceed overlap.y_min")

    exp_name = experiment or raw.get("experiment", Experiment.DICHOTOMY.value)
    try:
        exp = Experiment(exp_name)
    except ValueError:
        raise ConfigError(
            f"experiment: unknown experiment {exp_name!r} (choose from {', '.join(e.value for e in Experiment)})"
        ) from None
    seed = _number("seed", raw.get("seed", 0), integer=True, nonneg=True)
    out = raw.get("output_dir", "out")
    if not isinstance(out, str):
        raise ConfigError("output_dir: expected a string path")
    return ExperimentConfig(
        experiment=exp,
        params=params,
        grid=grid,
        evolve=evolve_cfg,
        data_spec=data_spec,
        classifier=classifier,
        modulation=modulation,
        virial=virial,
        blowup_ineq=blowup,
        coercivity=coercivity,
        min_seq=min_seq,
        overlap=overlap,
        seed=seed,
        output_dir=out,
        defaults=d,
    )


def _list(path: str, v) -> list:
    if not isinstance(v, (list, tuple)) or not v:
        raise ConfigError(f"{path}: expected a non-empty list")
    return list(v)


def load_config(path: str | Path | None, experiment: str | None = None) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            raw = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"<file>: not valid YAML ({exc})") from exc
        if not isinstance(raw, dict):
            raise ConfigError("<root>: expected a mapping at the top level")
    return parse_config(raw, experiment)


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes)
