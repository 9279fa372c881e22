"""Run configuration: YAML files, validation and dotted-path overrides.

Everything a run needs lives in one file. Sections:

    space      design space (params + merge groups); the string ``table1``
               selects the built-in 11-parameter space
    workloads  named workload profiles
    objective  workload names whose CPI is averaged per design
    model      analytical model constants, role mapping and fixed roles
    area       area model coefficients plus ``limit`` in mm^2
    fnn        metric input range, group centers, preferences
    trainer    training schedule
    hf         evaluator selection and HF budget
    harness    oracle and baseline settings
    seeds      list of seeds; output_dir: where artifacts go
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .design_space import TABLE1, DesignSpace, DesignSpaceError, smallest_point
from .hf_eval import SubprocessConfig, SyntheticHfConfig
from .lf_model import AreaModel, ModelConfig, ModelError, WorkloadProfile, area
from .trainer import Schedule

DEFAULT_CONFIG = "table1.yaml"
EVALUATORS = ("synthetic", "subprocess")
SECTIONS = ("space", "workloads", "objective", "model", "area", "fnn", "trainer", "hf", "harness", "seeds",
            "output_dir")


class ConfigError(ValueError):
    pass


@dataclass
class Preference:
    group: str
    low: float
    enough: float
    target: str
    strength: float = 5.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FnnInit:
    metric_name: str = "IPC"
    metric_range: tuple | None = None
    group_centers: dict = field(default_factory=dict)
    group_slope: float = 6.0
    init_noise: float = 0.01
    preferences: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "metric_name": self.metric_name,
            "metric_range": None if self.metric_range is None else list(self.metric_range),
            "group_centers": dict(self.group_centers),
            "group_slope": self.group_slope,
            "init_noise": self.init_noise,
            "preferences": [p.to_dict() for p in self.preferences],
        }


@dataclass
class HfSettings:
    evaluator: str = "synthetic"
    budget: int = 10
    synthetic: SyntheticHfConfig = field(default_factory=SyntheticHfConfig)
    subprocess: SubprocessConfig = field(default_factory=SubprocessConfig)

    def to_dict(self) -> dict:
        return {"evaluator": self.evaluator, "budget": self.budget,
                "synthetic": self.synthetic.to_dict(), "subprocess": self.subprocess.to_dict()}


@dataclass
class HarnessSettings:
    exhaustive_cap: int = 10000
    sample_floor: int = 500
    baseline_budget: int = 10
    hill_climb_restarts: int = 4
    external_baselines: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__, external_baselines=list(self.external_baselines))


@dataclass
class RunConfig:
    space: DesignSpace
    workloads: dict
    objective: list
    model: ModelConfig
    area_model: AreaModel
    area_limit: float
    fnn: FnnInit
    trainer: Schedule
    hf: HfSettings
    harness: HarnessSettings
    seeds: list
    output_dir: str
    space_spec: object = None

    @property
    def objective_workloads(self) -> list:
        return [self.workloads[n] for n in self.objective]

    def to_dict(self) -> dict:
        return {
            "space": self.space_spec if isinstance(self.space_spec, str) else self.space.to_dict(),
            "workloads": {n: w.to_dict() for n, w in self.workloads.items()},
            "objective": list(self.objective),
            "model": self.model.to_dict(),
            "area": dict(self.area_model.to_dict(), limit=self.area_limit),
            "fnn": self.fnn.to_dict(),
            "trainer": self.trainer.to_dict(),
            "hf": self.hf.to_dict(),
            "harness": self.harness.to_dict(),
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return parse_config(d)


def _section(d: dict, name: str, default=None):
    v = d.get(name, default)
    if v is None:
        return {} if default is None else default
    return v


def parse_config(raw: dict) -> RunConfig:
    """Build and fully validate a RunConfig; every problem raises ConfigError naming the field."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    try:
        space_spec = raw.get("space", "table1")
        if space_spec == "table1":
            space = DesignSpace.from_dict(TABLE1)
        elif isinstance(space_spec, dict):
            space = DesignSpace.from_dict(space_spec)
        else:
            raise ConfigError(f"space: expected 'table1' or a mapping, got {space_spec!r}")
    except (DesignSpaceError, KeyError, TypeError) as exc:
        raise ConfigError(f"space: {exc}") from exc

    wl_raw = _section(raw, "workloads")
    if not wl_raw:
        raise ConfigError("workloads: at least one workload profile is required")
    workloads = {}
    for name, d in wl_raw.items():
        try:
            workloads[name] = WorkloadProfile.from_dict(str(name), d)
        except (ModelError, TypeError, ValueError) as exc:
            raise ConfigError(f"workloads.{name}: {exc}") from exc
    objective = raw.get("objective", [next(iter(workloads))])
    if isinstance(objective, str):
        objective = [objective]
    for n in objective:
        if n not in workloads:
            raise ConfigError(f"objective: unknown workload {n!r}")
    if not objective:
        raise ConfigError("objective: at least one workload name is required")

    try:
        model = ModelConfig.from_dict(_section(raw, "model"))
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    area_raw = dict(_section(raw, "area"))
    if "limit" not in area_raw:
        raise ConfigError("area.limit: required")
    try:
        area_limit = float(area_raw.pop("limit"))
        area_model = AreaModel.from_dict(area_raw)
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"area: {exc}") from exc
    if not (math.isfinite(area_limit) and area_limit > 0):
        raise ConfigError("area.limit: must be a positive number")
    try:
        a0 = area(space, smallest_point(space), area_model, model)
    except ModelError as exc:
        raise ConfigError(f"model.roles: {exc}") from exc
    if a0 > area_limit:
        raise ConfigError(f"area.limit: {area_limit:g} mm2 is below the smallest design's area {a0:.4f} mm2")

    fnn = _parse_fnn(_section(raw, "fnn"), space)
    try:
        trainer = Schedule.from_dict(_section(raw, "trainer"))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"trainer: {exc}") from exc

    hf_raw = dict(_section(raw, "hf"))
    try:
        hf = HfSettings(
            evaluator=str(hf_raw.get("evaluator", "synthetic")),
            budget=int(hf_raw.get("budget", 10)),
            synthetic=SyntheticHfConfig.from_dict(hf_raw.get("synthetic") or {}),
            subprocess=SubprocessConfig.from_dict(hf_raw.get("subprocess") or {}),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"hf: {exc}") from exc
    if hf.evaluator not in EVALUATORS:
        raise ConfigError(f"hf.evaluator: expected one of {EVALUATORS}, got {hf.evaluator!r}")
    if hf.budget < 0:
        raise ConfigError("hf.budget: must be >= 0")
    if hf.budget and hf.budget < trainer.subset_size + 1:
        raise ConfigError(f"hf.budget: {hf.budget} cannot cover the transition (subset_size + 1 = "
                          f"{trainer.subset_size + 1})")
    if hf.evaluator == "subprocess" and hf.budget and not hf.subprocess.command:
        raise ConfigError("hf.subprocess.command: required for the subprocess evaluator")

    h_raw = dict(_section(raw, "harness"))
    try:
        harness = HarnessSettings(
            exhaustive_cap=int(h_raw.pop("exhaustive_cap", 10000)),
            sample_floor=int(h_raw.pop("sample_floor", 500)),
            baseline_budget=int(h_raw.pop("baseline_budget", 10)),
            hill_climb_restarts=int(h_raw.pop("hill_climb_restarts", 4)),
            external_baselines=list(h_raw.pop("external_baselines", []) or []),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"harness: {exc}") from exc
    if h_raw:
        raise ConfigError(f"harness: unknown fields {sorted(h_raw)}")
    if harness.sample_floor < 1 or harness.baseline_budget < 1:
        raise ConfigError("harness: sample_floor and baseline_budget must be >= 1")

    seeds = raw.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = [seeds]
    try:
        seeds = [int(s) for s in seeds]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seeds: {exc}") from exc
    if not seeds:
        raise ConfigError("seeds: at least one seed is required")
    return RunConfig(space=space, workloads=workloads, objective=list(objective), model=model,
                     area_model=area_model, area_limit=area_limit, fnn=fnn, trainer=trainer, hf=hf,
                     harness=harness, seeds=seeds, output_dir=str(raw.get("output_dir", "runs")),
                     space_spec=space_spec if isinstance(space_spec, str) else None)


def _parse_fnn(d: dict, space: DesignSpace) -> FnnInit:
    d = dict(d)
    try:
        rng = d.get("metric_range")
        fnn = FnnInit(
            metric_name=str(d.get("metric_name", "IPC")),
            metric_range=None if rng is None else (float(rng[0]), float(rng[1])),
            group_centers={str(k): float(v) for k, v in (d.get("group_centers") or {}).items()},
            group_slope=float(d.get("group_slope", 6.0)),
            init_noise=float(d.get("init_noise", 0.01)),
            preferences=[Preference(str(p["group"]), float(p["low"]), float(p["enough"]), str(p["target"]),
                                    float(p.get("strength", 5.0))) for p in (d.get("preferences") or [])],
        )
    except (TypeError, ValueError, KeyError, IndexError) as exc:
        raise ConfigError(f"fnn: {exc}") from exc
    groups = {g.name for g in space.groups}
    for g, c in fnn.group_centers.items():
        if g not in groups:
            raise ConfigError(f"fnn.group_centers: unknown group {g!r}")
        if not 0.0 <= c <= 1.0:
            raise ConfigError(f"fnn.group_centers.{g}: center {c} outside [0, 1]")
    for p in fnn.preferences:
        if p.group not in groups:
            raise ConfigError(f"fnn.preferences: unknown group {p.group!r}")
        if p.target not in space.names:
            raise ConfigError(f"fnn.preferences: unknown target parameter {p.target!r}")
    if fnn.metric_range is not None and not fnn.metric_range[0] < fnn.metric_range[1]:
        raise ConfigError("fnn.metric_range: expected [lo, hi] with lo < hi")
    return fnn


def read_config_file(path: str | Path | None = None) -> dict:
    """Raw mapping from a YAML file; ``None`` or a bare packaged name reads the shipped configs."""
    if path is None:
        path = DEFAULT_CONFIG
    p = Path(path)
    try:
        if not p.exists() and p.parent == Path("."):
            text = resources.files("fnndse.configs").joinpath(p.name).read_text()
        else:
            text = p.read_text()
    except (OSError, FileNotFoundError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    return raw or {}


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as YAML scalars or lists."""
    out = copy.deepcopy(raw)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if not all(parts):
            raise ConfigError(f"override {item!r}: empty path component")
        try:
            value = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"override {item!r}: {exc}") from exc
        node = out
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return out


def load_config(path: str | Path | None = None, overrides=None, seed: int | None = None) -> RunConfig:
    raw = apply_overrides(read_config_file(path), overrides)
    if seed is not None:
        raw["seeds"] = [int(seed)]
    return parse_config(raw)


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
