"""Differentiable interval-style CPI model (low fidelity) and the fast area model.

The CPI model is a throughput-bound model: every resource caps sustainable IPC
and a soft minimum over the caps gives IPC. All pieces are closed-form, so the
gradient with respect to the raw parameter values is computed analytically.

Each design parameter plays a *role* (l1_set, decode, rob, ...). Roles that are
not part of a design space take a fixed value from the model config, which is
how reduced spaces are evaluated with the same model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .design_space import DesignPoint, DesignSpace

ROLES = (
    "l1_set", "l1_way", "l2_set", "l2_way", "mshr", "decode",
    "rob", "mem_fu", "int_fu", "fp_fu", "iq",
)
BOUND_NAMES = ("decode", "int", "mem", "fp", "rob", "iq", "ilp")
# relative one-step CPI gain a masked action must promise; 0 admits float-noise plateaus
EPS_G = 1e-3


class ModelError(ValueError):
    pass


class NonPositiveIpc(ModelError):
    """Soft minimum went non-positive: tau is too large for the bound scale."""


@dataclass(frozen=True)
class WorkloadProfile:
    name: str
    f_int: float
    f_mem: float
    f_fp: float
    footprint_bytes: float
    ilp_cap: float
    mlp_cap: float
    lat_int: float = 1.0
    lat_fp: float = 4.0
    lat_l1_hit: float = 3.0
    lat_l2: float = 14.0
    lat_dram: float = 120.0
    miss_exponent: float = 0.5

    def __post_init__(self):
        fr = (self.f_int, self.f_mem, self.f_fp)
        if any(f < 0 for f in fr):
            raise ModelError(f"workload {self.name!r}: instruction fractions must be non-negative")
        if abs(math.fsum(fr) - 1.0) > 1e-9:
            raise ModelError(f"workload {self.name!r}: f_int + f_mem + f_fp = {math.fsum(fr):g}, expected 1")
        for attr in ("lat_int", "lat_fp", "lat_l1_hit", "lat_l2", "lat_dram", "footprint_bytes", "miss_exponent"):
            if not getattr(self, attr) > 0:
                raise ModelError(f"workload {self.name!r}: {attr} must be positive")
        if self.ilp_cap < 1 or self.mlp_cap < 1:
            raise ModelError(f"workload {self.name!r}: ilp_cap and mlp_cap must be >= 1")

    @classmethod
    def from_dict(cls, name: str, d: dict) -> "WorkloadProfile":
        return cls(name=name, **{k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d.pop("name")
        return d


@dataclass(frozen=True, eq=False)
class ModelConfig:
    tau: float = 0.25
    delta: float = 1e-3
    line_bytes: float = 64.0
    roles: dict = field(default_factory=lambda: {r: r for r in ROLES})
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.tau <= 0 or self.delta <= 0 or self.line_bytes <= 0:
            raise ModelError("tau, delta and line_bytes must be positive")
        unknown = set(self.roles) - set(ROLES)
        if unknown:
            raise ModelError(f"unknown model roles {sorted(unknown)}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        roles = d.pop("roles", None)
        fixed = d.pop("fixed", None)
        kw = {k: float(v) for k, v in d.items()}
        if roles is not None:
            kw["roles"] = dict(roles)
        if fixed is not None:
            kw["fixed"] = {k: float(v) for k, v in fixed.items()}
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "tau": self.tau, "delta": self.delta, "line_bytes": self.line_bytes,
            "roles": dict(self.roles), "fixed": dict(self.fixed),
        }


@dataclass(frozen=True, eq=False)
class AreaModel:
    base_mm2: float = 0.5
    cache_per_kb: float = 0.02
    mshr: float = 0.05
    decode_sq: float = 0.15
    rob: float = 0.008
    fu: float = 0.3
    iq: float = 0.02

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not (math.isfinite(v) and v >= 0):
                raise ModelError(f"area coefficient {k} must be finite and non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "AreaModel":
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class LfResult:
    cpi: float
    ipc: float
    gradient: np.ndarray
    bounds: dict
    mean_latency: float


@lru_cache(maxsize=64)
def _role_layout(space: DesignSpace, cfg: ModelConfig) -> tuple:
    """For each role, either ('param', index) or ('fixed', value)."""
    layout = []
    for role in ROLES:
        pname = cfg.roles.get(role)
        if pname is not None and pname in space.names:
            layout.append((0, space.index_of(pname)))
        elif role in cfg.fixed:
            layout.append((1, float(cfg.fixed[role])))
        else:
            raise ModelError(f"role {role!r} is neither a space parameter nor fixed in the model config")
    return tuple(layout)


def role_values(space: DesignSpace, point: DesignPoint, cfg: ModelConfig) -> dict:
    out = {}
    for role, (kind, ref) in zip(ROLES, _role_layout(space, cfg)):
        out[role] = space.params[ref].values[point[ref]] if kind == 0 else ref
    return out


def _softmin(bounds, tau):
    m = min(bounds)
    ex = [math.exp(-(b - m) / tau) for b in bounds]
    s = math.fsum(ex)
    return m - tau * math.log(s), [e / s for e in ex]


def evaluate_values(v: dict, w: WorkloadProfile, cfg: ModelConfig) -> tuple:
    """Core model on role values. Returns (ipc, d_ipc/d_role dict, bounds dict, mean latency)."""
    line = cfg.line_bytes
    alpha = w.miss_exponent
    F = w.footprint_bytes

    l1 = v["l1_set"] * v["l1_way"] * line
    r1 = F / l1
    if r1 <= 1.0:
        m1 = r1 ** alpha
        dm1_dl1 = -alpha * m1 / l1
    else:
        m1, dm1_dl1 = 1.0, 0.0
    l2 = v["l2_set"] * v["l2_way"] * line
    r2 = F / l2
    if r2 <= 1.0:
        m2 = r2 ** alpha
        dm2_dl2 = -alpha * m2 / l2
    else:
        m2, dm2_dl2 = 1.0, 0.0
    # right-derivative at the cap: one more MSHR past the MLP limit buys nothing
    if v["mshr"] < w.mlp_cap:
        overlap, do_dn = v["mshr"], 1.0
    else:
        overlap, do_dn = w.mlp_cap, 0.0

    dram = w.lat_dram / overlap
    amat = w.lat_l1_hit + m1 * (w.lat_l2 + m2 * dram)
    lam = w.f_int * w.lat_int + w.f_fp * w.lat_fp + w.f_mem * amat

    d = cfg.delta
    ilp = w.ilp_cap
    bounds = (
        v["decode"],
        v["int_fu"] / max(w.f_int, d),
        v["mem_fu"] / max(w.f_mem, d),
        v["fp_fu"] / max(w.f_fp, d),
        v["rob"] / lam,
        v["iq"] * ilp / lam,
        ilp,
    )
    ipc, wts = _softmin(bounds, cfg.tau)
    if not ipc > 0:
        raise NonPositiveIpc(f"soft-min IPC {ipc:g} <= 0 (tau={cfg.tau:g}, min bound {min(bounds):g})")

    w_dec, w_int, w_mem, w_fp, w_rob, w_iq, _ = wts
    dipc_dlam = -(w_rob * v["rob"] + w_iq * v["iq"] * ilp) / (lam * lam)
    dipc_damat = dipc_dlam * w.f_mem
    dipc_dm1 = dipc_damat * (w.lat_l2 + m2 * dram)
    dipc_dm2 = dipc_damat * m1 * dram
    dipc_do = dipc_damat * (-m1 * m2 * w.lat_dram / (overlap * overlap))
    dipc_dl1 = dipc_dm1 * dm1_dl1
    dipc_dl2 = dipc_dm2 * dm2_dl2

    grad = {
        "l1_set": dipc_dl1 * v["l1_way"] * line,
        "l1_way": dipc_dl1 * v["l1_set"] * line,
        "l2_set": dipc_dl2 * v["l2_way"] * line,
        "l2_way": dipc_dl2 * v["l2_set"] * line,
        "mshr": dipc_do * do_dn,
        "decode": w_dec,
        "rob": w_rob / lam,
        "mem_fu": w_mem / max(w.f_mem, d),
        "int_fu": w_int / max(w.f_int, d),
        "fp_fu": w_fp / max(w.f_fp, d),
        "iq": w_iq * ilp / lam,
    }
    return ipc, grad, dict(zip(BOUND_NAMES, bounds)), lam


def lf_evaluate(space: DesignSpace, point: DesignPoint, workload: WorkloadProfile,
                cfg: ModelConfig | None = None) -> LfResult:
    """Evaluate CPI, IPC and dCPI/dvalue for every parameter of ``space``."""
    cfg = cfg or ModelConfig()
    layout = _role_layout(space, cfg)
    v = {}
    for role, (kind, ref) in zip(ROLES, layout):
        v[role] = space.params[ref].values[point[ref]] if kind == 0 else ref
    ipc, dipc, bounds, lam = evaluate_values(v, workload, cfg)
    cpi = 1.0 / ipc
    scale = -cpi * cpi
    grad = np.zeros(space.n_params)
    for role, (kind, ref) in zip(ROLES, layout):
        if kind == 0:
            grad[ref] = scale * dipc[role]
    return LfResult(cpi=cpi, ipc=ipc, gradient=grad, bounds=bounds, mean_latency=lam)


def lf_evaluate_mean(space: DesignSpace, point: DesignPoint, workloads, cfg: ModelConfig | None = None) -> LfResult:
    """CPI averaged over several workload profiles (general-purpose objective)."""
    results = [lf_evaluate(space, point, w, cfg) for w in workloads]
    if len(results) == 1:
        return results[0]
    cpi = math.fsum(r.cpi for r in results) / len(results)
    grad = np.mean([r.gradient for r in results], axis=0)
    bounds = {k: math.fsum(r.bounds[k] for r in results) / len(results) for k in BOUND_NAMES}
    lam = math.fsum(r.mean_latency for r in results) / len(results)
    return LfResult(cpi=cpi, ipc=1.0 / cpi, gradient=grad, bounds=bounds, mean_latency=lam)


def lf_action_mask(result: LfResult, space: DesignSpace, point: DesignPoint, eps_g: float = EPS_G) -> np.ndarray:
    """Parameters whose next increment is predicted to cut CPI by more than ``eps_g`` (relative).

    The prediction is first order: gradient times the step to the next candidate.
    With ``eps_g == 0`` this is just ``gradient < 0``.
    """
    mask = np.zeros(space.n_params, dtype=bool)
    for j, p in enumerate(space.params):
        if space.at_max(point, j):
            continue
        step = p.values[point[j] + 1] - p.values[point[j]]
        mask[j] = result.gradient[j] * step < -eps_g * result.cpi
    return mask


def area(space: DesignSpace, point: DesignPoint, area_model: AreaModel | None = None,
         cfg: ModelConfig | None = None) -> float:
    """Area in mm^2: linear in every resource, quadratic in decode width."""
    am = area_model or AreaModel()
    cfg = cfg or ModelConfig()
    v = role_values(space, point, cfg)
    kb = cfg.line_bytes / 1024.0
    cache_kb = (v["l1_set"] * v["l1_way"] + v["l2_set"] * v["l2_way"]) * kb
    return (
        am.base_mm2
        + am.cache_per_kb * cache_kb
        + am.mshr * v["mshr"]
        + am.decode_sq * v["decode"] ** 2
        + am.rob * v["rob"]
        + am.fu * (v["mem_fu"] + v["int_fu"] + v["fp_fu"])
        + am.iq * v["iq"]
    )
