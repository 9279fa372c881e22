"""High-fidelity evaluators.

``SyntheticHf`` stands in for RTL simulation: it inflates the analytical CPI,
adds a reorder-buffer stall penalty the analytical model does not see, and a
small seeded pseudo-noise term. ``SubprocessHf`` drives an external simulator
over a line-delimited JSON protocol:

    request  (one line on stdin):  {"l1_set": 32, ..., "workload": "fft"}
    response (one line on stdout): {"cpi": 1.23}  or  {"error": "text"}
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import subprocess
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .design_space import DesignPoint, DesignSpace
from .lf_model import ModelConfig, WorkloadProfile, lf_evaluate, role_values

log = logging.getLogger(__name__)


class EvaluatorError(RuntimeError):
    pass


class EvaluatorTimeout(EvaluatorError):
    pass


class EvaluatorCrash(EvaluatorError):
    pass


class MalformedResponse(EvaluatorError):
    pass


class HfEvaluator(Protocol):
    cost_estimate: float

    def evaluate(self, point: DesignPoint, workload: WorkloadProfile) -> float: ...


@dataclass(frozen=True)
class SyntheticHfConfig:
    bias: float = 0.05
    rob_stall_coeff: float = 0.5
    noise_amplitude: float = 0.01
    seed: int = 0
    rob_demand_factor: float = 1.5

    def __post_init__(self):
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        if self.bias <= -1 or self.rob_stall_coeff < 0 or self.rob_demand_factor <= 0:
            raise ValueError("bias must be > -1, rob_stall_coeff >= 0 and rob_demand_factor > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticHfConfig":
        return cls(bias=float(d.get("bias", 0.05)), rob_stall_coeff=float(d.get("rob_stall_coeff", 0.5)),
                   noise_amplitude=float(d.get("noise_amplitude", 0.01)), seed=int(d.get("seed", 0)),
                   rob_demand_factor=float(d.get("rob_demand_factor", 1.5)))

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def pseudo_noise(point: DesignPoint, workload_name: str, seed: int) -> float:
    """Deterministic value in [-1, 1] keyed by (point, workload, seed)."""
    key = f"{seed}|{workload_name}|{','.join(map(str, point))}".encode()
    h = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
    return 2.0 * (h / 2.0 ** 64) - 1.0


def rob_stall_term(space: DesignSpace, point: DesignPoint, lf, model_cfg: ModelConfig,
                   demand_factor: float = 1.5) -> float:
    """Relative shortfall of the reorder buffer against peak in-flight demand.

    Demand is mean instruction latency times the decode width, scaled by
    ``demand_factor`` for bursts the averaged bound model smooths away.
    """
    v = role_values(space, point, model_cfg)
    demand = demand_factor * lf.mean_latency * v["decode"]
    return max(0.0, demand - v["rob"]) / v["rob"]


def synthetic_hf_evaluate(space: DesignSpace, point: DesignPoint, workload: WorkloadProfile,
                          cfg: SyntheticHfConfig, model_cfg: ModelConfig | None = None) -> float:
    model_cfg = model_cfg or ModelConfig()
    lf = lf_evaluate(space, point, workload, model_cfg)
    cpi = lf.cpi * (1.0 + cfg.bias)
    if cfg.rob_stall_coeff:
        cpi += cfg.rob_stall_coeff * rob_stall_term(space, point, lf, model_cfg, cfg.rob_demand_factor)
    if cfg.noise_amplitude:
        cpi += cfg.noise_amplitude * pseudo_noise(point, workload.name, cfg.seed)
    if not cpi > 0:
        raise EvaluatorError(f"synthetic HF produced non-positive CPI {cpi:g}")
    return cpi


class SyntheticHf:
    cost_estimate = 0.0

    def __init__(self, space: DesignSpace, cfg: SyntheticHfConfig | None = None,
                 model_cfg: ModelConfig | None = None):
        self.space = space
        self.cfg = cfg or SyntheticHfConfig()
        self.model_cfg = model_cfg or ModelConfig()

    def evaluate(self, point: DesignPoint, workload: WorkloadProfile) -> float:
        return synthetic_hf_evaluate(self.space, point, workload, self.cfg, self.model_cfg)


@dataclass
class SubprocessConfig:
    command: list = field(default_factory=list)
    timeout: float = 60.0
    max_concurrent: int = 1
    cost_estimate: float = 7200.0

    @classmethod
    def from_dict(cls, d: dict) -> "SubprocessConfig":
        cmd = d.get("command", [])
        if isinstance(cmd, str):
            cmd = [cmd]
        return cls(list(cmd), float(d.get("timeout", 60.0)), int(d.get("max_concurrent", 1)),
                   float(d.get("cost_estimate", 7200.0)))

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def encode_request(space: DesignSpace, point: DesignPoint, workload_name: str) -> str:
    req = {}
    for p, i in zip(space.params, point):
        v = p.values[i]
        req[p.name] = int(v) if float(v).is_integer() else v
    req["workload"] = workload_name
    return json.dumps(req, sort_keys=False)


def decode_request(space: DesignSpace, line: str) -> tuple[DesignPoint, str]:
    req = json.loads(line)
    workload = req.pop("workload")
    return space.point_from_values(req), workload


def parse_response(line: str) -> float:
    try:
        resp = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"response is not JSON: {line!r}") from exc
    if not isinstance(resp, dict):
        raise MalformedResponse(f"response is not an object: {line!r}")
    if "error" in resp:
        raise EvaluatorCrash(f"evaluator reported error: {resp['error']}")
    if "cpi" not in resp:
        raise MalformedResponse(f"response has no cpi field: {line!r}")
    try:
        cpi = float(resp["cpi"])
    except (TypeError, ValueError) as exc:
        raise MalformedResponse(f"cpi is not a number: {resp['cpi']!r}") from exc
    if not (math.isfinite(cpi) and cpi > 0):
        raise MalformedResponse(f"cpi must be positive and finite, got {cpi}")
    return cpi


def subprocess_evaluate(space: DesignSpace, point: DesignPoint, workload_name: str,
                        adapter: SubprocessConfig) -> float:
    if not adapter.command:
        raise EvaluatorCrash("no evaluator command configured")
    request = encode_request(space, point, workload_name) + "\n"
    try:
        proc = subprocess.run(adapter.command, input=request, capture_output=True, text=True,
                              timeout=adapter.timeout, encoding="utf-8")
    except subprocess.TimeoutExpired as exc:
        raise EvaluatorTimeout(f"evaluator exceeded {adapter.timeout:g}s") from exc
    except OSError as exc:
        raise EvaluatorCrash(f"cannot start evaluator: {exc}") from exc
    if proc.returncode != 0:
        raise EvaluatorCrash(f"evaluator exited with status {proc.returncode}: {proc.stderr.strip()[:200]}")
    lines = [ln for ln in proc.stdout.splitlines() if ln.strip()]
    if not lines:
        raise MalformedResponse("evaluator produced no response line")
    return parse_response(lines[0])


class SubprocessHf:
    def __init__(self, space: DesignSpace, adapter: SubprocessConfig):
        self.space = space
        self.adapter = adapter
        self.cost_estimate = adapter.cost_estimate

    def evaluate(self, point: DesignPoint, workload: WorkloadProfile) -> float:
        return subprocess_evaluate(self.space, point, workload.name, self.adapter)

    def evaluate_many(self, points: Sequence[DesignPoint], workload: WorkloadProfile) -> list:
        """Evaluate in parallel child processes; failures come back as exception objects."""
        def one(pt):
            try:
                return self.evaluate(pt, workload)
            except EvaluatorError as exc:
                log.warning("HF evaluation of %s failed: %s", pt, exc)
                return exc

        with ThreadPoolExecutor(max_workers=max(1, self.adapter.max_concurrent)) as pool:
            return list(pool.map(one, points))


class MeanHf:
    """Average CPI of an evaluator over several workloads."""

    def __init__(self, inner, workloads: Sequence[WorkloadProfile]):
        self.inner = inner
        self.workloads = list(workloads)
        self.cost_estimate = inner.cost_estimate * len(self.workloads)

    def evaluate(self, point: DesignPoint, workload=None) -> float:
        return math.fsum(self.inner.evaluate(point, w) for w in self.workloads) / len(self.workloads)


def stub_main(argv=None):
    """Reference evaluator speaking the wire protocol.

    ``--fixed CPI`` answers every request with that CPI; otherwise the request
    is scored with the synthetic HF model under the default config.
    """
    import argparse

    ap = argparse.ArgumentParser(description="reference HF evaluator stub")
    ap.add_argument("--fixed", type=float, default=None)
    ap.add_argument("--config", default=None)
    ap.add_argument("--exit-code", type=int, default=0)
    ap.add_argument("--drop-cpi", action="store_true")
    args = ap.parse_args(argv)

    for line in sys.stdin:
        if not line.strip():
            continue
        if args.exit_code:
            return args.exit_code
        if args.drop_cpi:
            print(json.dumps({"ok": True}), flush=True)
            continue
        if args.fixed is not None:
            print(json.dumps({"cpi": args.fixed}), flush=True)
            continue
        from .config import load_config

        cfg = load_config(args.config)
        try:
            point, wname = decode_request(cfg.space, line)
            hf = SyntheticHf(cfg.space, cfg.hf.synthetic, cfg.model)
            print(json.dumps({"cpi": hf.evaluate(point, cfg.workloads[wname])}), flush=True)
        except Exception as exc:  # report, never crash the protocol
            print(json.dumps({"error": str(exc)}), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(stub_main())
