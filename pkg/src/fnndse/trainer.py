"""Multi-fidelity policy-gradient training of the FNN search policy.

An episode grows a design one candidate step at a time until the next step
would break the area limit. The low-fidelity phase samples only parameters
whose analytical CPI gradient is negative and rewards ``IPC - IPC* + eps``;
the high-fidelity phase restarts from the best low-fidelity designs, drops
the gradient mask, and rewards ``IPC - IPC_h0 + eps`` on simulator CPI.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from . import fnn_core
from .design_space import DesignPoint, DesignSpace, group_values, increment, smallest_point
from .fnn_core import FnnWeights, backward, forward, greedy_action, log_prob_grad, policy_distribution
from .hf_eval import EvaluatorError
from .lf_model import AreaModel, LfResult, ModelConfig, WorkloadProfile, area, lf_action_mask, lf_evaluate_mean

log = logging.getLogger(__name__)

LF = "LF"
HF = "HF"


class TrainerError(RuntimeError):
    pass


class InfeasibleConfig(TrainerError):
    pass


class DivergenceDetected(TrainerError):
    pass


class BudgetExhausted(TrainerError):
    pass


@dataclass
class Schedule:
    batch_size: int = 16
    learning_rate: float = 5.0
    lr_decay: float = 0.99
    max_episodes: int = 2000
    min_episodes: int = 160
    patience: int = 5
    temperature: float = 1.0
    temperature_decay: float = 0.995
    temperature_floor: float = 0.1
    epsilon: float = 0.05
    eps_g: float = 0.001
    best_capacity: int = 32
    subset_size: int = 4
    hf_batch_size: int = 1
    hf_temperature: float = 0.5
    max_hf_attempts: int = 200
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_episodes < 1 or self.patience < 1:
            raise ValueError("batch_size, max_episodes and patience must be >= 1")
        if not (self.learning_rate > 0 and self.temperature > 0 and self.temperature_floor > 0):
            raise ValueError("learning rate and temperatures must be positive")
        if self.subset_size < 0 or self.best_capacity < 1:
            raise ValueError("subset_size must be >= 0 and best_capacity >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown trainer fields {sorted(unknown)}")
        kw = {}
        for k, v in d.items():
            kw[k] = int(v) if known[k] == "int" else float(v)
        return cls(**kw)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


class Problem:
    """A design space, objective workloads, models and area limit, with memoized evaluations."""

    def __init__(self, space: DesignSpace, workloads: Sequence[WorkloadProfile], model_cfg: ModelConfig | None = None,
                 area_model: AreaModel | None = None, area_limit: float = math.inf):
        self.space = space
        self.workloads = list(workloads)
        if not self.workloads:
            raise InfeasibleConfig("at least one workload is required")
        self.model_cfg = model_cfg or ModelConfig()
        self.area_model = area_model or AreaModel()
        self.area_limit = float(area_limit)
        self._lf: dict = {}
        self._area: dict = {}
        self.ipc_range = (0.0, max(self._max_decode(), 1.0))

    @property
    def workload_name(self) -> str:
        return "+".join(w.name for w in self.workloads)

    def _max_decode(self) -> float:
        name = self.model_cfg.roles.get("decode")
        if name in self.space.names:
            return self.space.params[self.space.index_of(name)].values[-1]
        return float(self.model_cfg.fixed.get("decode", 1.0))

    def lf(self, point: DesignPoint) -> LfResult:
        res = self._lf.get(point)
        if res is None:
            res = lf_evaluate_mean(self.space, point, self.workloads, self.model_cfg)
            self._lf[point] = res
        return res

    def area(self, point: DesignPoint) -> float:
        a = self._area.get(point)
        if a is None:
            a = area(self.space, point, self.area_model, self.model_cfg)
            self._area[point] = a
        return a

    def feasible(self, point: DesignPoint) -> bool:
        return self.area(point) <= self.area_limit

    def check_feasible(self):
        a0 = self.area(smallest_point(self.space))
        if a0 > self.area_limit:
            raise InfeasibleConfig(
                f"area limit {self.area_limit:g} mm2 is below the smallest design's area {a0:.4f} mm2"
            )

    def design_dict(self, point: DesignPoint) -> dict:
        return {p.name: p.values[i] for p, i in zip(self.space.params, point)}


class BestSet:
    """Top-K observed designs by LF IPC, deduplicated by point."""

    def __init__(self, capacity: int = 32):
        self.capacity = capacity
        self.entries: list[tuple[DesignPoint, float]] = []

    def add(self, point: DesignPoint, ipc: float) -> bool:
        for p, _ in self.entries:
            if p == point:
                return False
        keys = [-v for _, v in self.entries]
        pos = bisect.bisect_right(keys, -ipc)
        if pos >= self.capacity:
            return False
        self.entries.insert(pos, (point, ipc))
        del self.entries[self.capacity:]
        return True

    def points(self) -> list[DesignPoint]:
        return [p for p, _ in self.entries]

    def __len__(self):
        return len(self.entries)


@dataclass
class Step:
    metric_values: tuple
    group_values: np.ndarray
    mask: np.ndarray
    action: int
    log_prob: float
    applied: bool = True


@dataclass
class EpisodeTrace:
    start: DesignPoint
    steps: list[Step]
    final_point: DesignPoint
    final_area: float
    final_cpi: float
    fidelity: str
    reward: float = 0.0
    grad_C: np.ndarray | None = None
    grad_centers: np.ndarray | None = None

    @property
    def final_ipc(self) -> float:
        return 1.0 / self.final_cpi

    @property
    def actions(self) -> list[int]:
        return [s.action for s in self.steps if s.applied]

    @property
    def reverted(self) -> int | None:
        for s in self.steps:
            if not s.applied:
                return s.action
        return None


@dataclass
class TrainerState:
    weights: FnnWeights
    seed: int
    schedule: Schedule = field(default_factory=Schedule)
    ipc_star: float = -math.inf
    ipc_h0: float | None = None
    best_set: BestSet | None = None
    episode: int = 0
    phase: str = LF
    hf_budget_initial: int = 0
    hf_budget_remaining: int = 0
    lr: float | None = None
    converged_point: DesignPoint | None = None
    converged_episode: int | None = None
    converged: bool = False
    hf_results: dict = field(default_factory=dict)
    hf_scored: list = field(default_factory=list)
    records: list = field(default_factory=list)
    ipc_star_history: list = field(default_factory=list)
    greedy_history: list = field(default_factory=list)
    rng: np.random.Generator | None = None

    def __post_init__(self):
        if self.best_set is None:
            self.best_set = BestSet(self.schedule.best_capacity)
        if self.lr is None:
            self.lr = self.schedule.learning_rate
        if self.rng is None:
            self.rng = np.random.default_rng(self.seed)

    def temperature(self) -> float:
        s = self.schedule
        return max(s.temperature_floor, s.temperature * s.temperature_decay ** self.episode)

    def set_budget(self, budget: int):
        self.hf_budget_initial = self.hf_budget_remaining = int(budget)


def rollout(state: TrainerState, problem: Problem, fidelity: str = LF, hf=None, start: DesignPoint | None = None,
            greedy: bool = False, temperature: float | None = None) -> EpisodeTrace:
    """Grow one design from ``start`` (default: smallest) until the area limit binds."""
    space = problem.space
    weights = state.weights
    point = smallest_point(space) if start is None else start
    if not problem.feasible(point):
        raise InfeasibleConfig(f"episode start {point} violates the area limit")
    T = state.temperature() if temperature is None else temperature
    eps_g = state.schedule.eps_g
    steps = []
    grad_C = None if greedy else np.zeros_like(weights.C)
    grad_c = None if greedy else np.zeros(len(weights.inputs))
    while True:
        lf = problem.lf(point)
        gv = group_values(space, point)
        if fidelity == LF:
            mask = lf_action_mask(lf, space, point, eps_g)
        else:
            mask = np.array([not space.at_max(point, j) for j in range(space.n_params)])
        if not mask.any():
            break
        mv = (lf.ipc,)
        out = forward(weights, mv, gv)
        if greedy:
            a, logp = greedy_action(out.scores, mask), 0.0
        else:
            probs = policy_distribution(out.scores, mask, T)
            a = int(state.rng.choice(len(probs), p=probs))
            logp = math.log(probs[a])
            dC, dc = backward(weights, mv, gv, log_prob_grad(probs, a, T), out)
            grad_C += dC
            grad_c += dc
            weights.activity += out.normalized_firing
        nxt = increment(space, point, a)
        if not problem.feasible(nxt):
            steps.append(Step(mv, gv, mask, a, logp, applied=False))
            break
        steps.append(Step(mv, gv, mask, a, logp))
        point = nxt

    if fidelity == LF:
        cpi = problem.lf(point).cpi
    else:
        cpi = _hf_cpi(state, problem, hf, point)
    return EpisodeTrace(start=start or smallest_point(space), steps=steps, final_point=point,
                        final_area=problem.area(point), final_cpi=cpi, fidelity=fidelity,
                        grad_C=grad_C, grad_centers=grad_c)


def _hf_cpi(state: TrainerState, problem: Problem, hf, point: DesignPoint) -> float:
    """HF CPI with an in-run memo; a fresh evaluation consumes one budget token."""
    if point in state.hf_results:
        return state.hf_results[point]
    if state.hf_budget_remaining <= 0:
        raise BudgetExhausted("HF budget exhausted")
    if not problem.feasible(point):
        raise InfeasibleConfig(f"refusing to simulate an over-area design {point}")
    cpi = float(hf.evaluate(point, problem.workloads[0]))
    state.hf_results[point] = cpi
    state.hf_budget_remaining -= 1
    state.records.append({
        "type": "hf", "seed": state.seed, "point": problem.design_dict(point),
        "area": problem.area(point), "cpi": cpi, "budget_remaining": state.hf_budget_remaining,
    })
    return cpi


def policy_update(state: TrainerState, traces: Sequence[EpisodeTrace], rewards: Sequence[float]):
    """REINFORCE ascent on the mean of reward * sum_t grad log pi(a_t)."""
    w = state.weights
    gC = np.zeros_like(w.C)
    gc = np.zeros(len(w.inputs))
    for tr, r in zip(traces, rewards):
        if r != 0.0 and tr.grad_C is not None:
            gC += r * tr.grad_C
            gc += r * tr.grad_centers
    n = len(traces)
    step_C = (state.lr / n) * gC
    nz = step_C != 0.0
    w.C[nz] += step_C[nz]
    for i, inp in enumerate(w.inputs):
        if inp.trainable and gc[i] != 0.0:
            inp.set_center(min(1.0, max(0.0, inp.center + state.lr / n * gc[i])))
    if not np.all(np.isfinite(w.C)) or not all(math.isfinite(inp.center) for inp in w.inputs):
        from .rule_extract import extract, render_report

        try:
            dump = render_report(extract(w), w)
        except Exception as exc:  # diagnostics must not mask the real failure
            dump = f"(rule dump failed: {exc})"
        raise DivergenceDetected(f"non-finite FNN weights after episode {state.episode}\n{dump}")


def lf_reward(ipc: float, ipc_star: float, eps: float) -> float:
    return ipc - ipc_star + eps


def hf_reward(ipc: float, ipc_h0: float, eps: float) -> float:
    return ipc - ipc_h0 + eps


def _episode_record(state: TrainerState, problem: Problem, tr: EpisodeTrace, phase: str) -> dict:
    return {
        "type": "episode", "episode": state.episode, "phase": phase, "seed": state.seed,
        "start": problem.design_dict(tr.start), "actions": [problem.space.names[a] for a in tr.actions],
        "reverted": None if tr.reverted is None else problem.space.names[tr.reverted],
        "design": problem.design_dict(tr.final_point), "area": tr.final_area,
        "cpi": tr.final_cpi, "ipc": tr.final_ipc, "reward": tr.reward, "ipc_star": state.ipc_star,
        "temperature": state.temperature(),
    }


def greedy_design(state: TrainerState, problem: Problem) -> DesignPoint:
    return rollout(state, problem, LF, greedy=True).final_point


def lf_train(state: TrainerState, problem: Problem, checkpoint: Callable | None = None) -> TrainerState:
    """Low-fidelity phase: batched REINFORCE until the greedy design is stable."""
    problem.check_feasible()
    s = state.schedule
    state.phase = LF
    if state.ipc_star == -math.inf:
        state.ipc_star = problem.lf(smallest_point(problem.space)).ipc
    stable, last = 0, None
    while state.episode < s.max_episodes:
        n = min(s.batch_size, s.max_episodes - state.episode)
        traces, rewards = [], []
        for _ in range(n):
            tr = rollout(state, problem, LF)
            tr.reward = lf_reward(tr.final_ipc, state.ipc_star, s.epsilon)
            state.ipc_star = max(state.ipc_star, tr.final_ipc)
            state.ipc_star_history.append(state.ipc_star)
            state.best_set.add(tr.final_point, tr.final_ipc)
            state.records.append(_episode_record(state, problem, tr, LF))
            state.episode += 1
            traces.append(tr)
            rewards.append(tr.reward)
        policy_update(state, traces, rewards)
        state.lr *= s.lr_decay
        if checkpoint and s.checkpoint_every and state.episode % s.checkpoint_every < n:
            checkpoint(state)

        g = greedy_design(state, problem)
        state.greedy_history.append((state.episode, g))
        stable = stable + 1 if g == last else 1
        last = g
        if state.episode >= s.min_episodes and stable >= s.patience:
            state.converged = True
            break
    state.converged_point = last if last is not None else greedy_design(state, problem)
    state.converged_episode = state.episode
    return state


def hf_transition(state: TrainerState, problem: Problem, hf, subset_size: int | None = None) -> TrainerState:
    """Simulate the converged design (IPC_h0) and the best other designs of H."""
    k = state.schedule.subset_size if subset_size is None else subset_size
    if state.converged_point is None:
        raise TrainerError("hf_transition needs a converged LF phase")
    if state.hf_budget_remaining < k + 1:
        raise BudgetExhausted(f"HF budget {state.hf_budget_remaining} cannot cover {k + 1} transition evaluations")
    state.phase = HF
    h0 = state.converged_point
    cpi0 = _hf_cpi(state, problem, hf, h0)
    state.ipc_h0 = 1.0 / cpi0
    state.hf_scored = []
    for p in state.best_set.points():
        if len(state.hf_scored) >= k:
            break
        if p == h0:
            continue
        try:
            state.hf_scored.append((p, _hf_cpi(state, problem, hf, p)))
        except EvaluatorError as exc:
            log.warning("HF evaluation of %s failed during transition: %s", p, exc)
    return state


def hf_train(state: TrainerState, problem: Problem, hf) -> tuple[TrainerState, DesignPoint, float]:
    """High-fidelity phase: unmasked rollouts from H until the budget is spent."""
    if state.ipc_h0 is None:
        raise TrainerError("hf_train needs hf_transition first")
    s = state.schedule
    starts = [p for p, _ in state.hf_scored] or [state.converged_point]
    attempts = 0
    traces, rewards = [], []
    while state.hf_budget_remaining > 0 and attempts < s.max_hf_attempts:
        attempts += 1
        start = starts[int(state.rng.integers(len(starts)))]
        try:
            tr = rollout(state, problem, HF, hf=hf, start=start, temperature=s.hf_temperature)
        except EvaluatorError as exc:
            log.warning("HF episode voided: %s", exc)
            continue
        except BudgetExhausted:
            break
        tr.reward = hf_reward(tr.final_ipc, state.ipc_h0, s.epsilon)
        state.records.append(_episode_record(state, problem, tr, HF))
        state.episode += 1
        traces.append(tr)
        rewards.append(tr.reward)
        if len(traces) >= s.hf_batch_size:
            policy_update(state, traces, rewards)
            traces, rewards = [], []
    if traces:
        policy_update(state, traces, rewards)
    best = min(state.hf_results.items(), key=lambda kv: (kv[1], kv[0]))
    return state, best[0], best[1]


@dataclass
class Metrics:
    regret_lf: float
    regret_hf: float
    improvement: float
    beat_oracle: bool


def compute_metrics(lf_best_cpi: float, hf_best_cpi: float | None, oracle_cpi: float) -> Metrics:
    """Regrets against the oracle and the LF/HF regret ratio.

    Negative regrets (the search beat a sampled oracle) are clamped to zero and
    flagged. A zero HF regret with a positive LF regret gives an infinite ratio;
    both zero gives 1.
    """
    raw_lf = lf_best_cpi - oracle_cpi
    raw_hf = (hf_best_cpi if hf_best_cpi is not None else lf_best_cpi) - oracle_cpi
    beat = raw_lf < 0 or raw_hf < 0
    r_lf, r_hf = max(0.0, raw_lf), max(0.0, raw_hf)
    if r_hf > 0:
        imp = r_lf / r_hf
    elif r_lf > 0:
        imp = math.inf
    else:
        imp = 1.0
    return Metrics(r_lf, r_hf, imp, beat)


def new_state(problem: Problem, seed: int, schedule: Schedule | None = None, weights: FnnWeights | None = None,
              metric_input=None, group_centers: dict | None = None, group_slope: float = 6.0,
              init_noise: float = 0.01) -> TrainerState:
    """Fresh trainer state with default FNN initialization for ``problem``."""
    rng = np.random.default_rng(seed)
    if weights is None:
        lo, hi = problem.ipc_range
        metric = metric_input or fnn_core.default_metric_input("IPC", lo, hi)
        weights = fnn_core.build_weights(problem.space, [metric], rng, group_centers, group_slope, init_noise)
    return TrainerState(weights=weights, seed=seed, schedule=schedule or Schedule(), rng=rng)
