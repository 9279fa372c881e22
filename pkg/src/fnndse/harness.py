"""Experiment plumbing: oracle, baselines, the multi-seed runner and its reports."""

from __future__ import annotations

import json
import logging
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import fnn_core
from .config import RunConfig
from .design_space import DesignPoint, increment, preference_boundary, smallest_point
from .hf_eval import MeanHf, SubprocessHf, SyntheticHf
from .rule_extract import extract, render_report
from .trainer import (Problem, TrainerError, compute_metrics, hf_train, hf_transition, lf_train, new_state)

log = logging.getLogger(__name__)

EXHAUSTIVE = "EXHAUSTIVE"
RANDOM_SAMPLED = "RANDOM_SAMPLED"


class InfeasibleSpace(ValueError):
    pass


@dataclass
class OracleResult:
    best_point: DesignPoint
    best_cpi: float
    samples_evaluated: int
    method: str


def build_problem(cfg: RunConfig) -> Problem:
    return Problem(cfg.space, cfg.objective_workloads, cfg.model, cfg.area_model, cfg.area_limit)


def build_hf(cfg: RunConfig):
    if cfg.hf.evaluator == "subprocess":
        inner = SubprocessHf(cfg.space, cfg.hf.subprocess)
    else:
        inner = SyntheticHf(cfg.space, cfg.hf.synthetic, cfg.model)
    ws = cfg.objective_workloads
    return MeanHf(inner, ws) if len(ws) > 1 else inner


def init_state(cfg: RunConfig, problem: Problem, seed: int, group_centers: dict | None = None):
    """Trainer state with the config's FNN initialization and designer preferences applied."""
    lo, hi = cfg.fnn.metric_range or problem.ipc_range
    metric = fnn_core.default_metric_input(cfg.fnn.metric_name, lo, hi)
    centers = dict(cfg.fnn.group_centers)
    centers.update(group_centers or {})
    state = new_state(problem, seed, cfg.trainer, metric_input=metric, group_centers=centers,
                      group_slope=cfg.fnn.group_slope, init_noise=cfg.fnn.init_noise)
    for pref in cfg.fnn.preferences:
        b = preference_boundary(cfg.space, pref.group, pref.low, pref.enough)
        fnn_core.set_preference(state.weights, pref.group, b, pref.target, pref.strength)
    return state


def _valid_points(problem: Problem):
    return [p for p in problem.space.enumerate() if problem.feasible(p)]


def _sample_valid(problem: Problem, rng: np.random.Generator, max_tries: int = 1_000_000) -> DesignPoint:
    for _ in range(max_tries):
        p = problem.space.random_point(rng)
        if problem.feasible(p):
            return p
    raise InfeasibleSpace(f"no area-valid design found in {max_tries} random draws")


def oracle(problem: Problem, evaluate: Callable[[DesignPoint], float], sample_floor: int = 500,
           exhaustive_cap: int = 10000, seed: int = 0, pool=()) -> OracleResult:
    """Best CPI over all valid designs, or over >= ``sample_floor`` uniform valid samples plus ``pool``."""
    space = problem.space
    if space.size() <= exhaustive_cap:
        pts = _valid_points(problem)
        if not pts:
            raise InfeasibleSpace("no design satisfies the area limit")
        cpis = [evaluate(p) for p in pts]
        k = int(np.argmin(cpis))
        return OracleResult(pts[k], cpis[k], len(pts), EXHAUSTIVE)
    if not problem.feasible(smallest_point(space)):
        raise InfeasibleSpace("no design satisfies the area limit")
    rng = np.random.default_rng([seed, 7])
    seen = {}
    for p in pool:
        if problem.feasible(p):
            seen[p] = evaluate(p)
    n = 0
    while n < sample_floor:
        p = _sample_valid(problem, rng)
        n += 1
        if p not in seen:
            seen[p] = evaluate(p)
    best = min(seen, key=lambda p: (seen[p], p))
    return OracleResult(best, seen[best], len(seen), RANDOM_SAMPLED)


def random_search_baseline(problem: Problem, evaluate: Callable[[DesignPoint], float], budget: int,
                           seed: int) -> tuple[DesignPoint, float]:
    """Best of ``budget`` distinct uniformly sampled valid designs."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = np.random.default_rng([seed, 11])
    if problem.space.size() <= 10000:
        pts = _valid_points(problem)
        if not pts:
            raise InfeasibleSpace("no design satisfies the area limit")
        idx = rng.permutation(len(pts))[:budget]
        chosen = [pts[i] for i in idx]
    else:
        chosen, seen = [], set()
        tries = 0
        while len(chosen) < budget and tries < 100 * budget:
            tries += 1
            p = _sample_valid(problem, rng)
            if p not in seen:
                seen.add(p)
                chosen.append(p)
    scored = [(evaluate(p), p) for p in chosen]
    cpi, p = min(scored)
    return p, cpi


def hill_climbing_baseline(problem: Problem, restarts: int, seed: int) -> tuple[DesignPoint, float]:
    """Steepest-ascent on LF IPC from the smallest design and random valid starts."""
    rng = np.random.default_rng([seed, 13])
    space = problem.space
    starts = [smallest_point(space)] + [_sample_valid(problem, rng) for _ in range(max(0, restarts - 1))]
    best = None
    for p in starts:
        while True:
            cur = problem.lf(p).ipc
            moves = []
            for j in range(space.n_params):
                if space.at_max(p, j):
                    continue
                q = increment(space, p, j)
                if problem.feasible(q):
                    moves.append((problem.lf(q).ipc, q))
            if not moves:
                break
            ipc, q = max(moves)
            if ipc <= cur:
                break
            p = q
        if best is None or problem.lf(p).ipc > problem.lf(best).ipc:
            best = p
    return best, problem.lf(best).cpi


@dataclass
class SeedResult:
    seed: int
    ok: bool = True
    error: str = ""
    episodes: int = 0
    converged: bool = False
    lf_design: dict = field(default_factory=dict)
    lf_cpi: float = math.nan        # LF CPI of the converged design
    lf_track_cpi: float = math.nan  # the converged design on the regret track (HF CPI when HF runs)
    hf_best_cpi: float | None = None
    hf_design: dict | None = None
    oracle_cpi: float = math.nan
    oracle_method: str = ""
    regret_lf: float = math.nan
    regret_hf: float | None = None
    improvement: float | None = None
    hf_budget_used: int = 0
    random_cpi: float | None = None
    hill_cpi: float | None = None


@dataclass
class ExperimentReport:
    rows: list
    hf_enabled: bool
    external: list = field(default_factory=list)

    def column(self, name):
        return [getattr(r, name) for r in self.rows if r.ok and getattr(r, name) is not None]

    def aggregate(self) -> dict:
        out = {}
        for name in ("lf_track_cpi", "hf_best_cpi", "oracle_cpi", "regret_lf", "regret_hf", "improvement",
                     "random_cpi", "hill_cpi", "hf_budget_used"):
            vals = self.column(name)
            if vals:
                finite = [v for v in vals if math.isfinite(v)]
                out[name] = {"mean": statistics.fmean(finite) if finite else math.inf,
                             "median": statistics.median(vals)}
        return out

    def to_records(self) -> list:
        recs = [dict(asdict(r), type="seed") for r in self.rows]
        recs.append({"type": "aggregate", **self.aggregate()})
        recs.extend(dict(e, type="external") for e in self.external)
        return recs

    def table(self) -> str:
        def f(x, nd=4):
            if x is None:
                return "-"
            if isinstance(x, float) and math.isinf(x):
                return "inf"
            return f"{x:.{nd}f}"

        head = ["seed", "episodes", "LF design CPI", "oracle CPI", "regret LF"]
        if self.hf_enabled:
            head += ["HF best CPI", "regret HF", "improvement", "HF used"]
        head += ["random CPI", "hill-climb CPI"]
        rows = []
        for r in self.rows:
            if not r.ok:
                rows.append([str(r.seed), "failed: " + r.error])
                continue
            row = [str(r.seed), str(r.episodes), f(r.lf_track_cpi), f(r.oracle_cpi), f(r.regret_lf)]
            if self.hf_enabled:
                row += [f(r.hf_best_cpi), f(r.regret_hf), f(r.improvement, 2), str(r.hf_budget_used)]
            row += [f(r.random_cpi), f(r.hill_cpi)]
            rows.append(row)
        agg = self.aggregate()
        for stat in ("mean", "median"):
            row = [stat, "", f(agg.get("lf_track_cpi", {}).get(stat)), f(agg.get("oracle_cpi", {}).get(stat)),
                   f(agg.get("regret_lf", {}).get(stat))]
            if self.hf_enabled:
                row += [f(agg.get("hf_best_cpi", {}).get(stat)), f(agg.get("regret_hf", {}).get(stat)),
                        f(agg.get("improvement", {}).get(stat), 2), ""]
            row += [f(agg.get("random_cpi", {}).get(stat)), f(agg.get("hill_cpi", {}).get(stat))]
            rows.append(row)
        widths = [max(len(head[i]), *(len(r[i]) for r in rows if len(r) == len(head))) for i in range(len(head))]
        out = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
        for r in rows:
            out.append("  ".join(c.rjust(w) for c, w in zip(r, widths)) if len(r) == len(head) else "  ".join(r))
        if self.external:
            out.append("")
            out.append("external baselines")
            by = {}
            for e in self.external:
                by.setdefault(e["method"], []).append(float(e["best_cpi"]))
            for m, vals in sorted(by.items()):
                out.append(f"  {m:<16} seeds={len(vals)} mean={statistics.fmean(vals):.4f} "
                           f"median={statistics.median(vals):.4f}")
        return "\n".join(out) + "\n"


def load_external(paths) -> list:
    """Rows ``{method, seed, best_cpi}`` from line-delimited JSON files."""
    rows = []
    for path in paths:
        with open(path, encoding="utf-8") as fh:
            for n, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                rec = json.loads(line)
                missing = {"method", "seed", "best_cpi"} - set(rec)
                if missing:
                    raise ValueError(f"{path}:{n}: missing fields {sorted(missing)}")
                rows.append({"method": str(rec["method"]), "seed": int(rec["seed"]),
                             "best_cpi": float(rec["best_cpi"])})
    return rows


def _write_jsonl(path: Path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, tuple):
        return list(x)
    raise TypeError(f"not serializable: {type(x)}")


def run_seed(cfg: RunConfig, seed: int, out_dir: Path | None = None, hf=None,
             oracle_cache: dict | None = None) -> SeedResult:
    """lf_train -> hf_transition -> hf_train -> metrics for one seed; artifacts go to ``out_dir``."""
    problem = build_problem(cfg)
    res = SeedResult(seed=seed)
    use_hf = cfg.hf.budget > 0
    if use_hf and hf is None:
        hf = build_hf(cfg)
    state = init_state(cfg, problem, seed)

    def ckpt(st):
        if out_dir is not None:
            fnn_core.save_checkpoint(st.weights, out_dir / f"checkpoint_seed{seed}.json",
                                     {"seed": seed, "episode": st.episode, "phase": st.phase})

    lf_train(state, problem, checkpoint=ckpt)
    cp = state.converged_point
    res.episodes = state.converged_episode
    res.converged = state.converged
    res.lf_design = problem.design_dict(cp)
    res.lf_cpi = problem.lf(cp).cpi

    if use_hf:
        state.set_budget(cfg.hf.budget)
        hf_transition(state, problem, hf)
        state, best_p, best_cpi = hf_train(state, problem, hf)
        res.lf_track_cpi = 1.0 / state.ipc_h0
        res.hf_best_cpi = best_cpi
        res.hf_design = problem.design_dict(best_p)
        res.hf_budget_used = state.hf_budget_initial - state.hf_budget_remaining
        evaluate = lambda p: hf.evaluate(p, problem.workloads[0])  # noqa: E731
        pool = list(state.hf_results)
    else:
        res.lf_track_cpi = res.lf_cpi
        evaluate = lambda p: problem.lf(p).cpi  # noqa: E731
        pool = [p for p, _ in state.best_set.entries]

    key = ("hf" if use_hf else "lf", seed if cfg.space.size() > cfg.harness.exhaustive_cap else None)
    if oracle_cache is not None and key in oracle_cache:
        orc = oracle_cache[key]
    else:
        orc = oracle(problem, evaluate, cfg.harness.sample_floor, cfg.harness.exhaustive_cap, seed, pool)
        if oracle_cache is not None:
            oracle_cache[key] = orc
    res.oracle_cpi = orc.best_cpi
    res.oracle_method = orc.method
    m = compute_metrics(res.lf_track_cpi, res.hf_best_cpi, orc.best_cpi)
    res.regret_lf = m.regret_lf
    if use_hf:
        res.regret_hf = m.regret_hf
        res.improvement = m.improvement
    _, res.random_cpi = random_search_baseline(problem, evaluate, cfg.harness.baseline_budget, seed)
    hp, _ = hill_climbing_baseline(problem, cfg.harness.hill_climb_restarts, seed)
    res.hill_cpi = evaluate(hp)

    if out_dir is not None:
        _write_jsonl(out_dir / f"run_log_seed{seed}.jsonl", state.records)
        meta = {"seed": seed, "episode": state.episode, "phase": state.phase}
        fnn_core.save_checkpoint(state.weights, out_dir / f"checkpoint_seed{seed}.json", meta)
        rb = extract(state.weights, provenance=meta)
        (out_dir / f"rules_seed{seed}.txt").write_text(render_report(rb, state.weights))
        (out_dir / f"rules_seed{seed}.jsonl").write_text(rb.to_jsonl())
    return res


def run_experiment(cfg: RunConfig, out_dir: str | Path | None = None, hf=None) -> ExperimentReport:
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rows = []
    cache: dict = {}
    for seed in cfg.seeds:
        try:
            rows.append(run_seed(cfg, seed, out, hf, cache))
        except (TrainerError, ValueError, RuntimeError, OSError) as exc:
            log.error("seed %d failed: %s", seed, exc)
            rows.append(SeedResult(seed=seed, ok=False, error=str(exc).splitlines()[0]))
    report = ExperimentReport(rows, cfg.hf.budget > 0, load_external(cfg.harness.external_baselines))
    if out is not None:
        (out / "report.txt").write_text(report.table())
        _write_jsonl(out / "report.jsonl", report.to_records())
    return report
