"""Command line entry point.

    fnndse explore  [--config F] [--seed N] [--out DIR] [--override k=v ...]
    fnndse rules    CHECKPOINT [--theta-c X] [--theta-norm X] [--out DIR]
    fnndse eval     --design name=value ... [--fidelity lf|hf]
    fnndse oracle   [--fidelity lf|hf]
    fnndse compare  [--baseline FILE ...]

Exit status: 0 ok, 2 bad config or input, 3 runtime failure, 4 evaluator failure.
Failures print one line ``error[<kind>]: <message>`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fnn_core
from .config import ConfigError, dump_config, load_config
from .design_space import DesignSpaceError
from .hf_eval import EvaluatorError
from .trainer import TrainerError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_EVALUATOR = 0, 2, 3, 4


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="YAML run config (default: packaged table1.yaml)")
    p.add_argument("--seed", type=int, default=None, help="run a single seed instead of the config's list")
    p.add_argument("--out", default=None, help="output directory (default: config output_dir)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path config override, e.g. trainer.max_episodes=500")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fnndse", description="FNN-guided micro-architecture exploration")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", help="LF training, HF refinement, report and rules per seed")
    _add_common(p)

    p = sub.add_parser("rules", help="extract rules from a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("--theta-c", type=float, default=0.1)
    p.add_argument("--theta-norm", type=float, default=None)
    p.add_argument("--out", default=None)

    p = sub.add_parser("eval", help="evaluate one design")
    _add_common(p)
    p.add_argument("--design", nargs="+", required=True, metavar="NAME=VALUE")
    p.add_argument("--fidelity", choices=("lf", "hf"), default="lf")

    p = sub.add_parser("oracle", help="best design by exhaustive or sampled search")
    _add_common(p)
    p.add_argument("--fidelity", choices=("lf", "hf"), default="lf")

    p = sub.add_parser("compare", help="baseline table, optionally merged with external results")
    _add_common(p)
    p.add_argument("--baseline", action="append", default=[], metavar="FILE",
                   help="line-delimited JSON with {method, seed, best_cpi}")
    return ap


def _config(args):
    return load_config(args.config, args.override, args.seed)


def _out_dir(args, cfg) -> Path:
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_explore(args) -> int:
    from .harness import run_experiment

    cfg = _config(args)
    out = _out_dir(args, cfg)
    (out / "config.yaml").write_text(dump_config(cfg))
    report = run_experiment(cfg, out)
    sys.stdout.write(report.table())
    failed = [r for r in report.rows if not r.ok]
    if failed and len(failed) == len(report.rows):
        raise TrainerError(f"all seeds failed; first: {failed[0].error}")
    return EXIT_OK


def cmd_rules(args) -> int:
    from .rule_extract import extract, render_report

    text = Path(args.checkpoint).read_text(encoding="utf-8")
    weights = fnn_core.loads_checkpoint(text)
    try:
        meta = fnn_core.checkpoint_meta(text)
    except ValueError:
        meta = {}
    rb = extract(weights, args.theta_c, args.theta_norm, provenance=meta)
    report = render_report(rb, weights)
    sys.stdout.write(report)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "rules.txt").write_text(report)
        (out / "rules.jsonl").write_text(rb.to_jsonl())
    return EXIT_OK


def _parse_design(items, space) -> dict:
    values = {}
    for item in items:
        for part in item.split(","):
            if not part:
                continue
            if "=" not in part:
                raise DesignSpaceError(f"design entry {part!r}: expected name=value")
            k, v = part.split("=", 1)
            try:
                values[k.strip()] = float(v)
            except ValueError:
                raise DesignSpaceError(f"design entry {part!r}: value is not a number") from None
    return values


def cmd_eval(args) -> int:
    from .harness import build_hf, build_problem
    from .lf_model import lf_evaluate

    cfg = _config(args)
    problem = build_problem(cfg)
    point = cfg.space.point_from_values(_parse_design(args.design, cfg.space))
    lines = ["design: " + ", ".join(f"{k}={v:g}" for k, v in problem.design_dict(point).items())]
    a = problem.area(point)
    lines.append(f"area: {a:.4f} mm2 (limit {cfg.area_limit:g}, {'ok' if a <= cfg.area_limit else 'OVER'})")
    if args.fidelity == "lf":
        lf = problem.lf(point)
        lines.append(f"LF CPI: {lf.cpi:.6f}")
        lines.append(f"LF IPC: {lf.ipc:.6f}")
        for w in problem.workloads:
            r = lf_evaluate(cfg.space, point, w, cfg.model)
            lines.append(f"bounds[{w.name}]: " + ", ".join(f"{k}={v:.4f}" for k, v in r.bounds.items())
                         + f"; mean latency {r.mean_latency:.4f}")
    else:
        cpi = build_hf(cfg).evaluate(point, problem.workloads[0])
        lines.append(f"HF CPI: {cpi:.6f}")
        lines.append(f"HF IPC: {1.0 / cpi:.6f}")
    print("\n".join(lines))
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .harness import build_hf, build_problem, oracle

    cfg = _config(args)
    problem = build_problem(cfg)
    if args.fidelity == "hf":
        hf = build_hf(cfg)
        evaluate = lambda p: hf.evaluate(p, problem.workloads[0])  # noqa: E731
    else:
        evaluate = lambda p: problem.lf(p).cpi  # noqa: E731
    res = oracle(problem, evaluate, cfg.harness.sample_floor, cfg.harness.exhaustive_cap, cfg.seeds[0])
    out = _out_dir(args, cfg)
    rec = {"fidelity": args.fidelity, "method": res.method, "samples": res.samples_evaluated,
           "best_cpi": res.best_cpi, "design": problem.design_dict(res.best_point),
           "area": problem.area(res.best_point)}
    (out / f"oracle_{args.fidelity}.json").write_text(json.dumps(rec, indent=1) + "\n")
    table = (f"oracle ({args.fidelity.upper()}, {res.method.lower()}, {res.samples_evaluated} designs)\n"
             f"  best CPI: {res.best_cpi:.6f}\n  area: {rec['area']:.4f} mm2\n"
             + "".join(f"  {k}: {v:g}\n" for k, v in rec["design"].items()))
    (out / f"oracle_{args.fidelity}.txt").write_text(table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_compare(args) -> int:
    from .harness import (build_hf, build_problem, hill_climbing_baseline, load_external, oracle,
                          random_search_baseline)

    cfg = _config(args)
    problem = build_problem(cfg)
    use_hf = cfg.hf.budget > 0
    if use_hf:
        hf = build_hf(cfg)
        evaluate = lambda p: hf.evaluate(p, problem.workloads[0])  # noqa: E731
    else:
        evaluate = lambda p: problem.lf(p).cpi  # noqa: E731
    rows = []
    orc = None
    for seed in cfg.seeds:
        if orc is None or orc.method != "EXHAUSTIVE":
            orc = oracle(problem, evaluate, cfg.harness.sample_floor, cfg.harness.exhaustive_cap, seed)
        _, rc = random_search_baseline(problem, evaluate, cfg.harness.baseline_budget, seed)
        hp, _ = hill_climbing_baseline(problem, cfg.harness.hill_climb_restarts, seed)
        rows.append({"method": "random-search", "seed": seed, "best_cpi": rc, "oracle_cpi": orc.best_cpi})
        rows.append({"method": "hill-climb", "seed": seed, "best_cpi": evaluate(hp), "oracle_cpi": orc.best_cpi})
    rows.extend(load_external(list(cfg.harness.external_baselines) + list(args.baseline)))
    out = _out_dir(args, cfg)
    lines = [f"{'method':<16} {'seed':>4} {'best CPI':>10} {'regret':>10}"]
    for r in rows:
        o = r.get("oracle_cpi", orc.best_cpi)
        lines.append(f"{r['method']:<16} {r['seed']:>4} {r['best_cpi']:>10.4f} {max(0.0, r['best_cpi'] - o):>10.4f}")
    table = "\n".join(lines) + "\n"
    (out / "compare.txt").write_text(table)
    with open(out / "compare.jsonl", "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r) + "\n")
    sys.stdout.write(table)
    return EXIT_OK


COMMANDS = {"explore": cmd_explore, "rules": cmd_rules, "eval": cmd_eval, "oracle": cmd_oracle,
            "compare": cmd_compare}


def _fail(kind: str, exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split()) or type(exc).__name__
    print(f"error[{kind}]: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DesignSpaceError) as exc:
        return _fail("config", exc, EXIT_CONFIG)
    except EvaluatorError as exc:
        return _fail("evaluator", exc, EXIT_EVALUATOR)
    except fnn_core.CheckpointError as exc:
        return _fail("checkpoint", exc, EXIT_RUNTIME)
    except (TrainerError, OSError, ValueError, RuntimeError) as exc:
        return _fail("runtime", exc, EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
