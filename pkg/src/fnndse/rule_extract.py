"""Turn a trained consequent matrix into readable IF-THEN rules.

Column ``p`` of C scores "parameter p should grow" for every rule. Extraction
keeps the entries above ``theta_c``, decodes each rule index into its
antecedent labels, then merges siblings: if a rule holds for every label of
some input (e.g. both 'L1 is low' and 'L1 is enough'), that input says
nothing and the literal is dropped.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .fnn_core import PARAM_GROUP, FnnWeights

CLAMP_MARGIN = 0.02
HIGH_ENOUGH = 0.9


@dataclass(frozen=True)
class Rule:
    antecedents: tuple  # ((input name, label), ...) in input order
    target_param: str
    consequent_value: float
    source_rule_indices: tuple

    def text(self) -> str:
        if not self.antecedents:
            return f"ALWAYS {self.target_param} can increase"
        cond = " and ".join(f"{name} is {label}" for name, label in self.antecedents)
        return f"IF {cond} THEN {self.target_param} can increase"

    def to_record(self) -> dict:
        return {"antecedents": [list(a) for a in self.antecedents], "target": self.target_param,
                "value": self.consequent_value, "sources": list(self.source_rule_indices)}


@dataclass
class RuleBase:
    rules: list
    theta_c: float
    theta_norm: float
    provenance: dict = field(default_factory=dict)
    pruned_columns: list = field(default_factory=list)

    def __len__(self):
        return len(self.rules)

    def targets(self) -> list:
        seen = []
        for r in self.rules:
            if r.target_param not in seen:
                seen.append(r.target_param)
        return seen

    def texts(self) -> list:
        return [r.text() for r in self.rules]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_record()) + "\n" for r in self.rules)


def active_rule_count(weights: FnnWeights) -> int:
    """Rules whose accumulated firing exceeds a tenth of the uniform share; all rules if none fired."""
    act = weights.activity
    total = float(act.sum())
    if total <= 0:
        return weights.n_rules
    return int(np.count_nonzero(act > 0.1 * total / weights.n_rules))


def default_theta_norm(weights: FnnWeights) -> float:
    return 0.05 * active_rule_count(weights)


def _merge_column(weights: FnnWeights, selected: dict) -> list:
    """Drop literals whose every sibling label is also selected; restart after each merge."""
    radices = [len(inp.sets) for inp in weights.inputs]
    rules = dict(selected)  # pattern (tuple of label index or None) -> (value, sources)
    changed = True
    while changed:
        changed = False
        for i, radix in enumerate(radices):
            for pat in sorted(rules, key=_pattern_key):
                if pat not in rules or pat[i] is None:
                    continue
                sibs = [pat[:i] + (k,) + pat[i + 1:] for k in range(radix)]
                if all(s in rules for s in sibs):
                    merged = pat[:i] + (None,) + pat[i + 1:]
                    vals = [rules[s][0] for s in sibs]
                    srcs = sorted(set().union(*(rules[s][1] for s in sibs)))
                    for s in sibs:
                        del rules[s]
                    if merged in rules:
                        old_v, old_s = rules[merged]
                        vals.append(old_v)
                        srcs = sorted(set(srcs) | set(old_s))
                    rules[merged] = (min(vals), tuple(srcs))
                    changed = True
                    break
            if changed:
                break
    return sorted(rules.items(), key=lambda kv: _pattern_key(kv[0]))


def _pattern_key(pat):
    return tuple(-1 if k is None else k for k in pat)


def extract(weights: FnnWeights, theta_c: float = 0.1, theta_norm: float | None = None,
            provenance: dict | None = None) -> RuleBase:
    if theta_norm is None:
        theta_norm = default_theta_norm(weights)
    C = weights.C
    rules, pruned = [], []
    for p, pname in enumerate(weights.param_names):
        col = C[:, p]
        sel = np.flatnonzero(col > theta_c)
        # 1-norm of the column's above-threshold evidence; near-zero columns say nothing
        if sel.size == 0 or float(np.abs(col[sel]).sum()) < theta_norm:
            pruned.append(pname)
            continue
        selected = {tuple(int(k) for k in weights.combos[r]): (float(col[r]), (int(r),)) for r in sel}
        for pat, (value, srcs) in _merge_column(weights, selected):
            ante = tuple(
                (inp.name, inp.labels[k]) for inp, k in zip(weights.inputs, pat) if k is not None
            )
            rules.append(Rule(ante, pname, value, srcs))
    return RuleBase(rules, float(theta_c), float(theta_norm), dict(provenance or {}), pruned)


def reconstruct(weights: FnnWeights, rb: RuleBase) -> FnnWeights:
    """Copy of ``weights`` whose C keeps only the entries behind ``rb``'s rules."""
    w = weights.copy()
    C = np.zeros_like(w.C)
    for r in rb.rules:
        p = w.param_index(r.target_param)
        for src in r.source_rule_indices:
            C[src, p] = weights.C[src, p]
    w.C = C
    return w


def diagnostics(rb: RuleBase, weights: FnnWeights) -> list:
    out = []
    for inp in weights.inputs:
        if inp.role != PARAM_GROUP:
            continue
        c = inp.center
        if c <= CLAMP_MARGIN or c >= 1.0 - CLAMP_MARGIN:
            edge = "1.0" if c >= 0.5 else "0.0"
            out.append(f"WARNING: center of {inp.name} is clamped at {edge} ({c:.3f}); "
                       f"reduce the learning rate or rescale the {inp.name} candidate range")
    flagged = set()
    for r in rb.rules:
        for name, label in r.antecedents:
            inp = weights.inputs[weights.input_index(name)]
            if label == "enough" and inp.role == PARAM_GROUP and inp.center >= HIGH_ENOUGH and name not in flagged:
                flagged.add(name)
                out.append(f"NOTE: rules still grow designs where {name} is enough with its boundary near 1.0 "
                           f"({inp.center:.3f}); consider extending {name} toward higher values")
    return out


def render_report(rb: RuleBase, weights: FnnWeights) -> str:
    lines = ["FNN rule report",
             f"thresholds: theta_c={rb.theta_c:g} theta_norm={rb.theta_norm:g}"]
    if rb.provenance:
        lines.append("source: " + ", ".join(f"{k}={v}" for k, v in sorted(rb.provenance.items())))
    lines.append("")
    if not rb.rules:
        lines.append("no rules above threshold")
    for target in rb.targets():
        lines.append(f"[{target}]")
        for r in rb.rules:
            if r.target_param == target:
                lines.append(f"  {r.text()}  (score {r.consequent_value:.3f}, {len(r.source_rule_indices)} rules)")
    lines.append("")
    lines.append("membership centers (low/enough boundary)")
    lines.append(f"  {'group':<10} {'normalized':>10} {'raw':>12}  trainable")
    for inp in weights.inputs:
        if inp.role != PARAM_GROUP:
            continue
        lo, hi = inp.raw_range
        raw = lo + inp.center * (hi - lo)
        lines.append(f"  {inp.name:<10} {inp.center:>10.4f} {raw:>12.4g}  {'yes' if inp.trainable else 'no'}")
    diag = diagnostics(rb, weights)
    if diag:
        lines.append("")
        lines.append("diagnostics")
        lines.extend("  " + d for d in diag)
    return "\n".join(lines) + "\n"
