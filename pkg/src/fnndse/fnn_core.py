"""Five-layer Takagi-Sugeno fuzzy neural network used as the search policy.

Layers: fuzzification -> rule firing (product t-norm) -> normalization ->
TS defuzzification -> per-parameter scores. Every rule scores every design
parameter, so the consequents form an (R x P) matrix ``C``.

Rules enumerate all antecedent combinations in mixed-radix order: inputs in
declaration order (metrics first) with the first input most significant,
base 3 for metrics and base 2 for parameter groups. ``rule_index`` and
``rule_antecedent`` are the two directions of that bijection.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SIGMOID = "SIGMOID"
INV_SIGMOID = "INV_SIGMOID"
BELL = "BELL"

METRIC = "METRIC"
PARAM_GROUP = "PARAM_GROUP"
METRIC_LABELS = ("low", "avg", "high")
GROUP_LABELS = ("low", "enough")

CHECKPOINT_FORMAT = "fnndse-checkpoint"
CHECKPOINT_VERSION = 1


class FnnError(ValueError):
    pass


class DegenerateFiring(FnnError):
    """Total firing strength vanished; membership centers have left the input range."""


class EmptyMask(FnnError):
    pass


class UnknownGroup(FnnError):
    pass


class UnknownParam(FnnError):
    pass


class CheckpointError(FnnError):
    pass


@dataclass
class MembershipFn:
    kind: str
    center: float
    slope: float = 1.0
    width: float = 1.0
    shape: float = 2.0
    trainable_center: bool = False

    def __post_init__(self):
        if self.kind in (SIGMOID, INV_SIGMOID):
            if not self.slope > 0:
                raise FnnError("sigmoid slope must be positive")
        elif self.kind == BELL:
            if not (self.width > 0 and self.shape >= 1):
                raise FnnError("bell needs width > 0 and shape >= 1")
        else:
            raise FnnError(f"unknown membership kind {self.kind!r}")


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def mf_eval(mf: MembershipFn, x: float) -> float:
    if mf.kind == SIGMOID:
        return _sigmoid(mf.slope * (x - mf.center))
    if mf.kind == INV_SIGMOID:
        return _sigmoid(-mf.slope * (x - mf.center))
    u = abs((x - mf.center) / mf.width)
    return 1.0 / (1.0 + u ** (2.0 * mf.shape))


def mf_dcenter(mf: MembershipFn, x: float) -> float:
    """Derivative of the membership degree with respect to the center."""
    if mf.kind in (SIGMOID, INV_SIGMOID):
        s = _sigmoid(mf.slope * (x - mf.center))
        d = -mf.slope * s * (1.0 - s)
        return d if mf.kind == SIGMOID else -d
    u = (x - mf.center) / mf.width
    if u == 0.0:
        return 0.0
    mu = 1.0 / (1.0 + abs(u) ** (2.0 * mf.shape))
    return 2.0 * mf.shape * abs(u) ** (2.0 * mf.shape - 1.0) * math.copysign(1.0, u) * mu * mu / mf.width


@dataclass
class FuzzyInput:
    """One FNN input and its fuzzy sets.

    Parameter groups share a single center between 'low' and 'enough', so
    moving it shifts the boundary between the two labels.
    """

    name: str
    role: str
    sets: list[tuple[str, MembershipFn]]
    members: list[str] = field(default_factory=list)
    raw_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        labels = tuple(lbl for lbl, _ in self.sets)
        if self.role == METRIC:
            if labels != METRIC_LABELS:
                raise FnnError(f"metric input {self.name!r} needs sets {METRIC_LABELS}")
            if any(mf.trainable_center for _, mf in self.sets):
                raise FnnError(f"metric input {self.name!r}: centers are not trainable")
        elif self.role == PARAM_GROUP:
            if labels != GROUP_LABELS:
                raise FnnError(f"group input {self.name!r} needs sets {GROUP_LABELS}")
        else:
            raise FnnError(f"unknown input role {self.role!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(lbl for lbl, _ in self.sets)

    @property
    def center(self) -> float:
        """Shared center of a parameter group (the 'enough' boundary)."""
        return self.sets[-1][1].center

    @property
    def trainable(self) -> bool:
        return self.role == PARAM_GROUP and self.sets[-1][1].trainable_center

    def set_center(self, c: float, trainable: bool | None = None):
        for _, mf in self.sets:
            mf.center = float(c)
            if trainable is not None:
                mf.trainable_center = trainable


def _radices(inputs: Sequence[FuzzyInput]) -> list[int]:
    return [len(inp.sets) for inp in inputs]


def rule_count(n_metrics: int, n_groups: int) -> int:
    return 3 ** n_metrics * 2 ** n_groups


def _combos(radices: Sequence[int]) -> np.ndarray:
    R = math.prod(radices)
    out = np.empty((R, len(radices)), dtype=np.intp)
    r = np.arange(R)
    for i in range(len(radices) - 1, -1, -1):
        out[:, i] = r % radices[i]
        r = r // radices[i]
    return out


class FnnWeights:
    """Membership hyperparameters plus the rule-consequent matrix."""

    def __init__(self, inputs: list[FuzzyInput], consequents: np.ndarray, param_names: Sequence[str],
                 frozen: np.ndarray | None = None, activity: np.ndarray | None = None):
        self.inputs = list(inputs)
        roles = [inp.role for inp in self.inputs]
        n_metrics = roles.count(METRIC)
        if roles != [METRIC] * n_metrics + [PARAM_GROUP] * (len(roles) - n_metrics):
            raise FnnError("metric inputs must precede parameter-group inputs")
        names = [inp.name for inp in self.inputs]
        if len(set(names)) != len(names):
            raise FnnError("input names must be unique")
        self.param_names = list(param_names)
        C = np.array(consequents, dtype=float)
        R = rule_count(n_metrics, len(roles) - n_metrics)
        assert R == math.prod(_radices(self.inputs))
        if C.shape != (R, len(self.param_names)):
            raise FnnError(f"consequent matrix has shape {C.shape}, expected {(R, len(self.param_names))}")
        if not np.all(np.isfinite(C)):
            raise FnnError("consequent matrix has non-finite entries")
        self.C = C
        self.frozen = np.zeros(C.shape, dtype=bool) if frozen is None else np.array(frozen, dtype=bool)
        if self.frozen.shape != C.shape:
            raise FnnError("frozen mask shape mismatch")
        self.activity = np.zeros(R) if activity is None else np.array(activity, dtype=float)
        self.combos = _combos(_radices(self.inputs))

    @property
    def n_rules(self) -> int:
        return self.C.shape[0]

    @property
    def n_params(self) -> int:
        return self.C.shape[1]

    @property
    def n_metrics(self) -> int:
        return sum(inp.role == METRIC for inp in self.inputs)

    @property
    def n_groups(self) -> int:
        return len(self.inputs) - self.n_metrics

    def input_index(self, name: str) -> int:
        for i, inp in enumerate(self.inputs):
            if inp.name == name:
                return i
        raise UnknownGroup(f"unknown FNN input {name!r}")

    def param_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            if not 0 <= name_or_index < self.n_params:
                raise UnknownParam(f"parameter index {name_or_index} out of range")
            return int(name_or_index)
        try:
            return self.param_names.index(name_or_index)
        except ValueError:
            raise UnknownParam(f"unknown parameter {name_or_index!r}") from None

    def centers(self) -> np.ndarray:
        return np.array([inp.center if inp.role == PARAM_GROUP else np.nan for inp in self.inputs])

    def copy(self) -> "FnnWeights":
        return loads_checkpoint(dumps_checkpoint(self))

    def state_equal(self, other: "FnnWeights") -> bool:
        return dumps_checkpoint(self) == dumps_checkpoint(other)


def rule_antecedent(weights: FnnWeights, r: int) -> tuple[int, ...]:
    return tuple(int(k) for k in weights.combos[r])


def rule_index(weights: FnnWeights, combo: Sequence[int]) -> int:
    r = 0
    for k, radix in zip(combo, _radices(weights.inputs)):
        if not 0 <= k < radix:
            raise FnnError(f"label index {k} out of range")
        r = r * radix + int(k)
    return r


def default_metric_input(name: str, lo: float, hi: float, centers: Sequence[float] | None = None,
                         slope: float | None = None, width: float | None = None, shape: float = 2.0) -> FuzzyInput:
    span = hi - lo
    if centers is None:
        centers = (lo + 0.25 * span, lo + 0.5 * span, lo + 0.75 * span)
    slope = 8.0 / span if slope is None else slope
    width = span / 4.0 if width is None else width
    c_low, c_avg, c_high = centers
    return FuzzyInput(
        name, METRIC,
        [
            ("low", MembershipFn(INV_SIGMOID, c_low, slope=slope)),
            ("avg", MembershipFn(BELL, c_avg, width=width, shape=shape)),
            ("high", MembershipFn(SIGMOID, c_high, slope=slope)),
        ],
        raw_range=(lo, hi),
    )


def default_group_input(name: str, center: float = 0.5, slope: float = 6.0, members: Sequence[str] = (),
                        raw_range: tuple[float, float] = (0.0, 1.0), trainable: bool = True) -> FuzzyInput:
    return FuzzyInput(
        name, PARAM_GROUP,
        [
            ("low", MembershipFn(INV_SIGMOID, center, slope=slope, trainable_center=trainable)),
            ("enough", MembershipFn(SIGMOID, center, slope=slope, trainable_center=trainable)),
        ],
        members=list(members),
        raw_range=raw_range,
    )


def build_weights(space, metric_inputs: list[FuzzyInput], rng: np.random.Generator,
                  group_centers: dict | None = None, group_slope: float = 6.0,
                  init_noise: float = 0.01) -> FnnWeights:
    """Fresh FNN for ``space``: one group input per merge group, C ~ U(-noise, noise)."""
    group_centers = group_centers or {}
    unknown = set(group_centers) - {g.name for g in space.groups}
    if unknown:
        raise UnknownGroup(f"unknown groups in center initialization: {sorted(unknown)}")
    inputs = list(metric_inputs)
    for k, g in enumerate(space.groups):
        inputs.append(default_group_input(
            g.name, float(group_centers.get(g.name, 0.5)), group_slope,
            members=[space.params[m].name for m in g.members],
            raw_range=space.group_range(k),
        ))
    R = math.prod(_radices(inputs))
    C = rng.uniform(-init_noise, init_noise, size=(R, space.n_params))
    return FnnWeights(inputs, C, space.names)


@dataclass
class FnnOutput:
    scores: np.ndarray
    firing: np.ndarray
    normalized_firing: np.ndarray
    memberships: list[np.ndarray]


def _memberships(weights: FnnWeights, metric_values, group_values) -> list[np.ndarray]:
    xs = list(metric_values) + list(group_values)
    if len(metric_values) != weights.n_metrics or len(group_values) != weights.n_groups:
        raise FnnError(
            f"expected {weights.n_metrics} metric and {weights.n_groups} group values, "
            f"got {len(metric_values)} and {len(group_values)}"
        )
    return [np.array([mf_eval(mf, x) for _, mf in inp.sets]) for inp, x in zip(weights.inputs, xs)]


def forward(weights: FnnWeights, metric_values, group_values) -> FnnOutput:
    mus = _memberships(weights, metric_values, group_values)
    combos = weights.combos
    firing = np.ones(weights.n_rules)
    for i, mu in enumerate(mus):
        firing *= mu[combos[:, i]]
    total = firing.sum()
    if total < 1e-30:
        raise DegenerateFiring(f"total firing strength {total:g} below 1e-30")
    norm = firing / total
    return FnnOutput(scores=norm @ weights.C, firing=firing, normalized_firing=norm, memberships=mus)


def backward(weights: FnnWeights, metric_values, group_values, upstream,
             out: FnnOutput | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of ``upstream . scores`` on C and on the input centers.

    Returns ``(dC, dcenters)``; ``dcenters[i]`` is zero for metric inputs and
    frozen groups, and ``dC`` is zero on frozen consequent entries.
    """
    if out is None:
        out = forward(weights, metric_values, group_values)
    g = np.asarray(upstream, dtype=float)
    norm = out.normalized_firing
    dC = np.outer(norm, g)
    dC[weights.frozen] = 0.0

    dnorm = weights.C @ g
    total = out.firing.sum()
    dfiring = (dnorm - norm @ dnorm) / total

    combos = weights.combos
    sel = np.empty(combos.shape)
    for i, mu in enumerate(out.memberships):
        sel[:, i] = mu[combos[:, i]]
    # leave-one-out products via prefix/suffix cumulative products
    n = sel.shape[1]
    prefix = np.ones_like(sel)
    suffix = np.ones_like(sel)
    if n > 1:
        prefix[:, 1:] = np.cumprod(sel[:, :-1], axis=1)
        suffix[:, :-1] = np.cumprod(sel[:, :0:-1], axis=1)[:, ::-1]
    loo = prefix * suffix

    xs = list(metric_values) + list(group_values)
    dcenters = np.zeros(len(weights.inputs))
    for i, inp in enumerate(weights.inputs):
        if not inp.trainable:
            continue
        dmu = np.bincount(combos[:, i], weights=dfiring * loo[:, i], minlength=len(inp.sets))
        dcenters[i] = sum(dmu[k] * mf_dcenter(mf, xs[i]) for k, (_, mf) in enumerate(inp.sets))
    return dC, dcenters


def policy_distribution(scores, mask, temperature: float = 1.0) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("no selectable parameter")
    if not temperature > 0:
        raise FnnError("temperature must be positive")
    z = scores[mask] / temperature
    z = np.exp(z - z.max())
    p = np.zeros(scores.shape)
    p[mask] = z / z.sum()
    return p


def greedy_action(scores, mask) -> int:
    """Highest-scoring selectable parameter; ties go to the lowest index."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("no selectable parameter")
    s = np.where(mask, np.asarray(scores, dtype=float), -np.inf)
    return int(np.argmax(s))


def log_prob_grad(probs: np.ndarray, action: int, temperature: float) -> np.ndarray:
    """d log pi(action) / d scores for the masked softmax policy."""
    g = -probs.copy()
    g[action] += 1.0
    return g / temperature


def set_preference(weights: FnnWeights, group: str, boundary: float, target_param, strength: float = 5.0,
                   slope: float | None = None) -> FnnWeights:
    """Inject a designer preference: below ``boundary`` the group is 'low' and
    ``target_param`` should increase. Mutates and returns ``weights``."""
    i = weights.input_index(group)
    inp = weights.inputs[i]
    if inp.role != PARAM_GROUP:
        raise UnknownGroup(f"{group!r} is not a parameter group")
    if not 0.0 <= boundary <= 1.0:
        raise FnnError(f"boundary {boundary} outside the normalized range [0, 1]")
    p = weights.param_index(target_param)
    inp.set_center(boundary, trainable=False)
    if slope is not None:
        for _, mf in inp.sets:
            mf.slope = float(slope)
    rows = weights.combos[:, i] == GROUP_LABELS.index("low")
    if strength != 0.0:
        weights.C[rows, p] += strength
    weights.frozen[rows, p] = True
    return weights


# -- checkpoint format -----------------------------------------------------

def _mf_to_dict(label, mf):
    return {
        "label": label, "kind": mf.kind, "center": mf.center, "slope": mf.slope,
        "width": mf.width, "shape": mf.shape, "trainable_center": mf.trainable_center,
    }


def dumps_checkpoint(weights: FnnWeights, meta: dict | None = None) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "param_names": weights.param_names,
        "inputs": [
            {
                "name": inp.name, "role": inp.role, "members": inp.members,
                "raw_range": [float(inp.raw_range[0]), float(inp.raw_range[1])],
                "sets": [_mf_to_dict(lbl, mf) for lbl, mf in inp.sets],
            }
            for inp in weights.inputs
        ],
        "rows": weights.n_rules,
        "cols": weights.n_params,
        "consequents": [float(x) for x in weights.C.ravel()],
        "frozen": [int(x) for x in weights.frozen.ravel()],
        "activity": [float(x) for x in weights.activity],
    }
    return json.dumps(doc, indent=1) + "\n"


def loads_checkpoint(text: str) -> FnnWeights:
    try:
        doc = json.loads(text)
        if doc.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError("not an FNN checkpoint")
        if doc.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
        inputs = []
        for d in doc["inputs"]:
            sets = [
                (s["label"], MembershipFn(s["kind"], s["center"], s["slope"], s["width"], s["shape"],
                                          bool(s["trainable_center"])))
                for s in d["sets"]
            ]
            inputs.append(FuzzyInput(d["name"], d["role"], sets, list(d["members"]), tuple(d["raw_range"])))
        R, P = doc["rows"], doc["cols"]
        C = np.array(doc["consequents"], dtype=float).reshape(R, P)
        frozen = np.array(doc["frozen"], dtype=bool).reshape(R, P)
        activity = np.array(doc["activity"], dtype=float)
        return FnnWeights(inputs, C, doc["param_names"], frozen, activity)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt checkpoint: {exc}") from exc


def checkpoint_meta(text: str) -> dict:
    return json.loads(text).get("meta", {})


def save_checkpoint(weights: FnnWeights, path, meta: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_checkpoint(weights, meta))


def load_checkpoint(path) -> FnnWeights:
    with open(path, encoding="utf-8") as fh:
        return loads_checkpoint(fh.read())
