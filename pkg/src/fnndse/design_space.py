"""Parameterized micro-architecture design spaces.

A design point is a tuple of candidate indices, one per parameter. Points are
plain tuples so they hash, compare and copy for free.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

DesignPoint = tuple[int, ...]

PRODUCT = "PRODUCT"
SUM = "SUM"
SINGLE = "SINGLE"
COMBINERS = (PRODUCT, SUM, SINGLE)


class DesignSpaceError(ValueError):
    pass


class AtMaximum(DesignSpaceError):
    """Raised when incrementing a parameter that is already at its last candidate."""


@dataclass(frozen=True)
class ParameterSpec:
    name: str
    values: tuple[float, ...]
    unit: str = ""

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        if not values:
            raise DesignSpaceError(f"parameter {self.name!r} has no candidate values")
        for v in values:
            if not math.isfinite(v) or v <= 0:
                raise DesignSpaceError(f"parameter {self.name!r}: candidate {v} must be finite and positive")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise DesignSpaceError(f"parameter {self.name!r}: candidates must be strictly increasing")

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class MergeGroup:
    name: str
    members: tuple[int, ...]
    combine: str = SINGLE
    scale_note: str = ""

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(int(m) for m in self.members))
        if self.combine not in COMBINERS:
            raise DesignSpaceError(f"group {self.name!r}: unknown combiner {self.combine!r}")
        if not self.members:
            raise DesignSpaceError(f"group {self.name!r} has no members")
        if self.combine == SINGLE and len(self.members) != 1:
            raise DesignSpaceError(f"group {self.name!r}: SINGLE groups take exactly one member")


def _combine(kind: str, vals: Sequence[float]) -> float:
    if kind == PRODUCT:
        return math.prod(vals)
    return math.fsum(vals)


@dataclass(frozen=True)
class DesignSpace:
    params: tuple[ParameterSpec, ...]
    groups: tuple[MergeGroup, ...] = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)
    _ranges: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        if not self.params:
            raise DesignSpaceError("design space needs at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise DesignSpaceError("parameter names must be unique")
        groups = tuple(self.groups) or tuple(
            MergeGroup(p.name, (j,), SINGLE) for j, p in enumerate(self.params)
        )
        object.__setattr__(self, "groups", groups)
        if len({g.name for g in groups}) != len(groups):
            raise DesignSpaceError("group names must be unique")
        seen = []
        for g in groups:
            for m in g.members:
                if not 0 <= m < len(self.params):
                    raise DesignSpaceError(f"group {g.name!r}: member index {m} out of range")
            seen.extend(g.members)
        if sorted(seen) != list(range(len(self.params))):
            raise DesignSpaceError("every parameter must belong to exactly one group")
        object.__setattr__(self, "_index", {n: j for j, n in enumerate(names)})
        ranges = []
        for g in groups:
            lo = _combine(g.combine, [self.params[m].values[0] for m in g.members])
            hi = _combine(g.combine, [self.params[m].values[-1] for m in g.members])
            ranges.append((lo, hi))
        object.__setattr__(self, "_ranges", tuple(ranges))

    # -- construction ------------------------------------------------------

    @classmethod
    def from_dict(cls, cfg: dict) -> "DesignSpace":
        params = tuple(
            ParameterSpec(p["name"], tuple(p["values"]), p.get("unit", "")) for p in cfg["params"]
        )
        index = {p.name: j for j, p in enumerate(params)}
        groups = []
        for g in cfg.get("groups", []):
            members = []
            for m in g["members"]:
                if m not in index:
                    raise DesignSpaceError(f"group {g['name']!r}: unknown parameter {m!r}")
                members.append(index[m])
            groups.append(MergeGroup(g["name"], tuple(members), g.get("combine", SINGLE), g.get("scale_note", "")))
        return cls(params, tuple(groups))

    def to_dict(self) -> dict:
        return {
            "params": [{"name": p.name, "unit": p.unit, "values": list(p.values)} for p in self.params],
            "groups": [
                {
                    "name": g.name,
                    "members": [self.params[m].name for m in g.members],
                    "combine": g.combine,
                    "scale_note": g.scale_note,
                }
                for g in self.groups
            ],
        }

    # -- queries -----------------------------------------------------------

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    @property
    def n_params(self) -> int:
        return len(self.params)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise DesignSpaceError(f"unknown parameter {name!r}") from None

    def group_index(self, name: str) -> int:
        for k, g in enumerate(self.groups):
            if g.name == name:
                return k
        raise DesignSpaceError(f"unknown group {name!r}")

    def group_of_param(self, j: int) -> int:
        for k, g in enumerate(self.groups):
            if j in g.members:
                return k
        raise DesignSpaceError(f"parameter index {j} is in no group")

    def size(self) -> int:
        return space_size(self)

    def validate_point(self, point: Sequence[int]) -> DesignPoint:
        point = tuple(int(i) for i in point)
        if len(point) != len(self.params):
            raise DesignSpaceError(f"point has {len(point)} indices, space has {len(self.params)} parameters")
        for i, p in zip(point, self.params):
            if not 0 <= i < len(p.values):
                raise DesignSpaceError(f"index {i} out of range for {p.name!r}")
        return point

    def values(self, point: DesignPoint) -> np.ndarray:
        return np.array([p.values[i] for p, i in zip(self.params, point)])

    def point_from_values(self, values: dict | Sequence[float]) -> DesignPoint:
        """Map raw candidate values back to indices; unknown values raise with the legal list."""
        if isinstance(values, dict):
            missing = [n for n in self.names if n not in values]
            if missing:
                raise DesignSpaceError(f"missing values for {missing}")
            extra = [n for n in values if n not in self._index]
            if extra:
                raise DesignSpaceError(f"unknown parameters {extra}")
            values = [values[n] for n in self.names]
        if len(values) != len(self.params):
            raise DesignSpaceError(f"expected {len(self.params)} values, got {len(values)}")
        idx = []
        for p, v in zip(self.params, values):
            try:
                idx.append(p.values.index(float(v)))
            except ValueError:
                legal = ", ".join(f"{x:g}" for x in p.values)
                raise DesignSpaceError(f"{v} is not a candidate for {p.name!r}; legal: {legal}") from None
        return tuple(idx)

    def at_max(self, point: DesignPoint, j: int) -> bool:
        return point[j] >= len(self.params[j].values) - 1

    def enumerate(self) -> Iterator[DesignPoint]:
        return itertools.product(*(range(len(p.values)) for p in self.params))

    def random_point(self, rng: np.random.Generator) -> DesignPoint:
        return tuple(int(rng.integers(len(p.values))) for p in self.params)

    def group_range(self, k: int) -> tuple[float, float]:
        return self._ranges[k]

    def group_raw(self, point: DesignPoint, k: int) -> float:
        g = self.groups[k]
        return _combine(g.combine, [self.params[m].values[point[m]] for m in g.members])

    def normalize_group(self, k: int, raw: float) -> float:
        lo, hi = self._ranges[k]
        if hi == lo:
            return 0.0
        return (raw - lo) / (hi - lo)

    def denormalize_group(self, k: int, x: float) -> float:
        lo, hi = self._ranges[k]
        return lo + x * (hi - lo)


def space_size(space: DesignSpace) -> int:
    return math.prod(len(p.values) for p in space.params)


def smallest_point(space: DesignSpace) -> DesignPoint:
    return (0,) * space.n_params


def increment(space: DesignSpace, point: DesignPoint, j: int) -> DesignPoint:
    if not 0 <= j < space.n_params:
        raise DesignSpaceError(f"parameter index {j} out of range")
    if space.at_max(point, j):
        raise AtMaximum(f"{space.params[j].name} is already at its largest candidate")
    return point[:j] + (point[j] + 1,) + point[j + 1:]


def decrement(space: DesignSpace, point: DesignPoint, j: int) -> DesignPoint:
    if point[j] == 0:
        raise DesignSpaceError(f"{space.params[j].name} is already at its smallest candidate")
    return point[:j] + (point[j] - 1,) + point[j + 1:]


def group_values(space: DesignSpace, point: DesignPoint) -> np.ndarray:
    """Merged-group values min-max normalized to [0, 1], in group order."""
    return np.array([space.normalize_group(k, space.group_raw(point, k)) for k in range(space.n_groups)])


def preference_boundary(space: DesignSpace, group: str, low_value: float, enough_value: float) -> float:
    """Normalized midpoint between a 'low' raw value and an 'enough' raw value of a group."""
    k = space.group_index(group)
    return 0.5 * (space.normalize_group(k, low_value) + space.normalize_group(k, enough_value))


TABLE1 = {
    "params": [
        {"name": "l1_set", "unit": "sets", "values": [16, 32, 64]},
        {"name": "l1_way", "unit": "ways", "values": [2, 4, 8, 16]},
        {"name": "l2_set", "unit": "sets", "values": [128, 256, 512, 1024, 2048]},
        {"name": "l2_way", "unit": "ways", "values": [2, 4, 8, 16]},
        {"name": "mshr", "unit": "entries", "values": [2, 4, 6, 8, 10]},
        {"name": "decode", "unit": "insts/cycle", "values": [1, 2, 3, 4, 5]},
        {"name": "rob", "unit": "entries", "values": [32, 64, 96, 128, 160]},
        {"name": "mem_fu", "unit": "units", "values": [1, 2]},
        {"name": "int_fu", "unit": "units", "values": [1, 2, 3, 4, 5]},
        {"name": "fp_fu", "unit": "units", "values": [1, 2]},
        {"name": "iq", "unit": "entries", "values": [2, 4, 8, 16, 24]},
    ],
    "groups": [
        {"name": "L1", "members": ["l1_set", "l1_way"], "combine": PRODUCT, "scale_note": "x 64B line"},
        {"name": "L2", "members": ["l2_set", "l2_way"], "combine": PRODUCT, "scale_note": "x 64B line"},
        {"name": "MSHR", "members": ["mshr"], "combine": SINGLE},
        {"name": "decode", "members": ["decode"], "combine": SINGLE},
        {"name": "ROB", "members": ["rob"], "combine": SINGLE},
        {"name": "FU", "members": ["mem_fu", "int_fu", "fp_fu"], "combine": SUM},
        {"name": "IQ", "members": ["iq"], "combine": SINGLE},
    ],
}


def table1_space() -> DesignSpace:
    return DesignSpace.from_dict(TABLE1)
