"""Domain types and the derived metrics every solver reports against.

A :class:`NetworkInstance` is immutable problem data. A :class:`TeState` is the
mutable decision triple (splits, sleep mask, active paths). Metrics are plain
functions of ``(instance, state)``.

Internally the instance compiles itself into dense numpy arrays (``instance.index``)
so the heuristic and the solvers can work on vectors; the dict-based state is the
public surface.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping

import numpy as np

from greente.errors import DegenerateInstanceError, StructuralError

#: absolute tolerance for equality constraints and capacity slack
TOL = 1e-9

ROLES = ("ingress", "egress", "core")

SplitVector = dict[str, dict[str, float]]
SleepMask = dict[str, bool]


@dataclass(frozen=True)
class Node:
    id: str
    role: str = "core"

    def __post_init__(self):
        if self.role not in ROLES:
            raise StructuralError(f"node {self.id!r}: unknown role {self.role!r}")


@dataclass(frozen=True)
class Link:
    """An undirected port line between two routers."""

    id: str
    src: str
    dst: str
    capacity: float
    base_power: float

    def __post_init__(self):
        if not self.capacity > 0:
            raise StructuralError(f"link {self.id!r}: capacity must be > 0")
        if self.base_power < 0:
            raise StructuralError(f"link {self.id!r}: base_power must be >= 0")
        if self.src == self.dst:
            raise StructuralError(f"link {self.id!r}: self-loop at {self.src!r}")


@dataclass(frozen=True)
class Path:
    id: str
    links: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        if not self.links:
            raise StructuralError(f"path {self.id!r} has no links")
        if len(set(self.links)) != len(self.links):
            raise StructuralError(f"path {self.id!r} repeats a link")


@dataclass(frozen=True)
class IePair:
    id: str
    ingress: str
    egress: str
    demand: float
    paths: tuple[Path, ...]

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if self.demand < 0:
            raise StructuralError(f"pair {self.id!r}: negative demand")
        if not self.paths:
            raise StructuralError(f"pair {self.id!r} has no paths")
        if len({p.id for p in self.paths}) != len(self.paths):
            raise StructuralError(f"pair {self.id!r}: duplicate path ids")

    def path(self, path_id: str) -> Path:
        for p in self.paths:
            if p.id == path_id:
                return p
        raise StructuralError(f"pair {self.id!r} has no path {path_id!r}")


@dataclass(frozen=True)
class PowerModel:
    """Port power ``base_power * (idle_fraction + (1 - idle_fraction) * u)``."""

    idle_fraction: float = 0.9

    def __post_init__(self):
        if not 0.0 <= self.idle_fraction <= 1.0:
            raise StructuralError("idle_fraction must lie in [0, 1]")

    def factor(self, utilization):
        return self.idle_fraction + (1.0 - self.idle_fraction) * utilization


@dataclass(frozen=True)
class OperatorRequest:
    target_saving_percent: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.target_saving_percent < 100.0:
            raise ValueError("target_saving_percent must lie in [0, 100)")


class _Index:
    """Dense array view of an instance. Path order is pair order, then file order."""

    def __init__(self, inst: "NetworkInstance"):
        self.link_ids = [l.id for l in inst.links]
        self.link_pos = {lid: k for k, lid in enumerate(self.link_ids)}
        self.capacity = np.array([l.capacity for l in inst.links], dtype=float)
        self.base_power = np.array([l.base_power for l in inst.links], dtype=float)
        self.pair_ids = [p.id for p in inst.pairs]
        self.pair_pos = {pid: k for k, pid in enumerate(self.pair_ids)}
        self.demand = np.array([p.demand for p in inst.pairs], dtype=float)

        self.path_keys: list[tuple[str, str]] = []
        self.path_pair: list[int] = []
        self.path_links: list[np.ndarray] = []
        self.pair_paths: list[list[int]] = []
        for k, pair in enumerate(inst.pairs):
            members = []
            for path in pair.paths:
                members.append(len(self.path_keys))
                self.path_keys.append((pair.id, path.id))
                self.path_pair.append(k)
                self.path_links.append(np.array([self.link_pos[l] for l in path.links], dtype=int))
            self.pair_paths.append(members)
        self.path_pos = {key: g for g, key in enumerate(self.path_keys)}
        self.path_pair = np.array(self.path_pair, dtype=int)
        self.path_demand = self.demand[self.path_pair]

        n_paths, n_links = len(self.path_keys), len(self.link_ids)
        self.incidence = np.zeros((n_paths, n_links))
        for g, links in enumerate(self.path_links):
            self.incidence[g, links] = 1.0
        self.path_sets = [frozenset(links.tolist()) for links in self.path_links]

    @property
    def n_links(self) -> int:
        return len(self.link_ids)

    @property
    def n_paths(self) -> int:
        return len(self.path_keys)

    def loads(self, x: np.ndarray) -> np.ndarray:
        return (x * self.path_demand) @ self.incidence


@dataclass(frozen=True)
class NetworkInstance:
    nodes: tuple[Node, ...]
    links: tuple[Link, ...]
    pairs: tuple[IePair, ...]
    power_model: PowerModel = field(default_factory=PowerModel)

    def __post_init__(self):
        for name in ("nodes", "links", "pairs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        node_ids = {n.id for n in self.nodes}
        if len(node_ids) != len(self.nodes):
            raise StructuralError("duplicate node ids")
        links = {l.id: l for l in self.links}
        if len(links) != len(self.links):
            raise StructuralError("duplicate link ids")
        if len({p.id for p in self.pairs}) != len(self.pairs):
            raise StructuralError("duplicate pair ids")
        for l in self.links:
            for end in (l.src, l.dst):
                if end not in node_ids:
                    raise StructuralError(f"link {l.id!r} references unknown node {end!r}")
        for pair in self.pairs:
            for end in (pair.ingress, pair.egress):
                if end not in node_ids:
                    raise StructuralError(f"pair {pair.id!r} references unknown node {end!r}")
            for path in pair.paths:
                _walk(path, pair, links)
        _check_connected(self)

    @cached_property
    def index(self) -> _Index:
        return _Index(self)

    def link(self, link_id: str) -> Link:
        try:
            return self.links[self.index.link_pos[link_id]]
        except KeyError:
            raise StructuralError(f"unknown link {link_id!r}") from None

    def pair(self, pair_id: str) -> IePair:
        try:
            return self.pairs[self.index.pair_pos[pair_id]]
        except KeyError:
            raise StructuralError(f"unknown pair {pair_id!r}") from None

    def ingress_nodes(self) -> list[str]:
        """Ingress routers that own at least one pair, in first-appearance order."""
        return list(dict.fromkeys(p.ingress for p in self.pairs))


def _walk(path: Path, pair: IePair, links: Mapping[str, Link]) -> list[str]:
    """Return the node sequence of ``path``; raise if it is not a simple ingress-egress walk."""
    here = pair.ingress
    seq = [here]
    for lid in path.links:
        link = links.get(lid)
        if link is None:
            raise StructuralError(f"pair {pair.id!r} path {path.id!r}: unknown link {lid!r}")
        if link.src == here:
            here = link.dst
        elif link.dst == here:
            here = link.src
        else:
            raise StructuralError(
                f"pair {pair.id!r} path {path.id!r}: link {lid!r} does not continue from {here!r}"
            )
        seq.append(here)
    if here != pair.egress:
        raise StructuralError(f"pair {pair.id!r} path {path.id!r} ends at {here!r}, not {pair.egress!r}")
    if len(set(seq)) != len(seq):
        raise StructuralError(f"pair {pair.id!r} path {path.id!r} is not simple")
    return seq


def path_nodes(instance: NetworkInstance, pair: IePair, path: Path) -> list[str]:
    return _walk(path, pair, {l.id: l for l in instance.links})


def _check_connected(inst: NetworkInstance) -> None:
    used = {n for pair in inst.pairs for n in (pair.ingress, pair.egress)}
    if not used:
        return
    parent = {n.id: n.id for n in inst.nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for l in inst.links:
        parent[find(l.src)] = find(l.dst)
    if len({find(n) for n in used}) > 1:
        raise StructuralError("links do not connect all routed nodes")


@dataclass
class TeState:
    """Decision variables: splits (x), sleep mask (a) and the surviving path sets."""

    splits: SplitVector
    mask: SleepMask
    active_paths: dict[str, tuple[str, ...]]

    def copy(self) -> "TeState":
        return TeState(
            splits={k: dict(v) for k, v in self.splits.items()},
            mask=dict(self.mask),
            active_paths={k: tuple(v) for k, v in self.active_paths.items()},
        )

    def sleeping(self) -> list[str]:
        return [lid for lid, on in self.mask.items() if not on]


def initial_state(instance: NetworkInstance) -> TeState:
    """Every path active with an even split; every link awake."""
    splits = {}
    for pair in instance.pairs:
        share = 1.0 / len(pair.paths)
        splits[pair.id] = {p.id: share for p in pair.paths}
    return TeState(
        splits=splits,
        mask={l.id: True for l in instance.links},
        active_paths={pair.id: tuple(p.id for p in pair.paths) for pair in instance.pairs},
    )


# -- array bridge -------------------------------------------------------------


def state_arrays(instance: NetworkInstance, state: TeState):
    """Return ``(x, active, awake)`` arrays in index order."""
    idx = instance.index
    x = np.zeros(idx.n_paths)
    active = np.zeros(idx.n_paths, dtype=bool)
    for pair_id, split in state.splits.items():
        if pair_id not in idx.pair_pos:
            raise StructuralError(f"splits reference unknown pair {pair_id!r}")
        for path_id, frac in split.items():
            g = idx.path_pos.get((pair_id, path_id))
            if g is None:
                raise StructuralError(f"pair {pair_id!r} has no path {path_id!r}")
            x[g] = frac
    for pair_id, paths in state.active_paths.items():
        for path_id in paths:
            g = idx.path_pos.get((pair_id, path_id))
            if g is None:
                raise StructuralError(f"pair {pair_id!r} has no path {path_id!r}")
            active[g] = True
    awake = np.ones(idx.n_links, dtype=bool)
    for lid, on in state.mask.items():
        k = idx.link_pos.get(lid)
        if k is None:
            raise StructuralError(f"mask references unknown link {lid!r}")
        awake[k] = bool(on)
    return x, active, awake


def state_from_arrays(instance: NetworkInstance, x, active, awake) -> TeState:
    idx = instance.index
    splits: SplitVector = {pid: {} for pid in idx.pair_ids}
    active_paths: dict[str, list[str]] = {pid: [] for pid in idx.pair_ids}
    for g, (pair_id, path_id) in enumerate(idx.path_keys):
        splits[pair_id][path_id] = float(x[g])
        if active[g]:
            active_paths[pair_id].append(path_id)
    return TeState(
        splits=splits,
        mask={lid: bool(awake[k]) for k, lid in enumerate(idx.link_ids)},
        active_paths={k: tuple(v) for k, v in active_paths.items()},
    )


# -- metrics ------------------------------------------------------------------


def _check_complete(instance: NetworkInstance, state: TeState) -> None:
    missing = [p.id for p in instance.pairs if p.id not in state.splits]
    if missing:
        raise StructuralError(f"no splits for pair(s) {missing}")


def link_loads(instance: NetworkInstance, state: TeState) -> dict[str, float]:
    _check_complete(instance, state)
    x, _, _ = state_arrays(instance, state)
    loads = instance.index.loads(x)
    return {lid: float(loads[k]) for k, lid in enumerate(instance.index.link_ids)}


def utilizations(instance: NetworkInstance, state: TeState) -> dict[str, float]:
    loads = link_loads(instance, state)
    return {l.id: loads[l.id] / l.capacity for l in instance.links}


def _max_util(idx: _Index, loads: np.ndarray, awake: np.ndarray) -> float:
    if not awake.any():
        return 0.0
    return max(0.0, float(np.max(loads[awake] / idx.capacity[awake])))


def max_link_utilization(instance: NetworkInstance, state: TeState) -> float:
    """Largest load/capacity over awake links; sleeping links are left out of the max."""
    x, _, awake = state_arrays(instance, state)
    idx = instance.index
    return _max_util(idx, idx.loads(x), awake)


def _energy(idx: _Index, pm: PowerModel, loads: np.ndarray, awake: np.ndarray) -> float:
    u = loads / idx.capacity
    return float(np.sum(np.where(awake, idx.base_power * pm.factor(u), 0.0)))


def _saving(idx: _Index, pm: PowerModel, loads: np.ndarray, awake: np.ndarray) -> float:
    baseline = _energy(idx, pm, loads, np.ones_like(awake))
    if baseline <= 0.0:
        raise DegenerateInstanceError("baseline energy is zero; saving is undefined")
    return 100.0 * (1.0 - _energy(idx, pm, loads, awake) / baseline)


def energy_consumption(instance: NetworkInstance, state: TeState) -> float:
    """Watts drawn by awake links at their current utilization."""
    x, _, awake = state_arrays(instance, state)
    idx = instance.index
    return _energy(idx, instance.power_model, idx.loads(x), awake)


def saved_energy_percent(instance: NetworkInstance, state: TeState) -> float:
    """Saving relative to the same traffic carried with every link awake."""
    x, _, awake = state_arrays(instance, state)
    idx = instance.index
    return _saving(idx, instance.power_model, idx.loads(x), awake)


@dataclass(frozen=True)
class Violation:
    constraint: str
    entity: str
    detail: str = ""


def validate(instance: NetworkInstance, state: TeState, tol: float = TOL) -> list[Violation]:
    try:
        _check_complete(instance, state)
        x, active, awake = state_arrays(instance, state)
    except StructuralError as exc:
        return [Violation("structure", "state", str(exc))]
    idx = instance.index
    out: list[Violation] = []
    for k, pair in enumerate(instance.pairs):
        members = idx.pair_paths[k]
        for g in members:
            key = f"{pair.id}/{idx.path_keys[g][1]}"
            if x[g] < -tol:
                out.append(Violation("nonnegativity", key, f"x={float(x[g])!r}"))
            if x[g] > 1 + tol:
                out.append(Violation("upper-bound", key, f"x={float(x[g])!r}"))
            if not active[g] and abs(x[g]) > tol:
                out.append(Violation("excluded-path", key, f"x={float(x[g])!r}"))
        if active[members].any():
            total = float(np.sum(x[members]))
            if abs(total - 1.0) > tol:
                out.append(Violation("simplex", pair.id, f"sum={total!r}"))
    loads = idx.loads(x)
    for k, lid in enumerate(idx.link_ids):
        if loads[k] > idx.capacity[k] + tol:
            out.append(Violation("capacity", lid, f"load={float(loads[k])!r} > {float(idx.capacity[k])!r}"))
        if not awake[k] and loads[k] > tol:
            out.append(Violation("sleep", lid, f"sleeping link carries {float(loads[k])!r}"))
    return out
