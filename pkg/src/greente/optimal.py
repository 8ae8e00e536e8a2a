"""Exact benchmarks: OptLB (min-max utilization LP) and OptES (min-energy sleep mask).

OptES searches over link activations. For a fixed mask the best split is the
OptLB split restricted to paths whose links are all awake, and energy is
evaluated at the utilization that split induces. Branch-and-bound prunes with
the idle-power lower bound ``base_power * idle_fraction`` per awake link.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from greente import lp
from greente.errors import InfeasibleError, SizeLimitError
from greente.model import (
    TOL,
    NetworkInstance,
    SleepMask,
    SplitVector,
    TeState,
    _energy,
    _max_util,
)

DEFAULT_MAX_MILP_LINKS = 20
EXHAUSTIVE_LIMIT = 12
ENERGY_TIE = 1e-9
UTIL_TIE = 1e-9


def _awake_array(instance: NetworkInstance, mask: SleepMask | None) -> np.ndarray:
    idx = instance.index
    awake = np.ones(idx.n_links, dtype=bool)
    if mask:
        for lid, on in mask.items():
            awake[idx.link_pos[instance.link(lid).id]] = bool(on)
    return awake


def _usable(instance: NetworkInstance, awake: np.ndarray, allowed: np.ndarray | None = None) -> np.ndarray:
    idx = instance.index
    asleep = np.flatnonzero(~awake)
    usable = ~(idx.incidence[:, asleep] > 0).any(axis=1)
    if allowed is not None:
        usable &= allowed
    return usable


def _lb_arrays(instance: NetworkInstance, usable: np.ndarray) -> tuple[np.ndarray, float]:
    """Min-max split over ``usable`` paths. Returns (x, U*); raises if infeasible."""
    idx = instance.index
    for k, members in enumerate(idx.pair_paths):
        if not usable[members].any():
            raise InfeasibleError(f"pair {idx.pair_ids[k]!r} has no usable path", [idx.pair_ids[k]])

    cols = np.flatnonzero(usable)
    nv = len(cols) + 1  # last variable is the utilization bound U
    cons = []
    for members in idx.pair_paths:
        row = np.zeros(nv)
        for j, g in enumerate(cols):
            if g in members:
                row[j] = 1.0
        cons.append(lp.Constraint(tuple(row), lp.EQ, 1.0))
    weights = idx.path_demand[cols][:, None] * idx.incidence[cols] / idx.capacity[None, :]
    for k in range(idx.n_links):
        if not np.any(weights[:, k] > 0):
            continue
        row = np.zeros(nv)
        row[:-1] = weights[:, k]
        row[-1] = -1.0
        cons.append(lp.Constraint(tuple(row), lp.LE, 0.0))
    objective = np.zeros(nv)
    objective[-1] = 1.0
    sol = lp.solve(lp.LpProblem(tuple(objective), tuple(cons)))
    if not sol.optimal:  # cannot happen for a well-formed min-max LP
        raise InfeasibleError(f"load-balancing LP returned {sol.status}", list(idx.pair_ids))

    x = np.zeros(idx.n_paths)
    x[cols] = np.clip(sol.values[:-1], 0.0, 1.0)
    for members in idx.pair_paths:
        total = x[members].sum()
        x[members] /= total
    awake_all = np.ones(idx.n_links, dtype=bool)
    u = _max_util(idx, idx.loads(x), awake_all)
    if u > 1.0 + TOL:
        loads = idx.loads(x) / idx.capacity
        worst = int(np.argmax(loads))
        binding = sorted({idx.path_keys[g][0] for g in cols if idx.incidence[g, worst] > 0})
        raise InfeasibleError(
            f"demands exceed capacity: best max utilization {u:.6f} on link {idx.link_ids[worst]!r}",
            binding,
        )
    return x, u


def _splits(instance: NetworkInstance, x: np.ndarray) -> SplitVector:
    idx = instance.index
    out: SplitVector = {pid: {} for pid in idx.pair_ids}
    for g, (pair_id, path_id) in enumerate(idx.path_keys):
        out[pair_id][path_id] = float(x[g])
    return out


def solve_opt_lb(
    instance: NetworkInstance,
    mask: SleepMask | None = None,
    active_paths: dict[str, tuple[str, ...]] | None = None,
) -> tuple[SplitVector, float]:
    """Optimal load balancing under ``mask`` (all links awake when ``None``).

    Paths crossing a sleeping link, or missing from ``active_paths`` when it is
    given, carry nothing.
    """
    awake = _awake_array(instance, mask)
    allowed = None
    if active_paths is not None:
        idx = instance.index
        allowed = np.zeros(idx.n_paths, dtype=bool)
        for pair_id, paths in active_paths.items():
            for path_id in paths:
                allowed[idx.path_pos[(pair_id, path_id)]] = True
    x, u = _lb_arrays(instance, _usable(instance, awake, allowed))
    return _splits(instance, x), u


def opt_lb_state(instance: NetworkInstance, mask: SleepMask | None = None) -> TeState:
    splits, _ = solve_opt_lb(instance, mask)
    mask = {l.id: True for l in instance.links} | dict(mask or {})
    return TeState(splits, mask, {p.id: tuple(q.id for q in p.paths) for p in instance.pairs})


def energy_objective(instance: NetworkInstance, mask: SleepMask, splits: SplitVector | None = None) -> float:
    """Sum of ``e_l`` over awake links; utilization comes from the OptLB split when ``splits`` is omitted."""
    awake = _awake_array(instance, mask)
    if not awake.any():
        return 0.0
    idx = instance.index
    if splits is None:
        x, _ = _lb_arrays(instance, _usable(instance, awake))
    else:
        x = np.zeros(idx.n_paths)
        for pair_id, split in splits.items():
            for path_id, frac in split.items():
                x[idx.path_pos[(pair_id, path_id)]] = frac
    return _energy(idx, instance.power_model, idx.loads(x), awake)


@dataclass
class _Leaf:
    energy: float
    util: float
    bits: tuple[int, ...]
    x: np.ndarray


class _Evaluator:
    """Caches OptLB by usable-path set; many masks share one."""

    def __init__(self, instance: NetworkInstance):
        self.instance = instance
        self.cache: dict[bytes, tuple[np.ndarray, float] | None] = {}
        self.lp_calls = 0

    def lb(self, usable: np.ndarray):
        key = np.packbits(usable).tobytes()
        if key not in self.cache:
            self.lp_calls += 1
            try:
                self.cache[key] = _lb_arrays(self.instance, usable)
            except InfeasibleError:
                self.cache[key] = None
        return self.cache[key]

    def leaf(self, awake: np.ndarray) -> _Leaf | None:
        usable = _usable(self.instance, awake)
        idx = self.instance.index
        if any(not usable[m].any() for m in idx.pair_paths):
            return None
        res = self.lb(usable)
        if res is None:
            return None
        x, u = res
        energy = _energy(idx, self.instance.power_model, idx.loads(x), awake)
        return _Leaf(energy, u, tuple(int(a) for a in awake), x)


def _select(leaves: list[_Leaf]) -> _Leaf:
    """Min energy, then min OptLB utilization, then lexicographically smallest mask."""
    best_e = min(l.energy for l in leaves)
    tied = [l for l in leaves if l.energy <= best_e + ENERGY_TIE]
    best_u = min(l.util for l in tied)
    tied = [l for l in tied if l.util <= best_u + UTIL_TIE]
    return min(tied, key=lambda l: l.bits)


def _exhaustive(instance: NetworkInstance, ev: _Evaluator) -> list[_Leaf]:
    n = instance.index.n_links
    leaves = []
    for bits in itertools.product((0, 1), repeat=n):
        leaf = ev.leaf(np.array(bits, dtype=bool))
        if leaf is not None:
            leaves.append(leaf)
    return leaves


def _branch_and_bound(instance: NetworkInstance, ev: _Evaluator) -> list[_Leaf]:
    idx = instance.index
    idle = instance.power_model.idle_fraction * idx.base_power
    order = sorted(range(idx.n_links), key=lambda k: (-idx.base_power[k], k))
    leaves: list[_Leaf] = []
    incumbent = [np.inf]
    # 1 = awake, 0 = sleeping, -1 = undecided
    state = np.full(idx.n_links, -1, dtype=int)

    def visit(depth: int) -> None:
        relaxed = state != 0
        usable = _usable(instance, relaxed)
        forced = state == 1
        for members in idx.pair_paths:
            live = [g for g in members if usable[g]]
            if not live:
                return
            # a link on every remaining path of some pair must stay awake
            common = set(idx.path_sets[live[0]]).intersection(*(idx.path_sets[g] for g in live[1:]))
            for k in common:
                forced[k] = True
        if float(idle[forced].sum()) > incumbent[0] + ENERGY_TIE:
            return
        if ev.lb(usable) is None:
            return
        if depth == len(order):
            leaf = ev.leaf(state == 1)
            if leaf is not None:
                leaves.append(leaf)
                incumbent[0] = min(incumbent[0], leaf.energy)
            return
        k = order[depth]
        for choice in (0, 1):
            state[k] = choice
            visit(depth + 1)
        state[k] = -1

    visit(0)
    return leaves


@dataclass
class EsResult:
    mask: SleepMask
    splits: SplitVector
    energy: float
    max_utilization: float
    evaluated_masks: int
    lp_solves: int

    def __iter__(self):
        # unpacks as (mask, splits, energy)
        return iter((self.mask, self.splits, self.energy))

    def state(self, instance: NetworkInstance) -> TeState:
        return TeState(
            splits={k: dict(v) for k, v in self.splits.items()},
            mask=dict(self.mask),
            active_paths={p.id: tuple(q.id for q in p.paths) for p in instance.pairs},
        )


def solve_opt_es(
    instance: NetworkInstance,
    *,
    max_links: int = DEFAULT_MAX_MILP_LINKS,
    force: bool = False,
    method: str = "bnb",
) -> EsResult:
    """Minimum-energy sleep mask with its OptLB split.

    ``method`` is ``"bnb"`` (branch-and-bound) or ``"exhaustive"`` (all masks,
    limited to 12 links unless forced).
    """
    n = instance.index.n_links
    if method not in ("bnb", "exhaustive"):
        raise ValueError(f"unknown method {method!r}")
    limit = max_links if method == "bnb" else min(max_links, EXHAUSTIVE_LIMIT)
    if n > limit and not force:
        raise SizeLimitError(f"instance has {n} links; exact search is limited to {limit} (use force)")
    ev = _Evaluator(instance)
    leaves = _branch_and_bound(instance, ev) if method == "bnb" else _exhaustive(instance, ev)
    if not leaves:
        raise InfeasibleError("no sleep mask admits a feasible split", list(instance.index.pair_ids))
    best = _select(leaves)
    idx = instance.index
    return EsResult(
        mask={lid: bool(best.bits[k]) for k, lid in enumerate(idx.link_ids)},
        splits=_splits(instance, best.x),
        energy=best.energy,
        max_utilization=best.util,
        evaluated_masks=len(leaves),
        lp_solves=ev.lp_calls,
    )
