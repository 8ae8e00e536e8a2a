"""ETE heuristic: load balancing (LB), sleeping unused lines (ES), lightest-path exclusion.

LB is the inverse of progressive filling. In a round each pair, in ascending
pair-id order, finds the most utilized link it can relieve (one crossed by some
but not all of its usable paths), together with any such link within
``tolerance`` of it. It takes ``delta_fraction`` of the split off each of its
paths through those links and hands the traffic to its other paths in
proportion to their bottleneck headroom below the pair's current peak. A move
that raises the maximum utilization over the pair's links is undone. LB stops
once the maximum utilization has improved by less than ``tolerance`` over the
last ``patience`` rounds.

The same engine drives :mod:`greente.simcoord`, which runs these steps per
ingress node on random timers instead of in lock-step.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from greente.errors import InfeasibleError, NonConvergence, PathsExhausted
from greente.model import (
    TOL,
    NetworkInstance,
    OperatorRequest,
    TeState,
    _max_util,
    _saving,
    initial_state,
    state_arrays,
    state_from_arrays,
)

# an accepted move may not raise the local maximum by more than this
MOVE_SLACK = 1e-12
# never fill more than this share of the alternatives' headroom in one move
HEADROOM_SHARE = 0.5


@dataclass(frozen=True)
class LbConfig:
    delta_fraction: float = 0.01
    tolerance: float = 1e-4
    max_rounds: int = 10_000
    #: rounds over which the improvement is measured (1 = a single round)
    patience: int = 10

    def __post_init__(self):
        if not 0.0 < self.delta_fraction <= 0.5:
            raise ValueError("delta_fraction must lie in (0, 0.5]")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")


class Engine:
    """Mutable array state plus the three ETE primitives."""

    def __init__(self, instance: NetworkInstance, state: TeState):
        self.instance = instance
        self.idx = instance.index
        self.x, self.active, self.awake = state_arrays(instance, state)
        self.refresh()

    # -- bookkeeping ---------------------------------------------------------

    def refresh(self) -> None:
        self.loads = self.idx.loads(self.x)
        self._pair_cache: dict[int, tuple] = {}

    def state(self) -> TeState:
        return state_from_arrays(self.instance, self.x, self.active, self.awake)

    def max_util(self, links: np.ndarray | None = None) -> float:
        if links is None:
            return _max_util(self.idx, self.loads, self.awake)
        scope = links[self.awake[links]]
        if scope.size == 0:
            return 0.0
        return max(0.0, float(np.max(self.loads[scope] / self.idx.capacity[scope])))

    def saving(self) -> float:
        return _saving(self.idx, self.instance.power_model, self.loads, self.awake)

    def pair_links(self, k: int) -> np.ndarray:
        """Links crossed by the pair's usable paths (its L_i)."""
        return self._pair_view(k)[1]

    def _pair_view(self, k: int):
        view = self._pair_cache.get(k)
        if view is None:
            idx = self.idx
            members = [
                g for g in idx.pair_paths[k] if self.active[g] and self.awake[idx.path_links[g]].all()
            ]
            members = np.array(members, dtype=int)
            if members.size:
                sub = idx.incidence[members]
                links = np.flatnonzero(sub.any(axis=0))
                cover = sub[:, links]
            else:
                links = np.zeros(0, dtype=int)
                cover = np.zeros((0, 0))
            view = (members, links, cover)
            self._pair_cache[k] = view
        return view

    # -- LB ------------------------------------------------------------------

    def pair_move(self, k: int, delta: float, band: float = 0.0) -> bool:
        """One relief step for pair ``k``; returns True when a move was kept."""
        idx = self.idx
        demand = idx.demand[k]
        members, links, cover = self._pair_view(k)
        if members.size < 2 or demand <= 0:
            return False
        counts = cover.sum(axis=0)
        relievable = (counts > 0) & (counts < members.size)
        if not relievable.any():
            return False
        cap = idx.capacity[links]
        util = self.loads[links] / cap
        peak = float(util[relievable].max())
        crosses = cover[:, relievable & (util >= peak - band)].any(axis=1)
        if crosses.all():
            # the band touches every path; fall back to the top link alone
            crosses = cover[:, relievable & (util >= peak)].any(axis=1)
        on, alts = members[crosses], members[~crosses]
        moved = delta * self.x[on]
        total = float(moved.sum())
        if total <= 0.0:
            return False
        old_max = float(util.max())
        # bottleneck headroom of each alternative below the relievable peak, counted
        # after the moved traffic has left; links on every path keep their load under
        # any intra-pair move, so they are ignored
        level = peak * cap - (self.loads[links] - demand * (moved @ cover[crosses]))
        spare = np.where((cover[~crosses] > 0) & relievable, level, np.inf).min(axis=1)
        spare = np.maximum(spare, 0.0)
        room = float(spare.sum())
        if room <= 0.0:
            return False
        if demand * total > HEADROOM_SHARE * room:
            moved *= HEADROOM_SHARE * room / (demand * total)
            total = float(moved.sum())
        gain = total * spare / room

        old_x_on, old_x_alts = self.x[on].copy(), self.x[alts].copy()
        old_loads = self.loads[links].copy()
        self.x[on] -= moved
        self.x[alts] += gain
        dx = np.zeros(members.size)
        dx[crosses] = -moved
        dx[~crosses] = gain
        new_loads = old_loads + demand * (dx @ cover)
        new_max = float(np.max(new_loads / cap))
        if new_max > old_max + MOVE_SLACK:
            self.x[on], self.x[alts] = old_x_on, old_x_alts
            return False
        self.loads[links] = new_loads
        return True

    def lb_round(self, pairs, delta: float, band: float = 0.0) -> list[int]:
        """Run one move per pair in ``pairs``; return the pairs that changed."""
        self.loads = self.idx.loads(self.x)
        changed = [k for k in pairs if self.pair_move(k, delta, band)]
        for k in changed:
            members = self.idx.pair_paths[k]
            self.x[members] /= self.x[members].sum()
        self.loads = self.idx.loads(self.x)
        return changed

    # -- ES ------------------------------------------------------------------

    def sleep_candidates(self, links=None) -> list[int]:
        scope = np.arange(self.idx.n_links) if links is None else np.asarray(links, dtype=int)
        return [int(k) for k in scope if self.awake[k] and self.loads[k] <= 0.0]

    def sleep(self, k: int) -> None:
        self.awake[k] = False
        self._pair_cache.clear()

    # -- exclusion -----------------------------------------------------------

    def lightest_path(self, pairs=None) -> int:
        idx = self.idx
        pairs = range(len(idx.pair_ids)) if pairs is None else pairs
        best_key, best = None, None
        for k in pairs:
            members = [g for g in idx.pair_paths[k] if self.active[g]]
            if len(members) < 2:
                continue
            for pos, g in enumerate(idx.pair_paths[k]):
                if not self.active[g]:
                    continue
                carried = self.x[g] * idx.demand[k]
                # zero-split paths go first among equal carried traffic
                key = (carried, bool(self.x[g] > 0), idx.pair_ids[k], pos)
                if best_key is None or key < best_key:
                    best_key, best = key, g
        if best is None:
            raise PathsExhausted("no pair has two or more active paths")
        return best

    def exclude(self, g: int) -> None:
        idx = self.idx
        k = int(idx.path_pair[g])
        freed = self.x[g]
        self.x[g] = 0.0
        self.active[g] = False
        rest = [h for h in idx.pair_paths[k] if self.active[h]]
        weights = self.x[rest]
        if weights.sum() > 0:
            self.x[rest] += freed * weights / weights.sum()
        else:
            # the excluded path carried the whole pair: spread over usable survivors,
            # waking lines only when nothing usable is left
            usable = [h for h in rest if self.awake[idx.path_links[h]].all()] or rest
            for h in usable:
                self.x[h] = 1.0 / len(usable)
                self.awake[idx.path_links[h]] = True
        self.x[rest] /= self.x[rest].sum()
        self._pair_cache.clear()
        self.refresh()

    def key(self, g: int) -> tuple[str, str]:
        return self.idx.path_keys[g]


def lb_converge(instance: NetworkInstance, state: TeState, config: LbConfig = LbConfig()) -> TeState:
    """Balance link utilization with repeated relief rounds (sleep mask is left alone)."""
    eng = Engine(instance, state)
    _converge(eng, config)
    return eng.state()


def _converge(eng: Engine, config: LbConfig, pairs=None, links=None) -> int:
    """Run LB rounds until ``patience`` rounds gain less than ``tolerance``; return the round count."""
    if pairs is None:
        pairs = sorted(range(len(eng.idx.pair_ids)), key=lambda k: eng.idx.pair_ids[k])
    history = [eng.max_util(links)]
    for rounds in range(1, config.max_rounds + 1):
        eng.lb_round(pairs, config.delta_fraction, config.tolerance)
        history.append(eng.max_util(links))
        if len(history) > config.patience and history[-1 - config.patience] - history[-1] < config.tolerance:
            return rounds
    raise NonConvergence(
        f"load balancing did not converge in {config.max_rounds} rounds", best_state=eng.state()
    )


def energy_saving_sleep(instance: NetworkInstance, state: TeState) -> TeState:
    """Put every awake link that carries no traffic to sleep; splits are untouched."""
    eng = Engine(instance, state)
    for k in eng.sleep_candidates():
        eng.sleep(k)
    return eng.state()


def exclude_lightest_path(instance: NetworkInstance, state: TeState) -> tuple[tuple[str, str], TeState]:
    """Drop the active path with the least carried traffic.

    Returns ``((pair_id, path_id), new_state)``; the input state is not modified.
    Raises :class:`PathsExhausted` when every pair is down to one active path.
    """
    eng = Engine(instance, state)
    g = eng.lightest_path()
    eng.exclude(g)
    return eng.key(g), eng.state()


@dataclass
class EteResult:
    final_state: TeState
    iterations: int
    excluded_paths: list[tuple[str, str]]
    achieved_saving_percent: float
    target_met: bool
    trace: list[dict] = field(default_factory=list)
    states: list[TeState] = field(default_factory=list, repr=False)

    def sleeping_link_percent(self) -> float:
        mask = self.final_state.mask
        return 100.0 * sum(not on for on in mask.values()) / len(mask) if mask else 0.0

    def excluded_route_percent(self, instance: NetworkInstance) -> float:
        return 100.0 * len(self.excluded_paths) / instance.index.n_paths

    @property
    def max_utilization(self) -> float:
        return self.trace[-1]["max_util"] if self.trace else 0.0

    def to_dict(self, instance: NetworkInstance | None = None) -> dict:
        out = {
            "target_met": self.target_met,
            "iterations": self.iterations,
            "achieved_saving_percent": self.achieved_saving_percent,
            "max_util": self.max_utilization,
            "sleeping_links_percent": self.sleeping_link_percent(),
            "excluded_paths": [list(p) for p in self.excluded_paths],
            "trace": self.trace,
            "final_state": {
                "splits": self.final_state.splits,
                "mask": self.final_state.mask,
                "active_paths": {k: list(v) for k, v in self.final_state.active_paths.items()},
            },
        }
        if instance is not None:
            out["excluded_routes_percent"] = self.excluded_route_percent(instance)
        return out

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "max_util", "saving_percent", "excluded"])
        for row in self.trace:
            exc = "/".join(row["excluded"]) if row["excluded"] else ""
            w.writerow([row["iteration"], repr(row["max_util"]), repr(row["saving_percent"]), exc])
        return buf.getvalue()


def ete_run(
    instance: NetworkInstance,
    request: OperatorRequest,
    config: LbConfig = LbConfig(),
    *,
    start: TeState | None = None,
    keep_states: bool = False,
) -> EteResult:
    """Iterate LB -> ES -> check saving -> exclude lightest path until the target is met.

    Ends with ``target_met=False`` when no pair has a path left to exclude.
    Errors carry the partial :class:`EteResult` in their ``partial`` attribute.
    """
    eng = Engine(instance, start if start is not None else initial_state(instance))
    target = request.target_saving_percent
    result = EteResult(eng.state(), 0, [], 0.0, False)

    def snapshot(row: dict) -> None:
        result.trace.append(row)
        result.final_state = eng.state()
        result.achieved_saving_percent = row["saving_percent"]
        if keep_states:
            result.states.append(result.final_state)

    while True:
        result.iterations += 1
        try:
            _converge(eng, config)
        except NonConvergence as exc:
            exc.partial = result
            raise
        for k in eng.sleep_candidates():
            eng.sleep(k)
        row = {
            "iteration": result.iterations,
            "max_util": eng.max_util(),
            "saving_percent": eng.saving(),
            "excluded": None,
        }
        if row["max_util"] > 1.0 + TOL:
            snapshot(row)
            exc = InfeasibleError(
                f"iteration {result.iterations}: max utilization {row['max_util']:.6f} exceeds capacity",
                [],
            )
            exc.partial = result
            raise exc
        if row["saving_percent"] >= target:
            result.target_met = True
            snapshot(row)
            return result
        try:
            g = eng.lightest_path()
        except PathsExhausted:
            snapshot(row)
            return result
        snapshot(row)
        eng.exclude(g)
        row["excluded"] = list(eng.key(g))
        result.excluded_paths.append(eng.key(g))
