"""Seeded discrete-event simulation of ETE running independently on each ingress node.

Every ingress node wakes after a random interval and performs one LB round over
its own pairs, one ES pass, and (once its LB has settled) either reports the
energy target met or excludes its own lightest path. A node that raises a
link's load claims that link for ``claim_ttl`` time units; while the claim is
live no other node may put the link to sleep.

Nodes see current link loads directly (shared state). The event queue is the
only scheduler; there is no wall-clock dependence.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from greente.errors import CorruptTraceError, PathsExhausted
from greente.heuristic import Engine, LbConfig
from greente.model import NetworkInstance, OperatorRequest, TeState, initial_state

ACTIONS = ("lb-step", "sleep", "exclusion", "claim")
# load increases below this are float noise from renormalization
CLAIM_EPS = 1e-12


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    interval: tuple[float, float] = (1.0, 10.0)
    horizon: float = 100_000.0
    claim_ttl: float | None = None
    lb: LbConfig = LbConfig()

    def __post_init__(self):
        lo, hi = self.interval
        if not 0 <= lo < hi:
            raise ValueError("interval must satisfy 0 <= min < max")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def ttl(self) -> float:
        return self.interval[1] if self.claim_ttl is None else self.claim_ttl


@dataclass(frozen=True)
class SimEvent:
    time: float
    node: str
    action: str
    entity: str
    max_util: float
    saving: float
    splits: dict[str, float] | None = None

    def to_json(self) -> str:
        doc = asdict(self)
        if doc["splits"] is None:
            del doc["splits"]
        return json.dumps(doc)

    @classmethod
    def from_json(cls, line: str) -> "SimEvent":
        doc = json.loads(line)
        if doc.get("action") not in ACTIONS:
            raise CorruptTraceError(f"unknown action {doc.get('action')!r}")
        return cls(**doc)


@dataclass
class SimTrace:
    events: list[SimEvent] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    @classmethod
    def from_jsonl(cls, text: str) -> "SimTrace":
        return cls([SimEvent.from_json(line) for line in text.splitlines() if line.strip()])

    def __len__(self) -> int:
        return len(self.events)


class _Node:
    def __init__(self, node_id: str, pairs: list[int], eng: Engine, seed: int):
        self.id = node_id
        self.pairs = pairs
        self.rng = random.Random(f"{seed}:{node_id}")
        idx = eng.idx
        self.scope = np.flatnonzero(idx.incidence[[g for k in pairs for g in idx.pair_paths[k]]].any(axis=0))
        self.history: list[float] = []
        self.done = False


class _World:
    """Shared state of one simulation run: the engine, live claims and the trace."""

    def __init__(self, instance: NetworkInstance, request: OperatorRequest, config: SimConfig):
        self.instance = instance
        self.request = request
        self.config = config
        self.eng = Engine(instance, initial_state(instance))
        idx = self.eng.idx
        by_node: dict[str, list[int]] = {}
        for k in sorted(range(len(idx.pair_ids)), key=lambda k: idx.pair_ids[k]):
            by_node.setdefault(instance.pairs[k].ingress, []).append(k)
        self.nodes = [_Node(n, by_node[n], self.eng, config.seed) for n in sorted(by_node)]
        self.orphans = np.flatnonzero(~idx.incidence.any(axis=0))
        self.claims: dict[int, tuple[str, float]] = {}  # link -> (owner, expiry)
        self.trace = SimTrace()
        for node in self.nodes:
            node.history = [self.eng.max_util(node.scope)]

    def emit(self, t: float, node: _Node, action: str, entity: str, splits=None) -> None:
        self.trace.events.append(
            SimEvent(t, node.id, action, entity, self.eng.max_util(), self.eng.saving(), splits)
        )

    def pair_splits(self, k: int) -> dict[str, float]:
        idx = self.eng.idx
        return {idx.path_keys[g][1]: float(self.eng.x[g]) for g in idx.pair_paths[k]}

    def claim(self, t: float, node: _Node, link: int) -> None:
        self.claims[link] = (node.id, t + self.config.ttl)
        self.emit(t, node, "claim", self.eng.idx.link_ids[link])

    def claimed_by_other(self, t: float, node: _Node, link: int) -> bool:
        owner = self.claims.get(link)
        return owner is not None and owner[0] != node.id and owner[1] > t

    def sleep_pass(self, t: float, node: _Node) -> list[int]:
        eng = self.eng
        slept = []
        for k in eng.sleep_candidates(np.concatenate([node.scope, self.orphans])):
            if self.claimed_by_other(t, node, k):
                continue
            eng.sleep(k)
            slept.append(k)
            self.emit(t, node, "sleep", eng.idx.link_ids[k])
        return slept

    def wake(self, t: float, node: _Node) -> None:
        eng = self.eng
        cfg = self.config.lb
        self.claims = {k: c for k, c in self.claims.items() if c[1] > t}

        before = eng.loads.copy()
        changed = eng.lb_round(node.pairs, cfg.delta_fraction, cfg.tolerance)
        for k in changed:
            self.emit(t, node, "lb-step", eng.idx.pair_ids[k], self.pair_splits(k))
        for link in np.flatnonzero(eng.loads > before + CLAIM_EPS):
            self.claim(t, node, int(link))

        self.sleep_pass(t, node)

        node.history.append(eng.max_util(node.scope))
        settled = (
            len(node.history) > cfg.patience
            and node.history[-1 - cfg.patience] - node.history[-1] < cfg.tolerance
        )
        if not settled:
            node.done = False
            return
        if eng.saving() >= self.request.target_saving_percent:
            node.done = True
            return
        try:
            g = eng.lightest_path(node.pairs)
        except PathsExhausted:
            node.done = True
            return
        eng.exclude(g)
        k = int(eng.idx.path_pair[g])
        pair_id, path_id = eng.key(g)
        self.emit(t, node, "exclusion", f"{pair_id}/{path_id}", self.pair_splits(k))
        node.history = [eng.max_util(node.scope)]
        node.done = False


def simulate(
    instance: NetworkInstance, request: OperatorRequest, config: SimConfig = SimConfig()
) -> tuple[TeState, SimTrace]:
    """Run the distributed scheme until every node is done or the horizon passes."""
    world = _World(instance, request, config)
    lo, hi = config.interval
    queue = []
    for order, node in enumerate(world.nodes):
        heapq.heappush(queue, (node.rng.uniform(lo, hi), order))
    while queue:
        t, order = heapq.heappop(queue)
        if t > config.horizon:
            break
        node = world.nodes[order]
        world.wake(t, node)
        if all(n.done for n in world.nodes):
            break
        heapq.heappush(queue, (t + node.rng.uniform(lo, hi), order))
    return world.eng.state(), world.trace


def replay(instance: NetworkInstance, trace: SimTrace | Iterable[SimEvent]) -> TeState:
    """Re-apply a trace to the initial state of ``instance``."""
    events = trace.events if isinstance(trace, SimTrace) else list(trace)
    eng = Engine(instance, initial_state(instance))
    idx = eng.idx

    def set_splits(pair_id: str, splits: dict | None) -> None:
        if pair_id not in idx.pair_pos or splits is None:
            raise CorruptTraceError(f"event references unknown pair {pair_id!r}")
        for path_id, frac in splits.items():
            g = idx.path_pos.get((pair_id, path_id))
            if g is None:
                raise CorruptTraceError(f"pair {pair_id!r} has no path {path_id!r}")
            eng.x[g] = frac

    for ev in events:
        if ev.action == "lb-step":
            set_splits(ev.entity, ev.splits)
        elif ev.action == "exclusion":
            pair_id, _, path_id = ev.entity.partition("/")
            g = idx.path_pos.get((pair_id, path_id))
            if g is None:
                raise CorruptTraceError(f"exclusion of unknown path {ev.entity!r}")
            eng.active[g] = False
            set_splits(pair_id, ev.splits)
        elif ev.action in ("sleep", "claim"):
            k = idx.link_pos.get(ev.entity)
            if k is None:
                raise CorruptTraceError(f"event references unknown link {ev.entity!r}")
            if ev.action == "sleep":
                eng.awake[k] = False
        else:
            raise CorruptTraceError(f"unknown action {ev.action!r}")
    eng.refresh()
    return eng.state()
