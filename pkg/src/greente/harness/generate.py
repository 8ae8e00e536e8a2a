"""Random core-network instances: edge routers hanging off a random core mesh."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass

from greente.errors import GenerationFailure
from greente.harness.paths import k_shortest_paths
from greente.model import IePair, Link, NetworkInstance, Node, Path, PowerModel
from greente.serialize import path_id

# (capacity, base_power W, probability)
DEFAULT_CAPACITY_CLASSES = ((1.0, 5.0, 0.1), (10.0, 10.0, 0.6), (40.0, 20.0, 0.3))
# edge routers are never homed on the smallest class
DEFAULT_ACCESS_CLASSES = ((10.0, 10.0, 0.5), (40.0, 20.0, 0.5))


@dataclass(frozen=True)
class GenParams:
    n_ingress: int = 4
    n_egress: int = 4
    n_core: int = 15
    core_avg_degree: float = 4.0
    access_degree: int = 3
    capacity_classes: tuple[tuple[float, float, float], ...] = DEFAULT_CAPACITY_CLASSES
    access_classes: tuple[tuple[float, float, float], ...] = DEFAULT_ACCESS_CLASSES
    k_paths: int = 3
    demand_total: float = 10.0
    seed: int = 0
    idle_fraction: float = 0.9
    pair_weights: tuple[float, ...] | None = None
    max_retries: int = 100

    def __post_init__(self):
        if min(self.n_ingress, self.n_egress, self.n_core, self.k_paths, self.access_degree) < 1:
            raise ValueError("node counts, access_degree and k_paths must be >= 1")
        if self.core_avg_degree < 2:
            raise ValueError("core_avg_degree must be >= 2")
        if self.access_degree > self.n_core:
            raise ValueError("access_degree exceeds the number of core nodes")
        for classes in (self.capacity_classes, self.access_classes):
            if abs(sum(c[2] for c in classes) - 1.0) > 1e-9:
                raise ValueError("capacity class probabilities must sum to 1")
        if self.demand_total < 0:
            raise ValueError("demand_total must be >= 0")
        n_pairs = self.n_ingress * self.n_egress
        if self.pair_weights is not None and len(self.pair_weights) != n_pairs:
            raise ValueError(f"pair_weights needs {n_pairs} entries")

    def replace(self, **changes) -> "GenParams":
        from dataclasses import replace

        return replace(self, **changes)


def _connected(nodes, edges) -> bool:
    adj = {n: set() for n in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    start = nodes[0]
    seen = {start}
    stack = [start]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(nodes)


def _core_mesh(rng: random.Random, cores: list[str], avg_degree: float, retries: int):
    n_edges = min(round(len(cores) * avg_degree / 2), len(cores) * (len(cores) - 1) // 2)
    candidates = list(itertools.combinations(cores, 2))
    if len(cores) == 1:
        return []
    for _ in range(retries):
        rng.shuffle(candidates)
        edges = sorted(candidates[:n_edges])
        if _connected(cores, edges):
            return edges
    raise GenerationFailure(f"could not connect {len(cores)} core nodes in {retries} attempts")


def generate_instance(params: GenParams = GenParams()) -> NetworkInstance:
    """Seeded instance: core mesh, multi-homed edge routers, k hop-count paths per IE pair."""
    rng = random.Random(params.seed)
    width = len(str(params.n_core - 1))
    cores = [f"C{k:0{width}d}" for k in range(params.n_core)]
    ingress = [f"I{k}" for k in range(params.n_ingress)]
    egress = [f"E{k}" for k in range(params.n_egress)]

    edges = list(_core_mesh(rng, cores, params.core_avg_degree, params.max_retries))
    for edge_node in ingress + egress:
        for core in sorted(rng.sample(cores, params.access_degree)):
            edges.append((edge_node, core))

    n_core_edges = len(edges) - (len(ingress) + len(egress)) * params.access_degree
    n_width = max(3, len(str(len(edges) - 1)))
    links = []
    link_of = {}
    for k, (a, b) in enumerate(edges):
        classes = params.capacity_classes if k < n_core_edges else params.access_classes
        cap, power, _ = rng.choices(classes, weights=[c[2] for c in classes])[0]
        lid = f"L{k:0{n_width}d}"
        links.append(Link(lid, a, b, float(cap), float(power)))
        link_of[frozenset((a, b))] = lid

    core_adj: dict[str, set[str]] = {c: set() for c in cores}
    for a, b in edges:
        if a in core_adj and b in core_adj:
            core_adj[a].add(b)
            core_adj[b].add(a)

    weights = params.pair_weights or (1.0,) * (len(ingress) * len(egress))
    scale = params.demand_total / sum(weights) if sum(weights) > 0 else 0.0
    pairs = []
    for n, (src, dst) in enumerate(itertools.product(ingress, egress)):
        adj = {c: set(v) for c, v in core_adj.items()}
        adj[src] = set()
        adj[dst] = set()
        for a, b in edges:
            for end, other in ((a, b), (b, a)):
                if end in (src, dst) and other in core_adj:
                    adj[end].add(other)
                    adj[other].add(end)
        node_paths = k_shortest_paths(adj, src, dst, params.k_paths)
        if not node_paths:
            raise GenerationFailure(f"{dst} unreachable from {src}")
        paths = tuple(
            Path(path_id(j), tuple(link_of[frozenset(hop)] for hop in zip(seq, seq[1:])))
            for j, seq in enumerate(node_paths)
        )
        pairs.append(IePair(f"{src}-{dst}", src, dst, weights[n] * scale, paths))

    nodes = [Node(i, "ingress") for i in ingress] + [Node(e, "egress") for e in egress]
    nodes += [Node(c, "core") for c in cores]
    return NetworkInstance(tuple(nodes), tuple(links), tuple(pairs), PowerModel(params.idle_fraction))
