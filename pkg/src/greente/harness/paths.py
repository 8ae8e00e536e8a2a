"""Offline path computation: k loopless shortest paths by hop count (Yen)."""

from __future__ import annotations

import heapq
from collections import deque
from typing import Hashable, Iterable, Mapping

Adjacency = Mapping[str, Iterable[str]]


def _lexmin_shortest(adj: Adjacency, src, dst, banned_nodes, banned_edges):
    """Fewest-hop path, ties broken by lexicographically smallest node sequence."""
    if src in banned_nodes or dst in banned_nodes:
        return None

    def ok(a, b):
        return b not in banned_nodes and frozenset((a, b)) not in banned_edges

    dist = {dst: 0}
    queue = deque([dst])
    while queue:
        v = queue.popleft()
        for w in adj.get(v, ()):
            if w not in dist and ok(v, w):
                dist[w] = dist[v] + 1
                queue.append(w)
    if src not in dist:
        return None
    path = [src]
    here = src
    while here != dst:
        here = min(w for w in adj[here] if dist.get(w) == dist[here] - 1 and ok(here, w))
        path.append(here)
    return path


def k_shortest_paths(adj: Adjacency, src: Hashable, dst: Hashable, k: int) -> list[list]:
    """Up to ``k`` loopless paths from ``src`` to ``dst`` ordered by (hops, node sequence).

    ``adj`` maps each node to its neighbours and is treated as undirected.
    Returns node sequences; an empty list when ``dst`` is unreachable.
    """
    if k < 1 or src not in adj or dst not in adj:
        return []
    first = _lexmin_shortest(adj, src, dst, set(), set())
    if first is None:
        return []
    found = [first]
    seen = {tuple(first)}
    heap: list[tuple[int, tuple]] = []
    while len(found) < k:
        prev = found[-1]
        for i in range(len(prev) - 1):
            root = prev[: i + 1]
            banned_edges = {frozenset((p[i], p[i + 1])) for p in found if p[: i + 1] == root}
            spur = _lexmin_shortest(adj, prev[i], dst, set(root[:-1]), banned_edges)
            if spur is None:
                continue
            cand = tuple(root[:-1] + spur)
            if cand not in seen:
                seen.add(cand)
                heapq.heappush(heap, (len(cand), cand))
        if not heap:
            break
        found.append(list(heapq.heappop(heap)[1]))
    return found
