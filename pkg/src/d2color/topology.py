"""Communication graphs: construction, generation, identities, and metrics.

Processes are addressed by 1-based index (a bookkeeping handle that is never
put on the wire) and carry an identity (a non-negative integer that *is*
transmitted).  Identities must be pairwise distinct within every closed
2-neighborhood; beyond two hops they may repeat.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field


class TopologyError(ValueError):
    pass


class DisconnectedGraph(TopologyError):
    pass


class NotATree(TopologyError):
    pass


class DuplicateEdge(TopologyError):
    pass


class IdentityClashWithin2Hops(TopologyError):
    pass


class InfeasibleDegreeCap(TopologyError):
    pass


@dataclass(frozen=True)
class GraphMetrics:
    """Degree and depth figures for one topology/root combination."""

    delta: int
    depth: int
    per_process_degree: tuple[int, ...]


@dataclass(frozen=True)
class Topology:
    """Immutable undirected communication graph.

    Attributes:
        n: Process count.
        adjacency: Per-process sorted neighbor indices (1-based, entry 0 unused).
        identities: Per-process identity (entry 0 unused).
        kind: "tree" or "general".
    """

    n: int
    adjacency: tuple[tuple[int, ...], ...]
    identities: tuple[int, ...]
    kind: str
    _ident_of: dict = field(repr=False, hash=False, compare=False, default_factory=dict)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def identity(self, i: int) -> int:
        return self.identities[i]

    def neighbor_identities(self, i: int) -> tuple[int, ...]:
        return tuple(self.identities[j] for j in self.adjacency[i])

    def edges(self) -> list[tuple[int, int]]:
        out = []
        for i in range(1, self.n + 1):
            for j in self.adjacency[i]:
                if i < j:
                    out.append((i, j))
        return out

    @property
    def delta(self) -> int:
        return max((len(self.adjacency[i]) for i in range(1, self.n + 1)), default=0)


def build_topology(
    edges: list[tuple[int, int]],
    identities: list[int] | None = None,
    kind: str = "tree",
    n: int | None = None,
) -> Topology:
    """Validate and freeze a topology from an edge list.

    Args:
        edges: Undirected index pairs, 1-based.
        identities: Optional per-process identities; defaults to 1..n.
        kind: "tree" (edge count must be n-1, acyclic) or "general".
        n: Process count; inferred from the largest index when omitted.

    Raises:
        DuplicateEdge, NotATree, DisconnectedGraph, IdentityClashWithin2Hops.
    """
    if kind not in ("tree", "general"):
        raise TopologyError(f"unknown topology kind {kind!r}")
    if n is None:
        if identities is not None:
            n = len(identities)
        elif edges:
            n = max(max(a, b) for a, b in edges)
        else:
            raise TopologyError("cannot infer process count from an empty edge list")
    if n < 1:
        raise TopologyError("process count must be >= 1")
    if not edges and n > 1:
        raise TopologyError("edge list may be empty only for a singleton")

    adj: list[set[int]] = [set() for _ in range(n + 1)]
    seen = set()
    for a, b in edges:
        if not (1 <= a <= n and 1 <= b <= n):
            raise TopologyError(f"edge ({a},{b}) out of range 1..{n}")
        if a == b:
            raise TopologyError(f"self-loop at {a}")
        key = (min(a, b), max(a, b))
        if key in seen:
            raise DuplicateEdge(f"edge {key} listed twice")
        seen.add(key)
        adj[a].add(b)
        adj[b].add(a)

    if kind == "tree" and len(seen) != n - 1:
        raise NotATree(f"tree on {n} processes needs {n - 1} edges, got {len(seen)}")

    reached = _bfs_reach(adj, 1, n)
    if len(reached) != n:
        if kind == "tree":
            # n-1 edges but disconnected implies a cycle somewhere
            raise NotATree("edge count matches a tree but the graph contains a cycle")
        raise DisconnectedGraph(f"only {len(reached)} of {n} processes reachable")

    if identities is None:
        ident = tuple(range(n + 1))
    else:
        if len(identities) != n:
            raise TopologyError("identities list length must equal n")
        if any(v < 0 for v in identities):
            raise TopologyError("identities must be non-negative")
        ident = (0,) + tuple(identities)

    frozen = tuple(tuple(sorted(s)) for s in adj)
    topo = Topology(n=n, adjacency=frozen, identities=ident, kind=kind)
    validate_identities(topo)
    return topo


def validate_identities(topology: Topology) -> None:
    """Check distance-<=2 identity distinctness.

    Every pair at distance <=2 shares a closed neighborhood with some center,
    so checking each {c} | neighbors(c) for duplicates covers all pairs.
    """
    for c in range(1, topology.n + 1):
        ball = (c,) + topology.adjacency[c]
        ids = [topology.identities[m] for m in ball]
        if len(set(ids)) != len(ids):
            dup = next(v for v in ids if ids.count(v) > 1)
            raise IdentityClashWithin2Hops(
                f"identity {dup} repeats inside the closed neighborhood of process {c}"
            )


def generate_random_tree(n: int, max_degree: int, seed: int) -> Topology:
    """Grow a random tree under a degree cap; pure function of its arguments.

    Each new process attaches to a uniformly chosen existing process that
    still has spare degree.
    """
    if n < 1:
        raise TopologyError("n must be >= 1")
    if n >= 3 and max_degree < 2:
        raise InfeasibleDegreeCap(f"n={n} needs max_degree >= 2, got {max_degree}")
    if n == 2 and max_degree < 1:
        raise InfeasibleDegreeCap("two processes need max_degree >= 1")
    if n == 1:
        return build_topology([], kind="tree", n=1)

    rng = random.Random(seed)
    degrees = [0] * (n + 1)
    open_slots = [1]
    edges = []
    for new in range(2, n + 1):
        parent = open_slots[rng.randrange(len(open_slots))]
        edges.append((parent, new))
        degrees[parent] += 1
        degrees[new] += 1
        if degrees[parent] >= max_degree:
            open_slots.remove(parent)
        if degrees[new] < max_degree:
            open_slots.append(new)
    return build_topology(edges, kind="tree", n=n)


def generate_random_connected(n: int, extra_edges: int, seed: int) -> Topology:
    """Random connected general graph: a spanning tree plus extra edges."""
    base = generate_random_tree(n, max_degree=max(2, n - 1), seed=seed)
    rng = random.Random(seed ^ 0x5EED)
    edges = set(base.edges())
    candidates = [
        (a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1) if (a, b) not in edges
    ]
    rng.shuffle(candidates)
    for e in candidates[:extra_edges]:
        edges.add(e)
    return build_topology(sorted(edges), kind="general", n=n)


def assign_identities(topology: Topology, mode: str, seed: int = 0) -> Topology:
    """Re-assign identities in one of two modes.

    global_unique: a seeded permutation of 1..n.
    distance2_unique_with_reuse: greedy BFS assignment of the smallest
    identity unused within two hops, so far-apart processes share values.
    """
    if mode == "global_unique":
        rng = random.Random(seed)
        ids = list(range(1, topology.n + 1))
        rng.shuffle(ids)
        return build_topology(topology.edges(), identities=ids, kind=topology.kind, n=topology.n)
    if mode != "distance2_unique_with_reuse":
        raise TopologyError(f"unknown identity mode {mode!r}")

    rng = random.Random(seed)
    start = rng.randrange(1, topology.n + 1)
    order = _bfs_order(topology, start, shuffle=rng)
    ids = [0] * (topology.n + 1)
    done = [False] * (topology.n + 1)
    for v in order:
        taken = set()
        for u in _two_hop(topology, v):
            if done[u]:
                taken.add(ids[u])
        cand = 1
        while cand in taken:
            cand += 1
        ids[v] = cand
        done[v] = True
    return build_topology(
        topology.edges(), identities=ids[1:], kind=topology.kind, n=topology.n
    )


def graph_distance(topology: Topology, a: int, b: int) -> int:
    """BFS hop count between two process indices."""
    if a == b:
        return 0
    dist = {a: 0}
    queue = deque([a])
    while queue:
        v = queue.popleft()
        for u in topology.adjacency[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                if u == b:
                    return dist[u]
                queue.append(u)
    raise DisconnectedGraph(f"no path between {a} and {b}")


def metrics(topology: Topology, root: int) -> GraphMetrics:
    """Exact max degree, per-process degrees, and BFS depth from root."""
    degs = tuple(len(topology.adjacency[i]) for i in range(1, topology.n + 1))
    depth = 0
    dist = {root: 0}
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for u in topology.adjacency[v]:
            if u not in dist:
                dist[u] = dist[v] + 1
                depth = max(depth, dist[u])
                queue.append(u)
    if len(dist) != topology.n:
        raise DisconnectedGraph("metrics requires a connected topology")
    return GraphMetrics(delta=max(degs, default=0), depth=depth, per_process_degree=degs)


def save_topology(topology: Topology, path: str) -> None:
    """Write the line-oriented topology file format (lossless round-trip)."""
    lines = [
        "format=d2topology/1",
        f"n={topology.n}",
        f"kind={topology.kind}",
    ]
    for a, b in topology.edges():
        lines.append(f"edge={a} {b}")
    lines.append("identities=" + " ".join(str(v) for v in topology.identities[1:]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_topology(path: str) -> Topology:
    """Parse a topology file written by save_topology."""
    n = None
    kind = "tree"
    edges: list[tuple[int, int]] = []
    identities = None
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            if key == "format":
                if value != "d2topology/1":
                    raise TopologyError(f"unsupported topology format {value!r}")
            elif key == "n":
                n = int(value)
            elif key == "kind":
                kind = value
            elif key == "edge":
                a, b = value.split()
                edges.append((int(a), int(b)))
            elif key == "identities":
                identities = [int(v) for v in value.split()]
            else:
                raise TopologyError(f"unknown topology field {key!r}")
    if n is None:
        raise TopologyError("topology file missing the n field")
    return build_topology(edges, identities=identities, kind=kind, n=n)


def _bfs_reach(adj: list[set[int]], start: int, n: int) -> set[int]:
    reached = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for u in adj[v]:
            if u not in reached:
                reached.add(u)
                queue.append(u)
    return reached


def _bfs_order(topology: Topology, start: int, shuffle: random.Random | None = None) -> list[int]:
    order = [start]
    seen = {start}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        nbrs = list(topology.adjacency[v])
        if shuffle is not None:
            shuffle.shuffle(nbrs)
        for u in nbrs:
            if u not in seen:
                seen.add(u)
                order.append(u)
                queue.append(u)
    return order


def _two_hop(topology: Topology, v: int) -> set[int]:
    out = set()
    for u in topology.adjacency[v]:
        out.add(u)
        out.update(topology.adjacency[u])
    out.discard(v)
    return out
