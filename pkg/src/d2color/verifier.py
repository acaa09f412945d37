"""Independent verification oracle for runs and colorings.

Every check here works from the topology, the final colors, and the raw trace
records alone; it never consults a protocol's internal knowledge sets, so a
protocol bug cannot hide itself.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .engine import Trace, detect_clashes, recheck_clashes
from .messages import color_seq_bits, color_seq_bits_bound
from .topology import Topology, metrics

ROUND_BOUND_FACTOR = 4  # frozen headroom multiplier for the d*delta round bound


@dataclass(frozen=True)
class Coloring:
    colors: dict[int, int]
    palette_size: int

    @staticmethod
    def from_colors(colors: dict[int, int]) -> "Coloring":
        return Coloring(colors=dict(colors), palette_size=len(set(colors.values())))


@dataclass(frozen=True)
class BoundCheck:
    name: str
    limit: float
    observed: float
    ok: bool
    note: str = ""


@dataclass
class VerificationReport:
    protocol: str
    n: int
    delta: int
    depth: int
    validity_ok: bool
    validity_offenders: tuple
    consistency_ok: bool
    consistency_offenders: tuple
    termination_status: str
    claimed_by: int | None
    all_colored: bool
    palette_size: int
    message_counts: dict[str, int]
    completion_round: int | None
    bound_checks: list[BoundCheck] = field(default_factory=list)
    tdma_clashes: int = 0
    clash_events: int = 0
    clash_recheck_ok: bool = True

    def ok(self) -> bool:
        return (
            self.validity_ok
            and self.consistency_ok
            and self.all_colored
            and self.termination_status == "terminated"
            and self.clash_events == 0
            and self.clash_recheck_ok
            and self.tdma_clashes == 0
            and all(b.ok for b in self.bound_checks)
        )

    def to_text(self) -> str:
        lines = [
            "format=d2report/1",
            f"protocol={self.protocol}",
            f"n={self.n}",
            f"delta={self.delta}",
            f"depth={self.depth}",
            f"validity={'pass' if self.validity_ok else 'fail'}"
            + (f" offenders={self.validity_offenders}" if self.validity_offenders else ""),
            f"consistency={'pass' if self.consistency_ok else 'fail'}"
            + (f" offenders={self.consistency_offenders}" if self.consistency_offenders else ""),
            f"termination={self.termination_status} claimed_by={self.claimed_by}",
            f"all_colored={'yes' if self.all_colored else 'no'}",
            f"palette_size={self.palette_size}",
            "message_counts="
            + ",".join(f"{k}:{v}" for k, v in sorted(self.message_counts.items())),
            f"completion_round={self.completion_round}",
            f"clash_events={self.clash_events}",
            f"clash_recheck={'pass' if self.clash_recheck_ok else 'fail'}",
            f"tdma_replay_clashes={self.tdma_clashes}",
        ]
        for b in self.bound_checks:
            note = f" note={b.note}" if b.note else ""
            lines.append(
                f"bound name={b.name} limit={b.limit} observed={b.observed} "
                f"{'pass' if b.ok else 'fail'}{note}"
            )
        lines.append(f"overall={'pass' if self.ok() else 'fail'}")
        return "\n".join(lines) + "\n"


def two_hop_pairs(topology: Topology):
    """All index pairs (a, b), a < b, at graph distance 1 or 2."""
    seen = set()
    for c in range(1, topology.n + 1):
        nbrs = topology.neighbors(c)
        for u in nbrs:
            key = (min(c, u), max(c, u))
            if key not in seen:
                seen.add(key)
                yield key + (1,)
        for i in range(len(nbrs)):
            for j in range(i + 1, len(nbrs)):
                a, b = nbrs[i], nbrs[j]
                if b in topology.adjacency[a]:
                    continue  # distance 1, already reported
                key = (min(a, b), max(a, b))
                if key not in seen:
                    seen.add(key)
                    yield key + (2,)


def d2_conflicts(topology: Topology, colors: dict[int, int]) -> list[tuple[int, int, int]]:
    """Pairs at distance <= 2 that share a color (brute force, protocol-free)."""
    out = []
    for a, b, dist in two_hop_pairs(topology):
        ca, cb = colors.get(a), colors.get(b)
        if ca is not None and ca == cb:
            out.append((a, b, dist))
    return out


def check_coloring(
    topology: Topology,
    colors: dict[int, int],
    delta: int,
    enforce_validity: bool = True,
):
    """Validity and consistency fragments of a report."""
    validity_offenders = tuple(
        sorted(i for i, c in colors.items() if c < 0 or (enforce_validity and c > delta))
    )
    consistency_offenders = tuple(d2_conflicts(topology, colors))
    return (
        not validity_offenders,
        validity_offenders,
        not consistency_offenders,
        consistency_offenders,
    )


def greedy_reference_coloring(topology: Topology) -> Coloring:
    """Centralized BFS-greedy distance-2 coloring; a baseline, not an optimum."""
    colors: dict[int, int] = {}
    order = []
    seen = {1}
    queue = deque([1])
    while queue:
        v = queue.popleft()
        order.append(v)
        for u in topology.neighbors(v):
            if u not in seen:
                seen.add(u)
                queue.append(u)
    for v in order:
        used = set()
        for u in topology.neighbors(v):
            if u in colors:
                used.add(colors[u])
            for w in topology.neighbors(u):
                if w != v and w in colors:
                    used.add(colors[w])
        c = 0
        while c in used:
            c += 1
        colors[v] = c
    return Coloring.from_colors(colors)


def tdma_replay(topology: Topology, colors: dict[int, int], delta: int) -> int:
    """Clash count over delta+1 rounds of slotted all-broadcast.

    Every process broadcasts exactly in the rounds where clock mod (delta+1)
    equals its color; a distance-2 consistent coloring must produce zero
    clash events.
    """
    total = 0
    for t in range(delta + 1):
        origins = {i for i, c in colors.items() if c is not None and c % (delta + 1) == t}
        total += len(detect_clashes(topology, t, origins))
    return total


def completion_round(trace: Trace) -> int | None:
    for ch in trace.changes:
        if ch.state.get("claimed"):
            return ch.round
    return None


def d1_size_violations(trace: Trace, delta: int) -> list[tuple[int, int, int]]:
    """Snapshots where a knowledge set reached the max degree.

    Returns (round, proc, size) for every recorded state whose d1colors
    cardinality is not strictly below delta.
    """
    out = []
    for ch in trace.changes:
        d1 = ch.state.get("d1colors")
        if d1 is not None and len(d1) >= delta:
            out.append((ch.round, ch.proc, len(d1)))
    return out


def par_edge_color_violations(topology: Topology, trace: Trace) -> list[tuple[int, int]]:
    """Parent/child edges whose child color exceeds the parent's degree."""
    finals = trace.final_states()
    out = []
    for i, st in finals.items():
        parent_id = st.get("parent")
        color = st.get("color")
        if color is None or parent_id is None:
            continue
        if parent_id == topology.identity(i):
            continue  # root
        parent_idx = next(
            (j for j in topology.neighbors(i) if topology.identity(j) == parent_id), None
        )
        if parent_idx is None:
            continue
        if not (0 <= color <= topology.degree(parent_idx)):
            out.append((parent_idx, i))
    return out


def end_wave_violations(trace: Trace, delta: int) -> list[int]:
    """Processes that did not finish at state 6 knowing delta+1 colors."""
    finals = trace.final_states()
    return sorted(
        i
        for i, st in finals.items()
        if st.get("state") != 6 or st.get("max_nb_cl") != delta + 1
    )


def _seq_bounds(trace: Trace, topology: Topology, delta: int) -> list[BoundCheck]:
    counts = trace.broadcast_counts()
    n = topology.n
    checks = []
    term = counts.get("TERM_SEQ", 0)
    checks.append(BoundCheck("seq_term_count", n - 1, term, term == n - 1))
    color = counts.get("COLOR_SEQ", 0)
    if n >= 2:
        limit = delta + (n - delta) * (delta - 1)
        checks.append(BoundCheck("seq_color_count", limit, color, color <= limit))
        bound = color_seq_bits_bound(n, delta)
        worst = max(
            (
                color_seq_bits(rec.message, n, delta)
                for rec in trace.broadcasts
                if rec.message.kind == "COLOR_SEQ"
            ),
            default=0,
        )
        checks.append(BoundCheck("seq_color_message_bits", bound, worst, worst <= bound))
    else:
        checks.append(BoundCheck("seq_color_count", 0, color, color == 0, note="singleton"))
    checks.append(
        BoundCheck(
            "sequential_flow",
            1,
            trace.max_broadcasts_per_round(),
            trace.max_broadcasts_per_round() <= 1,
        )
    )
    root_max_d = None
    claimer = trace.claimed_by
    if claimer is not None:
        root_max_d = trace.final_states().get(claimer, {}).get("max_d")
    checks.append(
        BoundCheck("root_learned_delta", delta, root_max_d if root_max_d is not None else -1,
                   root_max_d == delta)
    )
    return checks


def _par_bounds(
    trace: Trace, topology: Topology, delta: int, depth: int
) -> list[BoundCheck]:
    counts = trace.broadcast_counts()
    n = topology.n
    checks = []
    coloring_phase = counts.get("COLOR_PAR", 0) + counts.get("TERM_PAR", 0)
    limit = 2 * n - delta
    checks.append(
        BoundCheck("par_broadcast_count", limit, coloring_phase, coloring_phase <= limit)
    )
    claim = completion_round(trace)
    start = int(trace.meta.get("start_round", 0))
    elapsed = claim - start if claim is not None else None
    if depth >= 1:
        bound = ROUND_BOUND_FACTOR * depth * delta
        ok = elapsed is not None and elapsed <= bound
        checks.append(
            BoundCheck(
                "par_completion_round",
                bound,
                elapsed if elapsed is not None else -1,
                ok,
                note=f"ratio={elapsed / (depth * delta):.3f}" if elapsed is not None else "",
            )
        )
    else:
        checks.append(
            BoundCheck("par_completion_round", 0, elapsed if elapsed is not None else -1,
                       claim is not None, note="singleton, bound vacuous")
        )
    edge_bad = par_edge_color_violations(topology, trace)
    checks.append(BoundCheck("par_child_color_range", 0, len(edge_bad), not edge_bad))
    return checks


def check_bounds(trace: Trace, topology: Topology) -> list[BoundCheck]:
    """Per-protocol count/round/size bound checks from a finished trace."""
    protocol = trace.meta.get("protocol", "unknown")
    root = int(trace.meta.get("root", 1))
    mets = metrics(topology, root)
    if protocol == "seq_tree":
        return _seq_bounds(trace, topology, mets.delta)
    if protocol == "par_tree":
        checks = _par_bounds(trace, topology, mets.delta, mets.depth)
        if trace.meta.get("end_phase"):
            stuck = end_wave_violations(trace, mets.delta)
            checks.append(BoundCheck("par_end_wave", 0, len(stuck), not stuck))
        return checks
    if protocol == "arbitrary":
        worst = trace.max_broadcasts_per_round()
        return [BoundCheck("sequential_flow", 1, worst, worst <= 1)]
    return []


def verify_run(topology: Topology, trace: Trace) -> VerificationReport:
    """Full report for a finished run: section checks, bounds, TDMA replay."""
    protocol = trace.meta.get("protocol", "unknown")
    root = int(trace.meta.get("root", 1))
    mets = metrics(topology, root)
    delta = mets.delta
    colors = trace.final_colors()
    all_colored = len(colors) == topology.n
    enforce_validity = protocol in ("seq_tree", "par_tree")
    validity_ok, validity_off, consistency_ok, consistency_off = check_coloring(
        topology, colors, delta, enforce_validity
    )
    counts = trace.broadcast_counts()
    checks = check_bounds(trace, topology)
    tdma = 0
    if all_colored and consistency_ok:
        tdma = tdma_replay(topology, colors, delta)
    clash_count = len(trace.clashes)
    if trace.meta.get("sibling_end_parallel"):
        # relaxed mode: END messages may collide at parents, which discard them
        kind_of = {(rec.round, rec.origin): rec.message.kind for rec in trace.broadcasts}
        clash_count = sum(
            1
            for e in trace.clashes
            if not all(kind_of.get((e.round, p)) == "END" for p in e.participants)
        )
    return VerificationReport(
        protocol=protocol,
        n=topology.n,
        delta=delta,
        depth=mets.depth,
        validity_ok=validity_ok,
        validity_offenders=validity_off,
        consistency_ok=consistency_ok,
        consistency_offenders=consistency_off,
        termination_status=trace.status,
        claimed_by=trace.claimed_by,
        all_colored=all_colored,
        palette_size=len(set(colors.values())),
        message_counts=counts,
        completion_round=completion_round(trace),
        bound_checks=checks,
        tdma_clashes=tdma,
        clash_events=clash_count,
        clash_recheck_ok=recheck_clashes(trace, topology),
    )
