"""Synchronous round engine: clock, broadcast delivery, clash detection, trace.

One round: the clock ticks, clock-guard handlers may each emit at most one
broadcast (broadcasts happen only at the beginning of a slot), external
messages for the round are handed over off-medium, clashes are detected over
the collected broadcast set, surviving messages are delivered to neighbors
within the same round (or the next one, for simulations built with
delivery_delay=1), reception handlers run, and changed process states are
snapshotted.  State changed during round t can therefore trigger a broadcast
no earlier than round t+1.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from enum import Enum

from .messages import Message, New, Start
from .topology import Topology

FAIL_FAST = "fail_fast"
RECORD_AND_CORRUPT = "record_and_corrupt"


class EngineError(Exception):
    pass


class DuplicateStart(EngineError):
    pass


class ProtocolViolation(EngineError):
    pass


@dataclass(frozen=True)
class ClashEvent:
    round: int
    victim: int
    clash_kind: str  # "collision" | "conflict"
    participants: frozenset[int]


class ClashDetected(EngineError):
    def __init__(self, events: list[ClashEvent]):
        super().__init__(f"{len(events)} clash event(s) at round {events[0].round}")
        self.events = events


@dataclass(frozen=True)
class BroadcastRecord:
    round: int
    origin: int
    message: Message
    receivers: tuple[int, ...]  # clean deliveries only


@dataclass(frozen=True)
class ExternalRecord:
    round: int
    target: int
    message: Message


@dataclass(frozen=True)
class StateChange:
    round: int
    proc: int
    state: dict


class RunStatus(str, Enum):
    TERMINATED = "terminated"
    PARTIAL = "partial"
    BUDGET_EXHAUSTED = "budget_exhausted"


@dataclass
class Trace:
    """Append-only audit log of one simulation run."""

    meta: dict = field(default_factory=dict)
    externals: list[ExternalRecord] = field(default_factory=list)
    broadcasts: list[BroadcastRecord] = field(default_factory=list)
    clashes: list[ClashEvent] = field(default_factory=list)
    changes: list[StateChange] = field(default_factory=list)
    status: str = ""
    rounds: int = 0
    claimed_by: int | None = None

    def broadcast_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for rec in self.broadcasts:
            counts[rec.message.kind] = counts.get(rec.message.kind, 0) + 1
        return counts

    def final_states(self) -> dict[int, dict]:
        out: dict[int, dict] = {}
        for ch in self.changes:
            out[ch.proc] = ch.state
        return out

    def final_colors(self) -> dict[int, int]:
        colors = {}
        for proc, state in self.final_states().items():
            c = state.get("color")
            if c is not None:
                colors[proc] = c
        return colors

    def max_broadcasts_per_round(self) -> int:
        per_round: dict[int, int] = {}
        for rec in self.broadcasts:
            per_round[rec.round] = per_round.get(rec.round, 0) + 1
        return max(per_round.values(), default=0)


class Process:
    """Handler contract the engine drives.

    Subclasses see only their identity and neighbor identities; the index is
    the engine's delivery address and must never enter a message payload.
    """

    def __init__(self, index: int, ident: int, neighbor_ids: tuple[int, ...]):
        self.index = index
        self.ident = ident
        self.neighbor_ids = frozenset(neighbor_ids)
        self.degree = len(neighbor_ids)
        self.dirty = False
        self.claimed_termination = False

    def on_clock(self, clock: int) -> Message | None:
        return None

    def on_message(self, msg: Message) -> None:
        pass

    def on_external(self, msg: Message, clock: int) -> None:
        raise ProtocolViolation(f"unexpected external message {msg.kind}")

    def snapshot(self) -> dict:
        return {}

    @property
    def may_act(self) -> bool:
        """True when a future clock tick alone could make this process broadcast."""
        return False

    @property
    def terminal(self) -> bool:
        return False


class Simulation:
    def __init__(
        self,
        topology: Topology,
        processes: dict[int, Process],
        policy: str = FAIL_FAST,
        done_fn=None,
        clash_exempt=None,
        handler_order_seed: int | None = None,
        delivery_delay: int = 0,
        meta: dict | None = None,
    ):
        if set(processes) != set(range(1, topology.n + 1)):
            raise EngineError("need exactly one process per topology index")
        if delivery_delay not in (0, 1):
            raise EngineError("delivery_delay must be 0 (same slot) or 1 (next slot)")
        self.topology = topology
        self.processes = processes
        self.policy = policy
        self.done_fn = done_fn or (lambda sim: sim.claimer() is not None)
        self.clash_exempt = clash_exempt
        self.delivery_delay = delivery_delay
        self.clock = -1
        self.trace = Trace(meta=dict(meta or {}))
        self._externals: dict[int, list[tuple[int, Message]]] = {}
        self._pending_inbox: dict[int, list[tuple[int, Message]]] = {}
        self._last_snap: dict[int, dict] = {}
        self._claimer: int | None = None
        self._round_was_active = True
        self._start_scheduled = False
        self._order_rng = (
            random.Random(handler_order_seed) if handler_order_seed is not None else None
        )

    def schedule_external(self, round: int, target: int, message: Message) -> None:
        if round < 0:
            raise EngineError("external messages are scheduled at rounds >= 0")
        if not isinstance(message, (Start, New)):
            raise EngineError(f"{message.kind} cannot be delivered externally")
        if isinstance(message, Start):
            if self._start_scheduled:
                raise DuplicateStart("a scenario carries at most one START")
            self._start_scheduled = True
        self._externals.setdefault(round, []).append((target, message))

    def claimer(self) -> int | None:
        if self._claimer is None:
            for i in self._indices():
                if self.processes[i].claimed_termination:
                    self._claimer = i
                    break
        return self._claimer

    def set_topology(self, topology: Topology, new_processes: dict[int, Process]) -> None:
        """Swap in an extended topology mid-run (dynamic join support)."""
        self.topology = topology
        self.processes = dict(self.processes)
        self.processes.update(new_processes)

    def _indices(self) -> range:
        return range(1, self.topology.n + 1)

    def _handler_order(self) -> list[int]:
        order = list(self._indices())
        if self._order_rng is not None:
            self._order_rng.shuffle(order)
        return order

    def step_round(self) -> None:
        self.clock += 1
        t = self.clock

        # broadcasts are committed at the beginning of the slot
        pending: dict[int, Message] = {}
        for i in self._handler_order():
            msg = self.processes[i].on_clock(t)
            if msg is not None:
                if i in pending:
                    raise ProtocolViolation(f"process {i} broadcast twice in round {t}")
                pending[i] = msg

        # off-medium deliveries (START, NEW to a joiner) are processed within
        # the slot, after its broadcast opportunities are gone
        externals = self._externals.pop(t, ())
        for target, msg in externals:
            self.processes[target].on_external(msg, t)
            self.trace.externals.append(ExternalRecord(t, target, msg))

        events = self._detect_clashes(t, pending)
        fatal = events
        if self.clash_exempt is not None:
            fatal = [e for e in events if not self.clash_exempt(e, pending)]
        self.trace.clashes.extend(events)

        corrupted_at = {e.victim for e in events}
        inbox: dict[int, list[tuple[int, Message]]] = {}
        for origin in sorted(pending):
            msg = pending[origin]
            receivers = []
            for w in self.topology.neighbors(origin):
                if w not in corrupted_at:
                    receivers.append(w)
                    inbox.setdefault(w, []).append((origin, msg))
            self.trace.broadcasts.append(BroadcastRecord(t, origin, msg, tuple(receivers)))

        # fail-fast aborts after the physical broadcasts are on record but
        # before any reception handler runs
        if fatal and self.policy == FAIL_FAST:
            self._finish_snapshots(t)
            raise ClashDetected(fatal)

        if self.delivery_delay == 0:
            ready = inbox
        else:
            ready = self._pending_inbox
            self._pending_inbox = inbox
        order = sorted(ready) if self._order_rng is None else [
            w for w in self._handler_order() if w in ready
        ]
        for w in order:
            deliveries = ready[w]
            if len(deliveries) > 1:
                deliveries = sorted(deliveries, key=lambda p: p[0])
            for _, msg in deliveries:
                self.processes[w].on_message(msg)

        self._round_was_active = bool(pending or ready or externals)
        self._finish_snapshots(t)

    def _detect_clashes(self, t: int, pending: dict[int, Message]) -> list[ClashEvent]:
        return detect_clashes(self.topology, t, set(pending))

    def _finish_snapshots(self, t: int) -> None:
        changes = self.trace.changes
        last = self._last_snap
        for i, p in self.processes.items():
            if p.dirty:
                snap = p.snapshot()
                if snap != last.get(i):
                    changes.append(StateChange(t, i, snap))
                    last[i] = snap
                p.dirty = False

    def _quiescent(self) -> bool:
        if self._externals or any(self._pending_inbox.values()):
            return False
        procs = self.processes
        return all(not procs[i].may_act for i in self._indices())

    def run(self, max_rounds: int) -> Trace:
        steps = 0
        status = None
        while True:
            if self.done_fn(self):
                status = RunStatus.TERMINATED
                break
            if steps >= max_rounds:
                status = RunStatus.BUDGET_EXHAUSTED
                break
            self.step_round()
            steps += 1
            # a deadlock can only persist through traffic-free rounds, so the
            # (linear) quiescence scan is needed only on those
            if not self._round_was_active and not self.done_fn(self) and self._quiescent():
                status = RunStatus.PARTIAL
                break
        self.trace.status = status.value
        self.trace.rounds = steps
        self.trace.claimed_by = self.claimer()
        return self.trace


def detect_clashes(topology: Topology, t: int, origins: set[int]) -> list[ClashEvent]:
    """Clash events implied by one round's broadcast set.

    A collision hits any process with two or more broadcasting neighbors; a
    conflict hits any broadcaster with at least one broadcasting neighbor.
    """
    if len(origins) < 2:
        return []
    events = []
    affected = set()
    for o in origins:
        affected.add(o)
        affected.update(topology.neighbors(o))
    for v in sorted(affected):
        incoming = origins.intersection(topology.neighbors(v))
        if len(incoming) >= 2:
            events.append(ClashEvent(t, v, "collision", frozenset(incoming)))
        if v in origins and incoming:
            events.append(ClashEvent(t, v, "conflict", frozenset(incoming | {v})))
    return events


def recheck_clashes(trace: Trace, topology: Topology) -> bool:
    """Independently re-derive clash events from broadcast records.

    Returns True when the recorded events are exactly the ones implied by the
    recorded broadcasts (soundness and completeness of the detector).
    """
    by_round: dict[int, set[int]] = {}
    for rec in trace.broadcasts:
        by_round.setdefault(rec.round, set()).add(rec.origin)
    expected: set[tuple[int, int, str, frozenset[int]]] = set()
    for t, origins in by_round.items():
        for e in detect_clashes(topology, t, origins):
            expected.add((e.round, e.victim, e.clash_kind, e.participants))
    recorded = {(e.round, e.victim, e.clash_kind, e.participants) for e in trace.clashes}
    return expected == recorded
