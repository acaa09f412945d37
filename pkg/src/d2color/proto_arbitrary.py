"""Sequential distance-2 coloring for arbitrary connected graphs.

The control flow walks the graph like the sequential tree protocol but colors
are proposed by the visiting parent and may be refused: a receiver that spots
a clash between the proposal (or the sender's own advertised color) and the
colors it already knows triggers a correction exchange that recolors the
sender, relays the fixed color two hops out, and then resumes the traversal.

Knowledge sets d1colors/d2colors are insertion-ordered without duplicates
because the relay step retracts exactly the most recently recorded color.

States: 0 idle, 1 refusing (will send a correction request), 2 will propose a
color to an uncolored neighbor, 3 will report completion upward, 4 corrected
(will relay its new color), 5 will resume the traversal, 6 will rebroadcast a
relayed correction.  Every broadcast returns the process to state 0.
"""

from __future__ import annotations

from .engine import FAIL_FAST, Process, ProtocolViolation, Simulation
from .messages import ColorArb, Correct, CorrectedColor, ResumeColoring, Start, TermArb
from .topology import Topology


class OrderedColorSet:
    """Insertion-ordered colors with set membership and last-added rollback."""

    __slots__ = ("values", "_members")

    def __init__(self, values=()):
        self.values: list[int] = []
        self._members: set[int] = set()
        for v in values:
            self.add(v)

    def add(self, color: int) -> None:
        if color not in self._members:
            self.values.append(color)
            self._members.add(color)

    def add_all(self, colors) -> None:
        for c in colors:
            self.add(c)

    def remove_last(self) -> int:
        if not self.values:
            raise ProtocolViolation("rollback of an empty color sequence")
        c = self.values.pop()
        self._members.discard(c)
        return c

    def __contains__(self, color: int) -> bool:
        return color in self._members

    def __iter__(self):
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(self.values)


class ArbProcess(Process):
    def __init__(
        self,
        index: int,
        ident: int,
        neighbor_ids: tuple[int, ...],
        next_schedule: dict[int, list[int]] | None = None,
    ):
        super().__init__(index, ident, neighbor_ids)
        self.state = 0
        self.d1 = OrderedColorSet()
        self.d2 = OrderedColorSet()
        self.sender = 0
        self.parent: int | None = None
        self.to_color: set[int] = set(neighbor_ids)
        self.color: int | None = None
        self.corrected_cl: int | None = None
        self._schedule = list((next_schedule or {}).get(ident, ()))

    def _pick_next(self) -> int:
        if self._schedule:
            choice = self._schedule.pop(0)
            if choice not in self.to_color:
                raise ProtocolViolation(
                    f"pinned next-child {choice} is not an uncolored neighbor"
                )
            return choice
        return min(self.to_color)

    def _first_free(self, *excluded_sets) -> int:
        c = 0
        while any(c in s for s in excluded_sets):
            c += 1
        return c

    def on_external(self, msg, clock):
        if not isinstance(msg, Start):
            raise ProtocolViolation(f"unexpected external {msg.kind}")
        self._on_color(ColorArb(self.ident, self.ident, -1, 0, ()))

    def on_message(self, msg):
        if isinstance(msg, ColorArb):
            self._on_color(msg)
        elif isinstance(msg, TermArb):
            self._on_term(msg)
        elif isinstance(msg, Correct):
            self._on_correct(msg)
        elif isinstance(msg, CorrectedColor):
            self._on_corrected(msg)
        elif isinstance(msg, ResumeColoring):
            self._on_resume(msg)

    def _on_color(self, msg: ColorArb) -> None:
        # every receiver learns the sender is colored and absorbs its d1 set
        self.to_color.discard(msg.sender)
        self.d2.add_all(msg.d1colors)
        self.dirty = True
        if msg.dest == self.ident and (
            msg.sender_cl in msg.d1colors
            or msg.proposed_color in self.d1
            or msg.proposed_color in self.d2
        ):
            # refusal: the sender advertises a clash of its own color, or the
            # proposal collides with colors already known here
            self.state = 1
            self.sender = msg.sender
        elif msg.dest == self.ident and self.to_color:
            self.state = 2
            self.color = msg.proposed_color
            self.parent = msg.sender
            self.d1.add(msg.sender_cl)
        elif msg.dest == self.ident and not self.to_color:
            self.state = 3
            self.parent = msg.sender
            self.color = msg.proposed_color
        if msg.dest != self.ident:
            self.d2.add(msg.proposed_color)
            self.d1.add(msg.sender_cl)

    def _on_term(self, msg: TermArb) -> None:
        # overhearing a report still reveals the reporter needs no color
        self.to_color.discard(msg.sender)
        self.dirty = True
        if msg.dest != self.ident:
            return
        if not self.to_color:
            if self.parent == self.ident:
                self.claimed_termination = True
            else:
                self.state = 3
        else:
            self.d1.add(msg.color)
            self.state = 2

    def _on_correct(self, msg: Correct) -> None:
        if msg.dest != self.ident:
            return
        self.d2.add_all(msg.d1colors)
        self.d1.add(msg.color)
        self.color = self._first_free(self.d1, self.d2)
        self.sender = msg.sender
        self.state = 4
        self.dirty = True

    def _on_corrected(self, msg: CorrectedColor) -> None:
        if msg.dest1 != self.ident and msg.dest1 != -1:
            self.d1.remove_last()
            self.d1.add(msg.color)
            self.dirty = True
        if msg.dest1 != self.ident and msg.dest1 == -1:
            self.d2.remove_last()
            self.d2.add(msg.color)
            self.dirty = True
        if msg.dest2 == self.ident:
            self.state = 6
            self.corrected_cl = msg.color
            self.dirty = True
        if msg.dest1 == -1 and msg.dest2 == -1 and self.color == msg.color:
            self.state = 5
            self.dirty = True

    def _on_resume(self, msg: ResumeColoring) -> None:
        if msg.dest != self.ident:
            return
        self.parent = msg.sender
        self.state = 2 if self.to_color else 3
        self.dirty = True

    def on_clock(self, clock):
        if self.state == 0:
            return None
        state = self.state
        self.state = 0
        self.dirty = True
        if state == 1:
            self.color = self._first_free(self.d1, self.d2)
            return Correct(self.sender, self.ident, self.color, self.d1.as_tuple())
        if state == 2:
            proposal = self._first_free(self.d1, {self.color})
            nxt = self._pick_next()
            return ColorArb(nxt, self.ident, self.color, proposal, self.d1.as_tuple())
        if state == 3:
            return TermArb(self.parent, self.color, self.ident)
        if state == 4:
            return CorrectedColor(self.sender, self.parent, self.ident, self.color)
        if state == 5:
            return ResumeColoring(self.sender, self.ident)
        if state == 6:
            return CorrectedColor(-1, -1, self.ident, self.corrected_cl)
        raise ProtocolViolation(f"process {self.ident} woke in state {state}")

    def snapshot(self) -> dict:
        return {
            "state": self.state,
            "color": self.color,
            "parent": self.parent,
            "sender": self.sender,
            "corrected_cl": self.corrected_cl,
            "d1colors": self.d1.as_tuple(),
            "d2colors": self.d2.as_tuple(),
            "to_color": tuple(sorted(self.to_color)),
            "claimed": self.claimed_termination,
        }

    @property
    def may_act(self) -> bool:
        return self.state != 0

    @property
    def terminal(self) -> bool:
        return self.claimed_termination


def make_simulation(
    topology: Topology,
    root: int,
    start_round: int = 0,
    policy: str = FAIL_FAST,
    next_schedule: dict[int, list[int]] | None = None,
    handler_order_seed: int | None = None,
    meta: dict | None = None,
) -> Simulation:
    processes = {
        i: ArbProcess(i, topology.identity(i), topology.neighbor_identities(i), next_schedule)
        for i in range(1, topology.n + 1)
    }
    base_meta = {"protocol": "arbitrary", "root": root, "start_round": start_round,
                 "policy": policy}
    base_meta.update(meta or {})
    # this protocol's reference execution receives each broadcast in the slot
    # after it was sent, unlike the tree protocols' same-slot model
    sim = Simulation(topology, processes, policy=policy,
                     done_fn=lambda sim: sim.processes[root].claimed_termination,
                     handler_order_seed=handler_order_seed,
                     delivery_delay=1, meta=base_meta)
    sim.schedule_external(start_round, root, Start())
    return sim
