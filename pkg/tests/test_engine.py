import pytest

from d2color.engine import (
    ClashDetected,
    DuplicateStart,
    EngineError,
    Process,
    RECORD_AND_CORRUPT,
    Simulation,
    detect_clashes,
    recheck_clashes,
)
from d2color.messages import Start, TermSeq
from d2color.proto_tree_seq import make_simulation as make_seq
from d2color.scenarios import builtin_topology
from d2color.topology import build_topology
from d2color.traceio import trace_to_text


class Beacon(Process):
    """Test process that broadcasts in a fixed set of rounds."""

    def __init__(self, index, ident, neighbor_ids, rounds=()):
        super().__init__(index, ident, neighbor_ids)
        self.rounds = set(rounds)
        self.received = []

    def on_clock(self, clock):
        if clock in self.rounds:
            return TermSeq(0, self.ident, 0, 0)
        return None

    def on_message(self, msg):
        self.received.append(msg)


def beacon_sim(topology, schedule, policy="fail_fast"):
    procs = {
        i: Beacon(i, topology.identity(i), topology.neighbor_identities(i),
                  schedule.get(i, ()))
        for i in range(1, topology.n + 1)
    }
    return Simulation(topology, procs, policy=policy, done_fn=lambda s: False)


def line4():
    return build_topology([(1, 2), (2, 3), (3, 4)], kind="tree")


class TestClock:
    def test_starts_at_minus_one_and_ticks(self):
        sim = beacon_sim(line4(), {})
        assert sim.clock == -1
        sim.step_round()
        assert sim.clock == 0
        sim.step_round()
        assert sim.clock == 1

    def test_empty_rounds_advance_without_events(self):
        sim = beacon_sim(line4(), {})
        for _ in range(5):
            sim.step_round()
        assert sim.trace.broadcasts == []
        assert sim.trace.clashes == []


class TestConstruction:
    def test_requires_one_process_per_index(self):
        topo = line4()
        procs = {i: Beacon(i, i, ()) for i in (1, 2, 3)}
        with pytest.raises(EngineError):
            Simulation(topo, procs)

    def test_rejects_unknown_delay(self):
        topo = line4()
        procs = {i: Beacon(i, i, ()) for i in range(1, 5)}
        with pytest.raises(EngineError):
            Simulation(topo, procs, delivery_delay=2)


class TestExternals:
    def test_duplicate_start_rejected(self):
        sim = beacon_sim(line4(), {})
        sim.schedule_external(0, 1, Start())
        with pytest.raises(DuplicateStart):
            sim.schedule_external(1, 2, Start())

    def test_negative_round_rejected(self):
        sim = beacon_sim(line4(), {})
        with pytest.raises(EngineError):
            sim.schedule_external(-1, 1, Start())

    def test_broadcast_cannot_be_external(self):
        sim = beacon_sim(line4(), {})
        with pytest.raises(EngineError):
            sim.schedule_external(0, 1, TermSeq(0, 1, 0, 0))


class TestClashDetection:
    def test_two_neighbors_conflict_and_common_collision(self):
        # 1-2, 2-3, 1-3 triangle: 1 and 3 broadcast; conflicts at both, plus
        # a collision at 2 (two broadcasting neighbors) and at each other
        topo = build_topology([(1, 2), (2, 3), (1, 3)], kind="general")
        events = detect_clashes(topo, 0, {1, 3})
        kinds = {(e.victim, e.clash_kind) for e in events}
        assert (2, "collision") in kinds
        assert (1, "conflict") in kinds
        assert (3, "conflict") in kinds

    def test_distance2_broadcasters_collide_at_middle_only(self):
        topo = line4()
        events = detect_clashes(topo, 3, {1, 3})
        assert [(e.victim, e.clash_kind) for e in events] == [(2, "collision")]
        assert events[0].participants == frozenset({1, 3})

    def test_single_broadcaster_never_clashes(self):
        assert detect_clashes(line4(), 0, {2}) == []

    def test_fail_fast_raises(self):
        sim = beacon_sim(line4(), {1: [0], 2: [0]})
        with pytest.raises(ClashDetected) as exc:
            sim.step_round()
        assert any(e.clash_kind == "conflict" for e in exc.value.events)

    def test_all_broadcast_corrupt_mode_delivers_nothing(self):
        topo = line4()
        sim = beacon_sim(topo, {i: [0] for i in range(1, 5)}, policy=RECORD_AND_CORRUPT)
        sim.step_round()
        assert all(not sim.processes[i].received for i in range(1, 5))
        assert all(rec.receivers == () for rec in sim.trace.broadcasts)
        assert sim.trace.clashes

    def test_per_receiver_corruption(self):
        # 1 and 3 broadcast: 2 sits between them (collision, receives
        # nothing); 4 hears only 3 and receives cleanly
        topo = line4()
        sim = beacon_sim(topo, {1: [0], 3: [0]}, policy=RECORD_AND_CORRUPT)
        sim.step_round()
        assert sim.processes[2].received == []
        assert len(sim.processes[4].received) == 1
        rec3 = next(r for r in sim.trace.broadcasts if r.origin == 3)
        assert rec3.receivers == (4,)

    def test_delivery_synchrony_no_clash(self):
        topo = line4()
        sim = beacon_sim(topo, {2: [0]})
        sim.step_round()
        rec = sim.trace.broadcasts[0]
        assert rec.receivers == (1, 3)
        assert len(sim.processes[1].received) == 1
        assert len(sim.processes[3].received) == 1

    def test_recheck_accepts_honest_trace(self):
        topo = line4()
        sim = beacon_sim(topo, {1: [0], 3: [0], 2: [2]}, policy=RECORD_AND_CORRUPT)
        for _ in range(4):
            sim.step_round()
        assert recheck_clashes(sim.trace, topo)

    def test_recheck_rejects_doctored_trace(self):
        topo = line4()
        sim = beacon_sim(topo, {1: [0], 3: [0]}, policy=RECORD_AND_CORRUPT)
        sim.step_round()
        sim.trace.clashes.pop()
        assert not recheck_clashes(sim.trace, topo)


class TestDeliveryDelay:
    def test_next_slot_delivery(self):
        topo = line4()
        procs = {
            i: Beacon(i, topo.identity(i), topo.neighbor_identities(i),
                      [0] if i == 2 else [])
            for i in range(1, 5)
        }
        sim = Simulation(topo, procs, done_fn=lambda s: False, delivery_delay=1)
        sim.step_round()
        assert procs[1].received == []
        sim.step_round()
        assert len(procs[1].received) == 1


class TestRunLoop:
    def test_budget_zero(self):
        sim = make_seq(builtin_topology("path3"), 1)
        trace = sim.run(0)
        assert trace.status == "budget_exhausted"
        assert trace.rounds == 0

    def test_partial_on_quiescence(self):
        sim = beacon_sim(line4(), {2: [0]})
        trace = sim.run(1000)
        assert trace.status == "partial"
        assert trace.rounds < 1000

    def test_terminated(self):
        sim = make_seq(builtin_topology("path3"), 1)
        trace = sim.run(100)
        assert trace.status == "terminated"
        assert trace.claimed_by == 1


class TestDetectorAgainstBruteForce:
    def test_random_broadcast_sets(self):
        # independent O(n^2) derivation of the same definitions
        import random

        from d2color.topology import generate_random_connected

        rng = random.Random(31)
        for k in range(25):
            n = rng.randint(2, 25)
            topo = generate_random_connected(n, rng.randint(0, n), seed=k)
            origins = {i for i in range(1, n + 1) if rng.random() < 0.3}
            got = {
                (e.victim, e.clash_kind, e.participants)
                for e in detect_clashes(topo, 0, origins)
            }
            want = set()
            for v in range(1, n + 1):
                sending_neighbors = frozenset(
                    u for u in origins if v in topo.neighbors(u)
                )
                if len(sending_neighbors) >= 2:
                    want.add((v, "collision", sending_neighbors))
                if v in origins and sending_neighbors:
                    want.add((v, "conflict", sending_neighbors | {v}))
            assert got == want, (k, origins)


class TestMessageBits:
    def test_payload_accounting(self):
        from d2color.messages import ColorSeq, color_seq_bits, color_seq_bits_bound

        msg = ColorSeq(dest=2, sender=1, sender_cl=0, d1colors=(-1, 1, 3))
        # two identity fields plus one slot for the sender color and one per
        # real carried color; the sentinel -1 costs nothing
        assert color_seq_bits(msg, n=8, delta=4) == 2 * 3 + 3 * 3
        assert color_seq_bits_bound(n=8, delta=4) == 2 * 3 + 4 * 3

    def test_degenerate_sizes_stay_positive(self):
        from d2color.messages import ColorSeq, color_seq_bits, color_seq_bits_bound

        msg = ColorSeq(dest=2, sender=1, sender_cl=0, d1colors=())
        assert color_seq_bits(msg, n=2, delta=1) <= color_seq_bits_bound(n=2, delta=1)


class TestDeterminism:
    def test_identical_runs_identical_traces(self):
        topo = builtin_topology("binary15")
        t1 = make_seq(topo, 1).run(1000)
        t2 = make_seq(topo, 1).run(1000)
        assert trace_to_text(t1) == trace_to_text(t2)

    def test_shuffled_handler_order_is_observationally_irrelevant(self):
        topo = builtin_topology("binary15")
        base = make_seq(topo, 1).run(1000)
        for seed in (1, 2, 3):
            shuffled = make_seq(topo, 1, handler_order_seed=seed).run(1000)
            assert trace_to_text(shuffled) == trace_to_text(base)
