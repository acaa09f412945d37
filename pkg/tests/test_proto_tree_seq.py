import random

import pytest

from conftest import round_budget, run_seq, tree_corpus
from d2color.engine import ProtocolViolation
from d2color.messages import ColorSeq, TermSeq
from d2color.proto_tree_seq import SeqProcess, make_simulation
from d2color.scenarios import builtin_topology
from d2color.topology import generate_random_tree, metrics
from d2color.verifier import check_coloring, d1_size_violations, verify_run


class TestPath3HandTrace:
    """Frozen depth-first walk over 1-2-3 started at process 1."""

    def setup_method(self):
        self.topo = builtin_topology("path3")
        self.trace = run_seq(self.topo, 1)

    def test_colors(self):
        assert self.trace.final_colors() == {1: 0, 2: 1, 3: 2}

    def test_termination(self):
        assert self.trace.status == "terminated"
        assert self.trace.claimed_by == 1

    def test_claim_round(self):
        claimed = [c for c in self.trace.changes if c.state.get("claimed")]
        assert claimed and claimed[0].round == 5

    def test_message_counts(self):
        assert self.trace.broadcast_counts() == {"COLOR_SEQ": 2, "TERM_SEQ": 2}

    def test_no_clashes(self):
        assert self.trace.clashes == []

    def test_middle_got_color_1_from_parent_payload(self):
        first = self.trace.broadcasts[0].message
        assert first == ColorSeq(dest=2, sender=1, sender_cl=0, d1colors=(-1,))

    def test_root_learned_max_degree(self):
        final = self.trace.final_states()[1]
        assert final["max_d"] == 2


class TestSmallCases:
    def test_root_takes_color_0_and_self_parent(self):
        trace = run_seq(builtin_topology("star4"), 1)
        root = trace.final_states()[1]
        assert root["color"] == 0
        assert root["parent"] == 1

    def test_singleton_claims_without_broadcasting(self):
        trace = run_seq(builtin_topology("singleton"), 1)
        assert trace.status == "terminated"
        assert trace.broadcasts == []
        assert trace.final_colors() == {1: 0}

    def test_root_with_children_enters_active_state(self):
        trace = run_seq(builtin_topology("star4"), 1)
        first = next(c for c in trace.changes if c.proc == 1)
        assert first.state["state"] == 1

    def test_leaf_enters_report_state_directly(self):
        trace = run_seq(builtin_topology("path3"), 1)
        leaf_states = [c.state["state"] for c in trace.changes if c.proc == 3]
        assert leaf_states[0] == 3


class TestHandlers:
    def make_proc(self, **kw):
        return SeqProcess(2, ident=20, neighbor_ids=(10, 30), **kw)

    def test_color_for_other_destination_ignored(self):
        p = self.make_proc()
        p.on_message(ColorSeq(dest=99, sender=10, sender_cl=0, d1colors=()))
        assert p.state == 0 and p.color is None

    def test_second_addressed_color_rejected(self):
        p = self.make_proc()
        p.on_message(ColorSeq(dest=20, sender=10, sender_cl=0, d1colors=(-1,)))
        with pytest.raises(ProtocolViolation):
            p.on_message(ColorSeq(dest=20, sender=30, sender_cl=1, d1colors=()))

    def test_palette_skips_parent_and_carried_colors(self):
        p = self.make_proc()
        p.on_message(ColorSeq(dest=20, sender=10, sender_cl=1, d1colors=(0,)))
        assert p.color == 2

    def test_report_in_wrong_state_rejected(self):
        p = self.make_proc()
        with pytest.raises(ProtocolViolation):
            p.on_message(TermSeq(dest=20, sender=30, sender_cl=1, max_d=1))

    def test_report_from_unexpected_child_rejected(self):
        p = self.make_proc()
        p.on_message(ColorSeq(dest=20, sender=10, sender_cl=0, d1colors=()))
        p.on_clock(1)  # sends to child 30, state moves to waiting
        with pytest.raises(ProtocolViolation):
            p.on_message(TermSeq(dest=20, sender=77, sender_cl=2, max_d=1))


class TestCorpusProperties:
    CORPUS = list(tree_corpus(25, 200, 10, seed=77))

    @pytest.mark.parametrize("idx", range(0, 25, 4))
    def test_run_verifies(self, idx):
        topo, root = self.CORPUS[idx]
        trace = run_seq(topo, root)
        report = verify_run(topo, trace)
        assert report.ok(), report.to_text()

    def test_sequential_flow_and_max_degree_learning(self):
        for topo, root in self.CORPUS[:10]:
            trace = run_seq(topo, root)
            assert trace.max_broadcasts_per_round() <= 1
            assert trace.clashes == []
            delta = metrics(topo, root).delta
            assert trace.final_states()[root]["max_d"] == delta

    def test_carried_color_sets_stay_below_max_degree(self):
        # every color broadcast carries fewer than delta real colors: the
        # sender always has at least one uncolored neighbor left at that point
        for topo, root in self.CORPUS[:10]:
            delta = metrics(topo, root).delta
            trace = run_seq(topo, root)
            for rec in trace.broadcasts:
                if rec.message.kind == "COLOR_SEQ":
                    real = [c for c in rec.message.d1colors if c >= 0]
                    assert len(real) < delta

    def test_knowledge_sets_reach_delta_after_last_report(self):
        # the strict snapshot bound does not survive a subtree's final
        # report: the parent then holds all of its neighbors' colors
        topo = builtin_topology("path3")
        trace = run_seq(topo, 1)
        violations = d1_size_violations(trace, 2)
        assert (3, 2, 2) in violations


class TestRandomNextChild:
    def test_random_order_still_colors_correctly(self):
        topo = generate_random_tree(60, 5, seed=9)
        delta = metrics(topo, 1).delta
        for seed in (0, 1, 2):
            sim = make_simulation(topo, 1, next_child_order="random", seed=seed)
            trace = sim.run(round_budget(60, delta))
            ok_v, _, ok_c, _ = check_coloring(topo, trace.final_colors(), delta)
            assert trace.status == "terminated" and ok_v and ok_c

    def test_orders_can_differ_but_counts_match(self):
        topo = generate_random_tree(60, 5, seed=9)
        delta = metrics(topo, 1).delta
        base = make_simulation(topo, 1).run(round_budget(60, delta))
        rand = make_simulation(topo, 1, next_child_order="random", seed=4).run(
            round_budget(60, delta)
        )
        assert base.broadcast_counts() == rand.broadcast_counts()


class TestReusedIdentities:
    def test_long_path_with_reused_identities(self):
        from d2color.topology import assign_identities, build_topology

        edges = [(i, i + 1) for i in range(1, 20)]
        topo = assign_identities(
            build_topology(edges, kind="tree"), "distance2_unique_with_reuse", seed=2
        )
        assert len(set(topo.identities[1:])) < 19
        trace = run_seq(topo, 10)
        report = verify_run(topo, trace)
        assert report.ok(), report.to_text()
