import random

import pytest

from conftest import round_budget, tree_corpus
from d2color.proto_tree_par import (
    ConsistencyBroken,
    DegreeMismatch,
    IdentityPreconditionViolated,
    JoinError,
    ParentSaturated,
    SaturatedEndpoint,
    execute_join,
    make_simulation,
    merge_trees,
)
from d2color.scenarios import builtin_topology
from d2color.topology import build_topology, metrics, validate_identities
from d2color.verifier import d2_conflicts, tdma_replay


def completed_sim(topology, root, **kw):
    sim = make_simulation(topology, root, **kw)
    delta = metrics(topology, root).delta
    trace = sim.run(round_budget(topology.n, delta))
    assert trace.status == "terminated"
    return sim


class TestJoin:
    def test_join_under_path_end(self):
        sim = completed_sim(builtin_topology("path3"), 2)
        out = execute_join(sim, 3)
        # the path's palette is {0,1,2}; the end knows its own 2 and the
        # middle's 1, leaving exactly 0
        assert out.color == 0
        colors = sim.trace.final_colors()
        assert colors[out.joiner_index] == 0
        assert d2_conflicts(out.topology, colors) == []
        validate_identities(out.topology)

    def test_join_announcement_rides_the_parent_slot(self):
        sim = completed_sim(builtin_topology("path3"), 2)
        out = execute_join(sim, 3)
        rec = next(r for r in sim.trace.broadcasts if r.message.kind == "NEW")
        parent_color = sim.trace.final_states()[3]["color"]
        assert rec.round % 3 == parent_color
        assert rec.origin == 3
        assert out.joiner_index in rec.receivers

    def test_join_identity_avoids_the_new_neighborhood(self):
        sim = completed_sim(builtin_topology("path3"), 2)
        out = execute_join(sim, 3)
        taken = {out.topology.identity(3)} | {
            out.topology.identity(j) for j in out.topology.neighbors(3)
        }
        assert out.joiner_identity in taken  # it is now part of that set
        assert len(taken) == len(out.topology.neighbors(3)) + 1

    def test_saturated_parent_rejected(self):
        sim = completed_sim(builtin_topology("path3"), 2)
        with pytest.raises(ParentSaturated):
            execute_join(sim, 2)

    def test_join_requires_finished_end_wave(self):
        sim = completed_sim(builtin_topology("path3"), 2, end_phase=False)
        with pytest.raises(JoinError):
            execute_join(sim, 3)

    def test_external_new_also_joins(self):
        from d2color.messages import New
        from d2color.proto_tree_par import JoinerProcess

        j = JoinerProcess(4, ident=9, neighbor_ids=(3,))
        j.on_external(New(cl=0, delta=2, new_id=9), clock=12)
        assert j.joined and j.color == 0 and j.max_nb_cl == 3

    def test_seeded_joins_reverify(self):
        rng = random.Random(99)
        done = 0
        for topo, root in tree_corpus(25, 60, 6, seed=31):
            sim = completed_sim(topo, root)
            delta = metrics(topo, root).delta
            parents = [i for i in range(1, topo.n + 1) if topo.degree(i) < delta]
            if not parents:
                continue
            out = execute_join(sim, parents[rng.randrange(len(parents))])
            colors = sim.trace.final_colors()
            assert len(colors) == out.topology.n
            assert d2_conflicts(out.topology, colors) == []
            assert tdma_replay(out.topology, colors, delta) == 0
            validate_identities(out.topology)
            done += 1
        assert done >= 20


def colored_path3(ident_base=0):
    ids = [ident_base + 1, ident_base + 2, ident_base + 3]
    topo = build_topology([(1, 2), (2, 3)], identities=ids, kind="tree")
    sim = make_simulation(topo, 2)
    trace = sim.run(100)
    return topo, trace.final_colors()


class TestMerge:
    def test_compatible_end_to_end_merge(self):
        t1, c1 = colored_path3(0)
        t2, c2 = colored_path3(10)
        merged, coloring = merge_trees(t1, c1, t2, c2, 3, 1)
        assert merged.n == 6
        assert d2_conflicts(merged, coloring) == []
        # colors preserved verbatim on both sides
        assert all(coloring[i] == c1[i] for i in c1)
        assert all(coloring[i + 3] == c2[i] for i in c2)

    def test_equal_endpoint_colors_rejected(self):
        t1, c1 = colored_path3(0)
        t2, c2 = colored_path3(10)
        # both ends carry color 2; gluing them puts equal colors at distance 1
        with pytest.raises(ConsistencyBroken) as exc:
            merge_trees(t1, c1, t2, c2, 3, 3)
        assert exc.value.offenders

    def test_distance2_seam_clash_rejected(self):
        t1, c1 = colored_path3(0)
        t2, c2 = colored_path3(10)
        # ends 3 (color 2) and 1' (color 0) pass at distance 1, but if the
        # neighbor color matches the far endpoint it still breaks
        bad_c2 = dict(c2)
        bad_c2[2] = 2  # force t2's middle to collide with t1's end
        with pytest.raises(ConsistencyBroken):
            merge_trees(t1, c1, t2, bad_c2, 3, 1)

    def test_degree_mismatch(self):
        t1, c1 = colored_path3(0)
        star = builtin_topology("star4")
        sim = make_simulation(star, 1)
        c3 = sim.run(100).final_colors()
        with pytest.raises(DegreeMismatch):
            merge_trees(t1, c1, star, c3, 3, 2)

    def test_saturated_endpoint(self):
        t1, c1 = colored_path3(0)
        t2, c2 = colored_path3(10)
        with pytest.raises(SaturatedEndpoint):
            merge_trees(t1, c1, t2, c2, 2, 1)

    def test_identity_precondition(self):
        t1, c1 = colored_path3(0)
        t2, c2 = colored_path3(0)  # same identities on both sides
        with pytest.raises(IdentityPreconditionViolated):
            merge_trees(t1, c1, t2, c2, 3, 3)

    def test_merged_identities_validate(self):
        t1, c1 = colored_path3(0)
        t2, c2 = colored_path3(10)
        merged, _ = merge_trees(t1, c1, t2, c2, 3, 1)
        validate_identities(merged)
