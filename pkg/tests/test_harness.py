import csv
import io
import itertools
import random

import pytest

from greente.errors import GenerationFailure
from greente.harness.generate import GenParams, generate_instance
from greente.harness.paths import k_shortest_paths
from greente.harness.sweep import HEADER, SweepResult, SweepRow, format_table, sweep, table_summary
from greente.heuristic import ete_run
from greente.model import OperatorRequest
from greente.serialize import dumps_instance

from .builders import ROOMY


def all_simple_paths(adj, src, dst):
    out = []

    def walk(path):
        here = path[-1]
        if here == dst:
            out.append(tuple(path))
            return
        for nxt in adj[here]:
            if nxt not in path:
                walk(path + [nxt])

    walk([src])
    return sorted(out, key=lambda p: (len(p), p))


def random_graph(rng, n, p):
    nodes = [f"n{k}" for k in range(n)]
    adj = {v: set() for v in nodes}
    for a, b in itertools.combinations(nodes, 2):
        if rng.random() < p:
            adj[a].add(b)
            adj[b].add(a)
    return adj


class TestKShortestPaths:
    def test_triangle(self):
        adj = {"a": {"b", "c"}, "b": {"a", "c"}, "c": {"a", "b"}}
        assert k_shortest_paths(adj, "a", "c", 2) == [["a", "c"], ["a", "b", "c"]]

    def test_disconnected(self):
        adj = {"a": {"b"}, "b": {"a"}, "c": set()}
        assert k_shortest_paths(adj, "a", "c", 3) == []

    def test_four_cycle_has_two(self):
        adj = {"a": {"b", "d"}, "b": {"a", "c"}, "c": {"b", "d"}, "d": {"a", "c"}}
        paths = k_shortest_paths(adj, "a", "c", 3)
        assert len(paths) == 2
        assert paths == [list(p) for p in all_simple_paths(adj, "a", "c")]

    def test_lexicographic_tie_break(self):
        adj = {"s": {"y", "x"}, "x": {"s", "t"}, "y": {"s", "t"}, "t": {"x", "y"}}
        assert k_shortest_paths(adj, "s", "t", 1) == [["s", "x", "t"]]

    @pytest.mark.parametrize("seed", range(40))
    def test_matches_enumeration(self, seed):
        rng = random.Random(seed)
        adj = random_graph(rng, rng.randint(4, 8), rng.uniform(0.3, 0.7))
        src, dst = "n0", f"n{len(adj) - 1}"
        k = rng.randint(1, 6)
        expect = [list(p) for p in all_simple_paths(adj, src, dst)[:k]]
        assert k_shortest_paths(adj, src, dst, k) == expect


class TestGenerate:
    def test_defaults(self):
        inst = generate_instance(GenParams())
        roles = [n.role for n in inst.nodes]
        assert len(inst.nodes) == 23
        assert roles.count("ingress") == 4 and roles.count("egress") == 4 and roles.count("core") == 15
        assert len(inst.pairs) == 16
        assert all(p.paths for p in inst.pairs)
        assert sum(p.demand for p in inst.pairs) == pytest.approx(GenParams().demand_total)

    def test_byte_identical(self):
        assert dumps_instance(generate_instance(GenParams(seed=7))) == dumps_instance(
            generate_instance(GenParams(seed=7))
        )

    def test_seeds_differ(self):
        assert dumps_instance(generate_instance(GenParams(seed=1))) != dumps_instance(
            generate_instance(GenParams(seed=2))
        )

    def test_edge_nodes_multi_homed(self):
        inst = generate_instance(GenParams(seed=3, access_degree=2))
        for node in inst.nodes:
            if node.role != "core":
                nbrs = {l.dst if l.src == node.id else l.src for l in inst.links if node.id in (l.src, l.dst)}
                assert len(nbrs) >= 2 and all(n.startswith("C") for n in nbrs)

    def test_core_degree(self):
        inst = generate_instance(GenParams(seed=4))
        core = [l for l in inst.links if l.src.startswith("C") and l.dst.startswith("C")]
        assert 2 * len(core) / 15 == pytest.approx(4.0, abs=0.1)

    def test_power_follows_capacity_class(self):
        inst = generate_instance(GenParams(seed=5))
        table = {1.0: 5.0, 10.0: 10.0, 40.0: 20.0}
        assert all(table[l.capacity] == l.base_power for l in inst.links)

    def test_single_path_cannot_exclude(self):
        inst = generate_instance(GenParams(seed=0, k_paths=1))
        res = ete_run(inst, OperatorRequest(90.0))
        assert not res.target_met and res.iterations == 1

    def test_pair_weights(self):
        weights = tuple(float(k + 1) for k in range(16))
        inst = generate_instance(GenParams(seed=0, pair_weights=weights, demand_total=136.0))
        assert [p.demand for p in inst.pairs] == pytest.approx(list(weights))

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n_core=0),
            dict(core_avg_degree=1.0),
            dict(capacity_classes=((1.0, 1.0, 0.5),)),
            dict(pair_weights=(1.0,)),
            dict(access_degree=20),
        ],
    )
    def test_invalid_params(self, kwargs):
        with pytest.raises(ValueError):
            GenParams(**kwargs)

    def test_generation_failure(self):
        # a 2-regular mesh of 15 nodes is a single cycle only by luck
        with pytest.raises(GenerationFailure):
            generate_instance(GenParams(core_avg_degree=2.0, max_retries=1, seed=1, n_core=15))


def tiny_result():
    return SweepResult(
        [
            SweepRow(5.0, 10.0, 0.1, 0.2, 12.345678901234567, 3, 9.0, 3.0, True),
            SweepRow(5.0, 20.0, 0.1, None, None, None, None, None, None),
            SweepRow(10.0, 10.0, None, 0.3, 11.0, 1, 8.5, 0.0, False),
        ],
        {5.0: 33.3, 10.0: None},
    )


class TestSweep:
    def test_csv_header(self):
        assert tiny_result().to_csv().splitlines()[0] == ",".join(HEADER)
        assert HEADER == (
            "demand_total",
            "e_level",
            "opt_lb_util",
            "ete_util",
            "ete_saving",
            "iterations",
            "sleeping_pct",
            "excluded_pct",
            "target_met",
        )

    def test_csv_round_trip(self):
        res = tiny_result()
        assert SweepResult.from_csv(res.to_csv()).rows == res.rows

    def test_na_cells(self):
        rows = list(csv.reader(io.StringIO(tiny_result().to_csv())))
        assert rows[2][3:] == ["NA"] * 6

    def test_bad_csv(self):
        with pytest.raises(ValueError):
            SweepResult.from_csv("a,b\n1,2\n")
        with pytest.raises(ValueError):
            SweepResult.from_csv(",".join(HEADER) + "\n1,2\n")

    def test_dat(self):
        lines = tiny_result().to_dat().splitlines()
        assert lines[0].startswith("# demand_total opt_lb_util ete_util_E10 ete_util_E20 opt_es_saving")
        assert lines[1].split() == ["5.0", "0.1", "0.2", "NA", "33.3", "12.345678901234567", "NA"]
        assert lines[2].split()[1] == "NA" and lines[2].split()[4] == "NA"

    def test_table_summary(self):
        rows = table_summary(tiny_result())
        assert [r.e_level for r in rows] == [10.0]
        assert rows[0].iterations == 2.0 and rows[0].runs == 2
        assert format_table(rows).splitlines()[0].startswith("e_level,")

    def test_small_sweep(self):
        params = GenParams(seed=3, n_ingress=2, n_egress=2, n_core=6, capacity_classes=ROOMY)
        res = sweep(params, [2.0, 4.0], [0.0, 10.0, 20.0], es_max_links=40)
        assert len(res.rows) == 6
        assert all(v is not None for v in res.opt_es_saving.values())
        for row in res.rows:
            assert row.opt_lb_util <= row.ete_util + 1e-9
            if row.target_met:
                assert row.ete_saving >= row.e_level
        zero = [r for r in res.rows if r.e_level == 0.0]
        for r in zero:
            assert r.ete_util <= r.opt_lb_util * 1.05
        assert SweepResult.from_csv(res.to_csv()).rows == res.rows

    def test_failed_cells_are_na(self):
        params = GenParams(seed=0, n_ingress=1, n_egress=1, n_core=4, capacity_classes=((1.0, 5.0, 1.0),), access_classes=((1.0, 5.0, 1.0),))
        res = sweep(params, [50.0], [10.0], es_max_links=0)
        (row,) = res.rows
        assert row.opt_lb_util is None and row.iterations is None
        assert res.opt_es_saving == {50.0: None}

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            sweep(GenParams(), [], [10.0])
