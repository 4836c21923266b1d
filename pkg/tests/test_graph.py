import random

import numpy as np
import pytest

from cellsentry.graph import (
    DepGraph,
    build_graph,
    compute_metrics,
    cycle_mask,
    find_circularity,
    query_links,
    reachable_from,
)
from cellsentry.model import CellRef, Workbook
from conftest import book
from oracles import bfs_reachable, dfs_cycle_members


def c(text):
    return CellRef.parse(text)


def edges(graph):
    return sorted(graph.edge_lines())


def test_single_edge():
    g = build_graph(book({"S": {"A1": 1, "A2": "=A1"}}))
    assert edges(g) == ["S!A1 -> S!A2"]


def test_range_expansion():
    g = build_graph(book({"S": {"B1": "=SUM(A1:A3)"}}))
    assert edges(g) == ["S!A1 -> S!B1", "S!A2 -> S!B1", "S!A3 -> S!B1"]
    # referenced blanks become nodes
    assert c("S!A2") in g.index


def test_empty_workbook():
    g = build_graph(Workbook((), ()))
    assert g.nodes == () and g.edge_count == 0
    assert find_circularity(g) == []


def test_names_and_cross_sheet_edges():
    g = build_graph(book({"In": {"A1": 2}, "Out": {"A1": "=Rate*2", "A2": "=in!A1"}}, names={"Rate": "In!$A$1"}))
    assert edges(g) == ["In!A1 -> Out!A1", "In!A1 -> Out!A2"]
    assert int(g.cross_sheet.sum()) == 2
    assert g.name_users["RATE"] == frozenset({c("Out!A1")})


def test_degree_sums_equal_edge_count():
    g = build_graph(book({"S": {"A1": 1, "A2": "=A1*2", "A3": "=A1+A2", "B1": "=SUM(A1:A3)"}}))
    indeg = np.diff(g.backward[0]).sum()
    outdeg = np.diff(g.forward[0]).sum()
    assert indeg == outdeg == g.edge_count == 6


def test_chain_queries():
    g = build_graph(book({"S": {"A1": 1, "A2": "=A1", "A3": "=A2"}}))
    assert query_links(g, c("S!A1"), "dependents", transitive=True) == {c("S!A2"), c("S!A3")}
    assert query_links(g, c("S!A1"), "precedents") == set()
    assert query_links(g, c("S!A3"), "precedents") == {c("S!A2")}
    assert query_links(g, c("S!$A$1"), "dependents") == {c("S!A2")}
    with pytest.raises(ValueError):
        query_links(g, c("S!A1"), "sideways")


def test_random_dag_closure_matches_bfs():
    rng = random.Random(1)
    n = 50
    nodes = [CellRef("S", 1, i + 1) for i in range(n)]
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if rng.random() < 0.06]
    g = DepGraph.from_edges(nodes, [(nodes[a], nodes[b]) for a, b in pairs])
    for v in range(n):
        want = {nodes[i] for i in bfs_reachable(n, pairs, {v})}
        assert reachable_from(g, [nodes[v]]) == want


def test_two_cell_cycle_and_self_reference():
    g = build_graph(book({"S": {"A1": "=B1", "B1": "=A1"}}))
    assert find_circularity(g) == [frozenset({c("S!A1"), c("S!B1")})]
    g = build_graph(book({"S": {"A1": "=A1"}}))
    assert find_circularity(g) == [frozenset({c("S!A1")})]


def test_random_digraphs_cycle_membership_and_removal():
    rng = random.Random(2)
    for trial in range(40):
        n = rng.randint(2, 200)
        density = rng.choice([0.002, 0.005, 0.01, 0.03])
        pairs = [(a, b) for a in range(n) for b in range(n) if rng.random() < density]
        nodes = [CellRef("S", 1, i + 1) for i in range(n)]
        g = DepGraph.from_edges(nodes, [(nodes[a], nodes[b]) for a, b in pairs])
        cycles = find_circularity(g)
        members = set().union(*cycles) if cycles else set()
        assert members == {nodes[i] for i in dfs_cycle_members(n, pairs)}, trial
        assert sum(len(x) for x in cycles) == len(members)  # disjoint
        assert bool(cycle_mask(g).any()) == bool(cycles)


def test_clone_metrics_copied_column():
    g_book = book({"S": {f"B{r}": f"=A{r}*2" for r in range(1, 11)}})
    m = compute_metrics(g_book, build_graph(g_book))
    assert (m.unique_formula_count, m.repeated_cells, m.original_to_repeated_ratio) == (1, 9, "1:9")


def test_all_literal_sheet():
    wb = book({"S": {"A1": 1, "A2": "x"}})
    m = compute_metrics(wb, build_graph(wb))
    assert m.formula_cells == 0 and m.formula_length_histogram == {}
    assert m.estimated_review_hours == 0


def test_review_hours_at_throughput():
    wb = book({"S": {f"A{i}": f"=B{i}+{i}" for i in range(1, 101)}})
    m = compute_metrics(wb, build_graph(wb), throughput=40)
    assert m.unique_formula_count == 100
    assert m.estimated_review_hours == pytest.approx(2.5)
    with pytest.raises(ValueError):
        compute_metrics(wb, build_graph(wb), throughput=0)


def test_metrics_invariant_under_sheet_order():
    a = {"A1": 1, "A2": "=A1+B!A1"}
    b = {"A1": 2, "B1": "=A!A2*2"}
    m1 = compute_metrics(w1 := book({"A": a, "B": b}), build_graph(w1))
    m2 = compute_metrics(w2 := book({"B": b, "A": a}), build_graph(w2))
    assert m1 == m2


def test_defective_formula_recorded_not_fatal():
    wb = book({"S": {"A1": "=1+", "A2": "=A1"}})
    g = build_graph(wb)
    assert c("S!A1") in g.defective
    assert edges(g) == ["S!A1 -> S!A2"]
