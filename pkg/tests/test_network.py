from __future__ import annotations

import math
import random

import numpy as np
import pytest

from cnckit.classify import UserClass
from cnckit.errors import DataError
from cnckit.network import (
    CentralityScores,
    InteractionGraph,
    build_graph,
    connected_components,
    degree_centrality,
    eigenvector_centrality,
    export_graph,
    import_edge_csv,
    import_graph_json,
    per_class_summary,
)
from conftest import dataset, ident, obs, window
from oracles import components_oracle, dense_eigen_oracle


def graph_from_edges(edges):
    g = InteractionGraph()
    for a, b, w in edges:
        g.add_interaction(a, b, w)
    return g


def random_connected_graph(rng, max_nodes=50):
    n = rng.randint(2, max_nodes)
    names = [f"n{i:02d}" for i in range(n)]
    g = InteractionGraph()
    for i in range(1, n):
        g.add_interaction(names[rng.randint(0, i - 1)], names[i], rng.randint(1, 6))
    for _ in range(n):
        i, j = rng.randint(0, n - 1), rng.randint(0, n - 1)
        if i != j:
            g.add_interaction(names[i], names[j], rng.randint(1, 6))
    return g


# --- build_graph -----------------------------------------------------------------

def test_single_identification_single_edge():
    ds = dataset(
        observations=[obs("o1", "a", "2019-04-26T10:00")],
        identifications=[ident("i1", "o1", "b", "2019-04-26T11:00")],
        challenges=[window()],
    )
    g = build_graph(ds, window())
    assert g.edges == {("a", "b"): 1}


def test_repeat_interactions_increase_weight():
    ds = dataset(
        observations=[obs("o1", "a", "2019-04-26T10:00")],
        identifications=[
            ident("i1", "o1", "b", "2019-04-26T11:00"),
            ident("i2", "o1", "b", "2019-04-26T12:00"),
        ],
        challenges=[window()],
    )
    assert build_graph(ds, window()).edges == {("a", "b"): 2}


def test_direction_is_collapsed():
    ds = dataset(
        observations=[
            obs("o1", "a", "2019-04-26T10:00"),
            obs("o2", "b", "2019-04-26T10:30"),
        ],
        identifications=[
            ident("i1", "o1", "b", "2019-04-26T11:00"),
            ident("i2", "o2", "a", "2019-04-26T12:00"),
        ],
        challenges=[window()],
    )
    assert build_graph(ds, window()).edges == {("a", "b"): 2}


def test_self_identifications_ignored():
    ds = dataset(
        observations=[obs("o1", "a", "2019-04-26T10:00")],
        identifications=[ident("i1", "o1", "a", "2019-04-26T11:00")],
        challenges=[window()],
    )
    g = build_graph(ds, window())
    assert g.edges == {}
    assert g.nodes == set()


def test_out_of_window_observations_excluded(fixture_dataset):
    g = build_graph(fixture_dataset, fixture_dataset.window("london", 2019))
    # i9 targets o5 (outside window): no carol-bob edge from it
    assert g.edges == {
        ("alice", "bob"): 2,  # i1 (b idents o1) + i5 (a idents o4)
        ("alice", "carol"): 1,
        ("alice", "dave"): 1,
    }


def test_include_isolated_adds_active_users(fixture_dataset):
    win = fixture_dataset.window("london", 2020)
    excluded = build_graph(fixture_dataset, win)
    included = build_graph(fixture_dataset, win, include_isolated=True)
    assert "erin" not in excluded.nodes or excluded.weight("erin", "dave") > 0
    assert {"bob", "dave", "erin"} <= included.nodes


def test_build_graph_permutation_invariant(fixture_dataset):
    win = fixture_dataset.window("london", 2019)
    base = build_graph(fixture_dataset, win)
    shuffled_idents = list(fixture_dataset.identifications.values())
    random.Random(3).shuffle(shuffled_idents)
    import dataclasses

    shuffled = dataclasses.replace(
        fixture_dataset,
        identifications={i.identification_id: i for i in shuffled_idents},
    )
    assert build_graph(shuffled, win).edges == base.edges


def test_self_loop_rejected():
    g = InteractionGraph()
    with pytest.raises(DataError):
        g.add_interaction("a", "a")


# --- degree centrality ----------------------------------------------------------

def test_degree_sums_incident_weights():
    g = graph_from_edges([("a", "b", 2), ("a", "c", 3)])
    assert degree_centrality(g)["a"] == 5.0


def test_triangle_degrees():
    g = graph_from_edges([("a", "b", 1), ("b", "c", 1), ("a", "c", 1)])
    assert set(degree_centrality(g).values()) == {2.0}


def test_unweighted_degree_counts_neighbors():
    g = graph_from_edges([("a", "b", 5), ("a", "c", 2)])
    assert degree_centrality(g, weighted=False)["a"] == 2.0


def test_handshake_identity_random_graphs():
    rng = random.Random(99)
    for _ in range(50):
        g = random_connected_graph(rng, max_nodes=30)
        degrees = degree_centrality(g)
        assert sum(degrees.values()) == 2 * g.total_weight()


# --- components -------------------------------------------------------------------

def test_two_disjoint_edges():
    g = graph_from_edges([("a", "b", 1), ("c", "d", 1)])
    comps = connected_components(g)
    assert [len(c) for c in comps] == [2, 2]
    assert comps[0] == {"a", "b"}  # tie broken by smallest minimum node


def test_triangle_single_component():
    g = graph_from_edges([("a", "b", 1), ("b", "c", 1), ("a", "c", 1)])
    assert connected_components(g) == [{"a", "b", "c"}]


def test_components_match_union_find_oracle():
    rng = random.Random(4)
    for _ in range(30):
        n = rng.randint(2, 40)
        names = [f"n{i:02d}" for i in range(n)]
        g = InteractionGraph()
        for node in names:
            g.add_node(node)
        for _ in range(rng.randint(0, 2 * n)):
            i, j = rng.randint(0, n - 1), rng.randint(0, n - 1)
            if i != j:
                g.add_interaction(names[i], names[j])
        mine = [frozenset(c) for c in connected_components(g)]
        assert mine == components_oracle(g.nodes, list(g.edges))


# --- eigenvector centrality ---------------------------------------------------------

def test_triangle_eigen_equal_entries():
    g = graph_from_edges([("a", "b", 1), ("b", "c", 1), ("a", "c", 1)])
    scores = eigenvector_centrality(g)
    for value in scores.values():
        assert value == pytest.approx(1 / math.sqrt(3), abs=1e-10)


def test_star_eigen_ratio_sqrt3():
    g = graph_from_edges([("hub", leaf, 1) for leaf in ("x", "y", "z")])
    scores = eigenvector_centrality(g)
    assert scores["hub"] == pytest.approx(math.sqrt(1 / 2), abs=1e-10)
    for leaf in ("x", "y", "z"):
        assert scores[leaf] == pytest.approx(math.sqrt(1 / 6), abs=1e-10)
    assert scores["hub"] / scores["x"] == pytest.approx(math.sqrt(3), abs=1e-9)


def test_path3_eigen_proportions():
    g = graph_from_edges([("a", "mid", 1), ("mid", "b", 1)])
    scores = eigenvector_centrality(g)
    assert scores["a"] == pytest.approx(0.5, abs=1e-10)
    assert scores["b"] == pytest.approx(0.5, abs=1e-10)
    assert scores["mid"] == pytest.approx(math.sqrt(2) / 2, abs=1e-10)


def test_eigen_matches_dense_oracle(kernel_backend):
    rng = random.Random(17)
    for _ in range(25):
        g = random_connected_graph(rng)
        scores = eigenvector_centrality(g)
        order = sorted(g.nodes)
        expected = dense_eigen_oracle(order, {k: float(v) for k, v in g.edges.items()})
        mine = np.array([scores[node] for node in order])
        assert np.abs(mine - expected).max() < 1e-8


def test_eigen_outside_largest_component_scores_zero():
    g = graph_from_edges(
        [("a", "b", 1), ("b", "c", 1), ("x", "y", 1)]
    )
    scores = eigenvector_centrality(g)
    assert scores["x"] == 0.0 and scores["y"] == 0.0
    norm = math.sqrt(sum(v * v for v in scores.values()))
    assert norm == pytest.approx(1.0, abs=1e-9)


def test_eigen_component_tie_broken_by_min_node():
    g = graph_from_edges([("b", "c", 1), ("a", "d", 1)])
    scores = eigenvector_centrality(g)
    assert scores["a"] > 0 and scores["d"] > 0
    assert scores["b"] == 0.0 and scores["c"] == 0.0


def test_eigen_invariant_under_weight_scaling():
    rng = random.Random(30)
    g = random_connected_graph(rng, max_nodes=20)
    scaled = InteractionGraph()
    for (a, b), w in g.edges.items():
        scaled.add_interaction(a, b, w * 7)
    base_scores = eigenvector_centrality(g)
    scaled_scores = eigenvector_centrality(scaled)
    for node in g.nodes:
        assert base_scores[node] == pytest.approx(scaled_scores[node], abs=1e-9)


def test_eigen_bipartite_graph_converges():
    # even cycle = bipartite; plain power iteration on W would oscillate
    g = graph_from_edges([("a", "b", 1), ("b", "c", 1), ("c", "d", 1), ("d", "a", 1)])
    scores = eigenvector_centrality(g)
    for value in scores.values():
        assert value == pytest.approx(0.5, abs=1e-10)


def test_eigen_requires_edges():
    g = InteractionGraph()
    g.add_node("a")
    with pytest.raises(DataError):
        eigenvector_centrality(g)


def test_eigen_nonconvergence_reports_residual():
    from cnckit.errors import ConvergenceError

    g = graph_from_edges([("a", "b", 1), ("b", "c", 3), ("c", "d", 1)])
    with pytest.raises(ConvergenceError) as info:
        eigenvector_centrality(g, tol=1e-16, max_iter=2)
    assert info.value.residual is not None


# --- per-class summaries --------------------------------------------------------------

def test_median_even_cardinality_uses_middle_mean():
    scores = CentralityScores(x_d={"a": 1.0, "b": 3.0}, x_e={"a": 0.1, "b": 0.3})
    classes = {"a": UserClass.OBSERVER, "b": UserClass.OBSERVER}
    summary = per_class_summary(scores, classes)
    assert summary.degree["observer"].median == 2.0
    assert summary.eigen["observer"].median == pytest.approx(0.2)


def test_single_user_class_median_is_score():
    scores = CentralityScores(x_d={"a": 7.0}, x_e={"a": 0.9})
    summary = per_class_summary(scores, {"a": UserClass.HIGH_ACTIVITY})
    assert summary.degree["high_activity"].median == 7.0


def test_unclassed_users_grouped_as_unknown():
    scores = CentralityScores(x_d={"a": 1.0, "b": 2.0}, x_e={"a": 0.5, "b": 0.5})
    summary = per_class_summary(scores, {"a": UserClass.OBSERVER})
    assert summary.class_sizes == {"observer": 1, "unknown": 1}
    assert sum(summary.class_sizes.values()) == len(scores.x_d)


def test_histogram_counts_cover_positive_scores():
    rng = random.Random(8)
    g = random_connected_graph(rng, max_nodes=30)
    scores = CentralityScores(
        x_d=degree_centrality(g), x_e=eigenvector_centrality(g)
    )
    summary = per_class_summary(scores, {})
    hist = summary.degree["unknown"]
    assert sum(hist.histogram) + hist.n_zero == len(scores.x_d)


# --- export / import --------------------------------------------------------------------

def test_export_empty_graph_header_only(tmp_path):
    path = tmp_path / "graph.csv"
    export_graph(InteractionGraph(), None, None, path, format="edge_csv")
    assert path.read_text() == "user_a,user_b,weight\n"


def test_edge_csv_round_trip(tmp_path):
    g = graph_from_edges([("b", "a", 2), ("c", "a", 1), ("b", "c", 4)])
    path = tmp_path / "graph.csv"
    export_graph(g, None, None, path, format="edge_csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "user_a,user_b,weight"
    pairs = [line.split(",")[:2] for line in lines[1:]]
    assert all(a < b for a, b in pairs)
    reimported = import_edge_csv(path)
    assert reimported.edges == g.edges
    assert reimported.nodes == g.nodes


def test_graph_json_round_trip_with_scores(tmp_path):
    g = graph_from_edges([("a", "b", 1), ("b", "c", 2)])
    scores = CentralityScores(
        x_d=degree_centrality(g), x_e=eigenvector_centrality(g)
    )
    classes = {"a": UserClass.OBSERVER, "b": UserClass.HIGH_ACTIVITY}
    path = tmp_path / "graph.json"
    export_graph(g, scores, classes, path, format="graph_json")
    reimported = import_graph_json(path)
    assert reimported.edges == g.edges
    import json

    doc = json.loads(path.read_text())
    by_id = {node["id"]: node for node in doc["nodes"]}
    assert by_id["a"]["class"] == "observer"
    assert by_id["c"]["class"] is None
    assert by_id["b"]["x_d"] == 3.0


def test_export_golden_fixture(tmp_path, fixture_dataset):
    g = build_graph(fixture_dataset, fixture_dataset.window("london", 2019))
    path = tmp_path / "graph.csv"
    export_graph(g, None, None, path, format="edge_csv")
    golden = (
        "user_a,user_b,weight\n"
        "alice,bob,2\n"
        "alice,carol,1\n"
        "alice,dave,1\n"
    )
    assert path.read_text() == golden
