"""Undirected weighted interaction network and centrality measures.

A link {A, B} gains weight 1 whenever one of the pair identifies an
observation of the other inside the challenge window; direction is not
distinguished. Eigenvector centrality runs power iteration on W + I
restricted to the largest connected component (the identity shift kills
bipartite oscillation without changing eigenvectors of W).
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cnckit import kernels
from cnckit.classify import UserClass
from cnckit.errors import ConvergenceError, DataError
from cnckit.records import ChallengeWindow, Dataset
from cnckit.stats import aggregate_activity


def edge_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a < b else (b, a)


@dataclass
class InteractionGraph:
    """Weighted undirected simple graph keyed by sorted user-id pairs."""

    nodes: set[str] = field(default_factory=set)
    edges: dict[tuple[str, str], int] = field(default_factory=dict)

    def add_node(self, user: str) -> None:
        self.nodes.add(user)

    def add_interaction(self, a: str, b: str, weight: int = 1) -> None:
        if a == b:
            raise DataError(f"self-loop {a!r} is not a social interaction")
        if weight < 1:
            raise DataError("interaction weight must be >= 1")
        key = edge_key(a, b)
        self.edges[key] = self.edges.get(key, 0) + weight
        self.nodes.add(a)
        self.nodes.add(b)

    def weight(self, a: str, b: str) -> int:
        return self.edges.get(edge_key(a, b), 0)

    def adjacency(self) -> dict[str, dict[str, int]]:
        adj: dict[str, dict[str, int]] = {node: {} for node in self.nodes}
        for (a, b), w in self.edges.items():
            adj[a][b] = w
            adj[b][a] = w
        return adj

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def total_weight(self) -> int:
        return sum(self.edges.values())


def build_graph(
    dataset: Dataset, window: ChallengeWindow, include_isolated: bool = False
) -> InteractionGraph:
    """Accumulate identifier-observer interactions for one challenge.

    Observations must lie inside the window; identification timestamps are
    not filtered. Self-identifications are ignored. With
    ``include_isolated`` every active user becomes a node even without
    interactions (default excludes them).
    """
    graph = InteractionGraph()
    in_window = {
        oid: obs for oid, obs in dataset.observations.items() if window.contains(obs)
    }
    for ident in dataset.identifications.values():
        target = in_window.get(ident.observation_id)
        if target is None or ident.identifier_id == target.observer_id:
            continue
        graph.add_interaction(target.observer_id, ident.identifier_id)
    if include_isolated:
        for row in aggregate_activity(dataset, window):
            graph.add_node(row.user_id)
    return graph


def degree_centrality(graph: InteractionGraph, weighted: bool = True) -> dict[str, float]:
    """Sum of incident edge weights (or neighbor count when unweighted)."""
    degrees = {node: 0.0 for node in graph.nodes}
    for (a, b), w in graph.edges.items():
        increment = float(w) if weighted else 1.0
        degrees[a] += increment
        degrees[b] += increment
    return degrees


def connected_components(graph: InteractionGraph) -> list[set[str]]:
    """Connectivity partition, largest component first (ties by smallest
    minimum user id)."""
    adj = graph.adjacency()
    seen: set[str] = set()
    components: list[set[str]] = []
    for start in sorted(graph.nodes):
        if start in seen:
            continue
        stack = [start]
        component = {start}
        seen.add(start)
        while stack:
            node = stack.pop()
            for neighbor in adj[node]:
                if neighbor not in seen:
                    seen.add(neighbor)
                    component.add(neighbor)
                    stack.append(neighbor)
        components.append(component)
    components.sort(key=lambda comp: (-len(comp), min(comp)))
    return components


def eigenvector_centrality(
    graph: InteractionGraph, tol: float = 1e-10, max_iter: int = 10_000
) -> dict[str, float]:
    """Perron vector of the weighted adjacency, unit L2 norm over the
    largest component; nodes outside it score 0."""
    if graph.n_edges == 0:
        raise DataError("eigenvector centrality needs at least one edge")
    component = connected_components(graph)[0]
    order = sorted(component)
    index = {node: i for i, node in enumerate(order)}
    rows, cols, weights = [], [], []
    for (a, b), w in sorted(graph.edges.items()):
        if a in index:
            rows.append(index[a])
            cols.append(index[b])
            weights.append(float(w))
            rows.append(index[b])
            cols.append(index[a])
            weights.append(float(w))
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)

    n = len(order)
    x = np.full(n, 1.0 / math.sqrt(n))
    residual = math.inf
    for _ in range(max_iter):
        y = kernels.coo_matvec(rows, cols, weights, x) + x  # (W + I) x
        y /= np.linalg.norm(y)
        residual = float(np.linalg.norm(y - x))
        x = y
        if residual < tol:
            break
    else:
        raise ConvergenceError(
            f"power iteration did not converge within {max_iter} iterations "
            f"(residual {residual:.3e})",
            residual=residual,
        )
    scores = {node: 0.0 for node in graph.nodes}
    for node, i in index.items():
        scores[node] = float(x[i])
    return scores


@dataclass
class CentralityScores:
    x_d: dict[str, float]
    x_e: dict[str, float]


def compute_centralities(
    graph: InteractionGraph,
    weighted_degree: bool = True,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> CentralityScores:
    return CentralityScores(
        x_d=degree_centrality(graph, weighted=weighted_degree),
        x_e=eigenvector_centrality(graph, tol=tol, max_iter=max_iter),
    )


class SummaryClass(enum.Enum):
    """UserClass values plus the bucket for users without a class."""

    UNKNOWN = "unknown"


def _median(values: list[float]) -> float:
    ordered = sorted(values)
    n = len(ordered)
    mid = n // 2
    if n % 2:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2.0


@dataclass
class MetricSummary:
    median: float
    histogram: list[int]  # counts per log-scale bin
    n_zero: int  # scores of exactly 0 (outside the scored component)


@dataclass
class ClassCentralitySummary:
    bin_edges_degree: list[float]
    bin_edges_eigen: list[float]
    degree: dict[str, MetricSummary]  # key: UserClass.value or "unknown"
    eigen: dict[str, MetricSummary]
    class_sizes: dict[str, int]


def _log_bins(values: list[float], n_bins: int) -> list[float]:
    positive = [v for v in values if v > 0]
    if not positive:
        return [1.0, 10.0]
    lo = math.floor(math.log10(min(positive)) * 4) / 4
    hi = math.ceil(math.log10(max(positive)) * 4) / 4
    if hi <= lo:
        hi = lo + 0.25
    edges = np.logspace(lo, hi, n_bins + 1)
    edges[-1] = edges[-1] * (1 + 1e-12)  # keep the max value in the last bin
    return [float(e) for e in edges]


def _summarize(
    scores: dict[str, float], groups: dict[str, list[str]], edges: list[float]
) -> dict[str, MetricSummary]:
    summaries = {}
    for name, users in groups.items():
        values = [scores[u] for u in users]
        positive = [v for v in values if v > 0]
        hist, _ = np.histogram(positive, bins=np.asarray(edges))
        summaries[name] = MetricSummary(
            median=_median(values),
            histogram=[int(c) for c in hist],
            n_zero=len(values) - len(positive),
        )
    return summaries


def per_class_summary(
    scores: CentralityScores,
    classes: dict[str, UserClass],
    n_bins: int = 20,
) -> ClassCentralitySummary:
    """Medians and fixed-width log-scale histograms per behavioural class.

    Scored users without a class fall into an "unknown" bucket.
    """
    groups: dict[str, list[str]] = {}
    for user in scores.x_d:
        cls = classes.get(user)
        name = cls.value if cls is not None else SummaryClass.UNKNOWN.value
        groups.setdefault(name, []).append(user)
    edges_d = _log_bins(list(scores.x_d.values()), n_bins)
    edges_e = _log_bins(list(scores.x_e.values()), n_bins)
    return ClassCentralitySummary(
        bin_edges_degree=edges_d,
        bin_edges_eigen=edges_e,
        degree=_summarize(scores.x_d, groups, edges_d),
        eigen=_summarize(scores.x_e, groups, edges_e),
        class_sizes={name: len(users) for name, users in sorted(groups.items())},
    )


def export_graph(
    graph: InteractionGraph,
    scores: CentralityScores | None,
    classes: dict[str, UserClass] | None,
    path: str | Path,
    format: str = "edge_csv",
) -> None:
    """Write the graph as an edge CSV or a JSON document with node scores."""
    path = Path(path)
    if format == "edge_csv":
        with path.open("w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["user_a", "user_b", "weight"])
            for (a, b), w in sorted(graph.edges.items()):
                writer.writerow([a, b, w])
    elif format == "graph_json":
        scores = scores or CentralityScores(x_d={}, x_e={})
        classes = classes or {}
        nodes = [
            {
                "id": node,
                "x_d": scores.x_d.get(node),
                "x_e": round(scores.x_e[node], 9) if node in scores.x_e else None,
                "class": classes[node].value if node in classes else None,
            }
            for node in sorted(graph.nodes)
        ]
        edges = [
            {"user_a": a, "user_b": b, "weight": w}
            for (a, b), w in sorted(graph.edges.items())
        ]
        path.write_text(
            json.dumps({"nodes": nodes, "edges": edges}, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
    else:
        raise DataError(f"unknown graph export format {format!r}")


def import_edge_csv(path: str | Path) -> InteractionGraph:
    """Rebuild a graph from an edge CSV produced by export_graph."""
    graph = InteractionGraph()
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            graph.add_interaction(row["user_a"], row["user_b"], int(row["weight"]))
    return graph


def import_graph_json(path: str | Path) -> InteractionGraph:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    graph = InteractionGraph()
    for node in doc.get("nodes", []):
        graph.add_node(node["id"])
    for edge in doc.get("edges", []):
        graph.add_interaction(edge["user_a"], edge["user_b"], int(edge["weight"]))
    return graph
