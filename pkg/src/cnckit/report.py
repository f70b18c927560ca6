"""One-shot report: plot-ready CSV files per figure analogue plus manifest.

Output bytes depend only on (inputs, config, seed): floats are rounded
before writing, dict orders are canonical, and the manifest records a
content hash for every input and output file. Wall time is recorded only
when timings are explicitly enabled, to keep default runs byte-stable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from cnckit import attrition, classify, geo, network, stats, svg, targets
from cnckit import __version__ as PACKAGE_VERSION
from cnckit.errors import ConfigError, DataError
from cnckit.geometry import PolygonLayer, load_geojson_layer
from cnckit.io import load_challenge_windows, load_dataset
from cnckit.records import ChallengeWindow, Dataset

FLOAT_DECIMALS = 9


def _fmt(value) -> str:
    """Canonical text for one CSV cell."""
    if isinstance(value, Fraction):
        value = float(value)
    if isinstance(value, float):
        text = f"{value:.{FLOAT_DECIMALS}f}".rstrip("0").rstrip(".")
        return text if text not in ("", "-") else "0"
    return str(value)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunConfig:
    dataset_paths: list[Path]
    output_dir: Path
    format: str = "jsonl"
    mode: str = "strict"
    windows_path: Path | None = None
    layer_path: Path | None = None
    seed: int = 0
    k: int | None = 4  # None selects k via the elbow criterion
    restarts: int = 8
    raw_features: bool = False
    grid_nx: int = 20
    grid_ny: int = 20
    horizon_months: int = 6
    include_isolated: bool = False
    unweighted_degree: bool = False
    eigen_tol: float = 1e-10
    eigen_max_iter: int = 10_000
    min_species_observations: int = 10
    graph_format: str = "graph_json"
    emit_svg: bool = False
    check_targets: bool = False
    timings: bool = False
    workers: int = 4

    @classmethod
    def from_json(cls, path: str | Path, output_dir: Path | None = None) -> "RunConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset_paths" not in raw:
            raise ConfigError("config must list dataset_paths")
        base = path.parent

        def resolve(p):
            p = Path(p)
            return p if p.is_absolute() else base / p

        raw["dataset_paths"] = [resolve(p) for p in raw["dataset_paths"]]
        for key in ("windows_path", "layer_path"):
            if raw.get(key):
                raw[key] = resolve(raw[key])
        if output_dir is not None:
            raw["output_dir"] = output_dir
        elif raw.get("output_dir"):
            raw["output_dir"] = resolve(raw["output_dir"])
        else:
            raise ConfigError("config must set output_dir (or pass --output-dir)")
        if "k" in raw and raw["k"] in ("auto", 0):
            raw["k"] = None
        return cls(**raw)

    def validate(self) -> None:
        for p in self.dataset_paths:
            if not Path(p).exists():
                raise ConfigError(f"dataset file {p} does not exist")
        for p in (self.windows_path, self.layer_path):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"referenced file {p} does not exist")
        if self.format not in ("jsonl", "csv"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.graph_format not in ("graph_json", "edge_csv"):
            raise ConfigError(f"unknown graph format {self.graph_format!r}")


def load_inputs(config: RunConfig) -> tuple[Dataset, PolygonLayer | None]:
    windows = load_challenge_windows(config.windows_path) if config.windows_path else []
    result = load_dataset(
        [Path(p) for p in config.dataset_paths],
        format=config.format,
        mode=config.mode,
        windows=windows,
    )
    layer = load_geojson_layer(config.layer_path) if config.layer_path else None
    return result.dataset, layer


def _slug(window: ChallengeWindow) -> str:
    return f"{window.city.lower().replace(' ', '_')}_{window.year}"


def _auto_grid(dataset: Dataset, window: ChallengeWindow, config: RunConfig) -> geo.GridSpec | None:
    points = [
        obs.location
        for obs in dataset.observations.values()
        if window.contains(obs) and obs.location is not None
    ]
    if not points:
        return None
    lats = [p[0] for p in points]
    lons = [p[1] for p in points]
    pad = 1e-6  # keep max-edge points strictly inside an exact-degenerate bbox
    min_lat, max_lat = min(lats), max(lats)
    min_lon, max_lon = min(lons), max(lons)
    if max_lat - min_lat < pad:
        max_lat = min_lat + pad
    if max_lon - min_lon < pad:
        max_lon = min_lon + pad
    return geo.GridSpec(
        min_lat=min_lat,
        min_lon=min_lon,
        max_lat=max_lat,
        max_lon=max_lon,
        nx=config.grid_nx,
        ny=config.grid_ny,
    )


@dataclass
class ChallengeArtifacts:
    window: ChallengeWindow
    activities: list[stats.UserActivity]
    classification: classify.ChallengeClassification | None
    graph: network.InteractionGraph
    scores: network.CentralityScores | None
    summary: network.ClassCentralitySummary | None  # weighted degree + eigen
    summary_unweighted: network.ClassCentralitySummary | None
    quadrants: geo.QuadrantCount | None
    greenspace: geo.GreenspaceResult | None
    retention: list[attrition.RetentionCurve]


def _analyze_challenge(
    dataset: Dataset, layer: PolygonLayer | None, window: ChallengeWindow, config: RunConfig
) -> ChallengeArtifacts:
    activities = stats.aggregate_activity(dataset, window)
    run = classify.classify_per_challenge(
        _restrict(dataset, window),
        classify.ClassifyConfig(
            k=config.k,
            seed=config.seed,
            restarts=config.restarts,
            raw_features=config.raw_features,
        ),
    )
    classification = run.results.get(window.key)
    graph = network.build_graph(dataset, window, include_isolated=config.include_isolated)
    scores = None
    summary = None
    summary_unweighted = None
    if graph.n_edges:
        scores = network.compute_centralities(
            graph,
            weighted_degree=not config.unweighted_degree,
            tol=config.eigen_tol,
            max_iter=config.eigen_max_iter,
        )
        classes = classification.classes if classification else {}
        x_e = scores.x_e
        summary = network.per_class_summary(
            network.CentralityScores(x_d=network.degree_centrality(graph), x_e=x_e),
            classes,
        )
        summary_unweighted = network.per_class_summary(
            network.CentralityScores(
                x_d=network.degree_centrality(graph, weighted=False), x_e=x_e
            ),
            classes,
        )
    grid = _auto_grid(dataset, window, config)
    quadrants = None
    if grid is not None:
        points = [
            obs.location
            for obs in dataset.observations.values()
            if window.contains(obs) and obs.location is not None
        ]
        quadrants = geo.quadrant_count(points, grid)
    greenspace = None
    if layer is not None:
        try:
            greenspace = geo.greenspace_fraction(dataset, layer, window)
        except DataError:
            greenspace = None
    retention = []
    cohorts = attrition.build_cohorts(dataset, window, window.year)
    for kind, members in (
        (attrition.JoinKind.CHALLENGE, cohorts.challenge),
        (attrition.JoinKind.REGULAR, cohorts.regular),
    ):
        if members:
            retention.append(
                attrition.retention_curve(
                    dataset,
                    members,
                    horizon=config.horizon_months,
                    city=window.city,
                    year=window.year,
                    join_kind=kind,
                )
            )
    return ChallengeArtifacts(
        window=window,
        activities=activities,
        classification=classification,
        graph=graph,
        scores=scores,
        summary=summary,
        summary_unweighted=summary_unweighted,
        quadrants=quadrants,
        greenspace=greenspace,
        retention=retention,
    )


def _restrict(dataset: Dataset, window: ChallengeWindow) -> Dataset:
    """The dataset with only this window configured (records untouched)."""
    return Dataset(
        observations=dataset.observations,
        identifications=dataset.identifications,
        challenges=[window],
        orphan_identifications=dataset.orphan_identifications,
    )


@dataclass
class ReportResult:
    output_dir: Path
    files: list[str] = field(default_factory=list)
    computed_targets: dict[str, float] = field(default_factory=dict)


def run_report(config: RunConfig) -> ReportResult:
    started = time.monotonic()
    config.validate()
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset, layer = load_inputs(config)
    if not dataset.challenges:
        raise ConfigError("report needs at least one challenge window")
    windows = sorted(dataset.challenges, key=lambda w: w.key)

    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as pool:
        artifacts = list(
            pool.map(lambda w: _analyze_challenge(dataset, layer, w, config), windows)
        )

    result = ReportResult(output_dir=out)
    pooled: list[stats.UserActivity] = []
    for art in artifacts:
        pooled.extend(art.activities)

    # fig 1a/1b: pooled across challenges (a multi-challenge user counts
    # once per challenge)
    histogram = stats.observation_histogram(pooled)
    write_csv(
        out / "fig1a_histogram.csv",
        ["count", "n_users"],
        [[count, n] for count, n in histogram.items()],
    )
    curve = stats.lorenz(pooled)
    write_csv(
        out / "fig1b_lorenz.csv",
        ["user_fraction", "obs_fraction"],
        [[float(uf), float(of)] for uf, of in curve.points],
    )
    trends = stats.per_city_year_trends(dataset)
    write_csv(
        out / "fig2_trends.csv",
        ["city", "year", "n_obs", "n_users", "mean"],
        [
            [r.city, r.year, r.n_observations, r.n_users, r.mean_observations_per_user]
            for r in trends.rows
        ],
    )

    class_rows = []
    elbow_rows = []
    for art in artifacts:
        cls = art.classification
        if cls is None:
            continue
        by_user = {a.user_id: a for a in cls.activities}
        for user, cluster in sorted(cls.model.assignment.items()):
            label = cls.classes.get(user)
            class_rows.append(
                [
                    user,
                    art.window.city,
                    art.window.year,
                    by_user[user].n_observations,
                    by_user[user].n_identifications,
                    cluster,
                    label.value if label else "",
                ]
            )
        if cls.elbow is not None:
            for k, wcss in sorted(cls.elbow.wcss.items()):
                elbow_rows.append([art.window.city, art.window.year, k, wcss])
    write_csv(
        out / "fig3_classes.csv",
        ["user_id", "city", "year", "n_obs", "n_ids", "cluster_index", "class_label"],
        class_rows,
    )
    if elbow_rows:
        write_csv(out / "fig3_elbow.csv", ["city", "year", "k", "wcss"], elbow_rows)

    retention_rows = []
    for art in artifacts:
        for curve_ in art.retention:
            cohort_id = f"{_slug(art.window)}_{curve_.join_kind.value}"
            for m, value in enumerate(curve_.values):
                retention_rows.append([cohort_id, m, value, curve_.cohort_size])
    write_csv(
        out / "fig4_retention.csv",
        ["cohort_id", "month_index", "fraction", "cohort_size"],
        retention_rows,
    )

    quadrant_rows = []
    for art in artifacts:
        if art.quadrants is None:
            continue
        counts = art.quadrants.counts
        for i in range(counts.shape[0]):
            for j in range(counts.shape[1]):
                quadrant_rows.append(
                    [art.window.city, art.window.year, i, j, int(counts[i, j])]
                )
    write_csv(
        out / "fig5_quadrants.csv",
        ["city", "year", "i", "j", "count"],
        quadrant_rows,
    )

    green_rows = [
        [
            art.window.city,
            art.window.year,
            art.greenspace.fraction,
            art.greenspace.n_located,
            art.greenspace.n_unlocated,
        ]
        for art in artifacts
        if art.greenspace is not None
    ]
    write_csv(
        out / "fig7_greenspace.csv",
        ["city", "year", "fraction", "n_located", "n_unlocated"],
        green_rows,
    )

    centrality_rows = []
    for art in artifacts:
        if art.summary is None:
            continue
        for metric, summaries, edges in (
            ("degree_weighted", art.summary.degree, art.summary.bin_edges_degree),
            (
                "degree_unweighted",
                art.summary_unweighted.degree,
                art.summary_unweighted.bin_edges_degree,
            ),
            ("eigenvector", art.summary.eigen, art.summary.bin_edges_eigen),
        ):
            for name in sorted(summaries):
                summary = summaries[name]
                for b, count in enumerate(summary.histogram):
                    centrality_rows.append(
                        [
                            art.window.city,
                            art.window.year,
                            metric,
                            name,
                            b,
                            edges[b],
                            edges[b + 1],
                            count,
                            summary.median,
                        ]
                    )
    write_csv(
        out / "fig9_centrality.csv",
        ["city", "year", "metric", "class_label", "bin_index", "bin_lo", "bin_hi", "count", "median"],
        centrality_rows,
    )

    suffix = "json" if config.graph_format == "graph_json" else "csv"
    for art in artifacts:
        path = out / f"graph_{_slug(art.window)}.{suffix}"
        network.export_graph(
            art.graph,
            art.scores,
            art.classification.classes if art.classification else {},
            path,
            format=config.graph_format,
        )
    if len(artifacts) == 1:
        network.export_graph(
            artifacts[0].graph,
            artifacts[0].scores,
            artifacts[0].classification.classes if artifacts[0].classification else {},
            out / f"graph.{suffix}",
            format=config.graph_format,
        )

    if config.emit_svg:
        _write_svgs(out, curve, artifacts)

    result.computed_targets = _computed_targets(dataset, pooled, artifacts)
    _write_report_md(out, config, dataset, trends, artifacts, result.computed_targets)
    _write_manifest(out, config, started)
    result.files = sorted(p.name for p in out.iterdir() if p.is_file())
    return result


def _write_svgs(out: Path, curve: stats.LorenzCurve, artifacts: list[ChallengeArtifacts]):
    lorenz_pts = [(float(uf), float(of)) for uf, of in curve.points]
    (out / "fig1b_lorenz.svg").write_text(
        svg.line_chart(
            {"observations": lorenz_pts, "equality": [(0.0, 0.0), (1.0, 1.0)]},
            "Cumulative observation share",
            "fraction of users (ascending)",
            "fraction of observations",
        ),
        encoding="utf-8",
    )
    series = {}
    for art in artifacts:
        for curve_ in art.retention:
            name = f"{_slug(art.window)}_{curve_.join_kind.value}"
            series[name] = [(float(m), v) for m, v in enumerate(curve_.values)]
    if series:
        (out / "fig4_retention.svg").write_text(
            svg.line_chart(series, "Retention by cohort", "months since joining", "active fraction"),
            encoding="utf-8",
        )
    for art in artifacts:
        cls = art.classification
        if cls is None:
            continue
        groups: dict[str, list[tuple[float, float]]] = {}
        for point in cls.points:
            label = cls.classes.get(point.user_id)
            groups.setdefault(label.value if label else "unknown", []).append(
                (point.x, point.y)
            )
        (out / f"fig3_classes_{_slug(art.window)}.svg").write_text(
            svg.scatter_chart(
                groups,
                f"User classes, {art.window.city} {art.window.year}",
                "observations (transformed)",
                "identifications (transformed)",
            ),
            encoding="utf-8",
        )


def _computed_targets(
    dataset: Dataset, pooled: list[stats.UserActivity], artifacts: list[ChallengeArtifacts]
) -> dict[str, float]:
    computed: dict[str, float] = {}
    observers = [a for a in pooled if a.n_observations >= 1]
    computed["total_observations"] = float(sum(a.n_observations for a in pooled))
    computed["distinct_users"] = float(len({a.user_id for a in pooled}))
    computed["multi_challenge_users"] = float(stats.multi_challenge_users(dataset))
    if observers:
        histogram = stats.observation_histogram(pooled)
        n = len(observers)
        computed["histogram_share_1"] = histogram.get(1, 0) / n
        computed["histogram_share_1_to_5"] = (
            sum(histogram.get(c, 0) for c in range(1, 6)) / n
        )
        for fraction in (0.5, 0.2, 0.1, 0.01):
            computed[f"top_share_{fraction:.2f}"] = float(
                stats.top_share(pooled, Fraction(fraction).limit_denominator(100))
            )
    class_totals: dict[str, int] = {}
    classified = 0
    for art in artifacts:
        if art.classification is None:
            continue
        for label in art.classification.classes.values():
            class_totals[label.value] = class_totals.get(label.value, 0) + 1
            classified += 1
    if classified:
        for name, count in class_totals.items():
            computed[f"class_share_{name}"] = count / classified
    for art in artifacts:
        if art.greenspace is not None and art.window.city.lower() == "london":
            computed[f"greenspace_fraction_london_{art.window.year}"] = (
                art.greenspace.fraction
            )
    by_key = {w.key: w for w in dataset.challenges}
    for (city, year), window in sorted(by_key.items()):
        following = by_key.get((city, year + 1))
        if following is not None:
            slug = city.lower().replace(" ", "_")
            computed[f"next_year_return_{slug}_{year}"] = (
                attrition.next_year_participation(dataset, window, following)
            )
    return computed


def _write_report_md(
    out: Path,
    config: RunConfig,
    dataset: Dataset,
    trends: stats.TrendTable,
    artifacts: list[ChallengeArtifacts],
    computed: dict[str, float],
) -> None:
    lines = ["# Community activity report", ""]
    lines.append(
        f"Observations: {len(dataset.observations)}; identifications: "
        f"{len(dataset.identifications)}; challenges: {len(dataset.challenges)}; "
        f"orphan identifications: {len(dataset.orphan_identifications)}."
    )
    lines.append("")
    lines.append("## Contributions per challenge (fig2_trends.csv)")
    lines.append("")
    # user counts shown both ways: anyone active, and observers only
    lines.append("| city | year | observations | active users | observers | mean obs/user |")
    lines.append("| --- | --- | --- | --- | --- | --- |")
    for row in trends.rows:
        lines.append(
            f"| {row.city} | {row.year} | {row.n_observations} | {row.n_users} | "
            f"{row.n_observers} | {float(row.mean_observations_per_user):.3f} |"
        )
    lines.append("")
    if any(name.startswith("top_share") for name in computed):
        lines.append("## Contribution inequality (fig1a/fig1b)")
        lines.append("")
        for fraction in (0.5, 0.2, 0.1, 0.01):
            key = f"top_share_{fraction:.2f}"
            if key in computed:
                lines.append(
                    f"- top {fraction:.0%} of observers hold {computed[key]:.1%} "
                    f"of observations"
                )
        lines.append("")
    lines.append("## User classes (fig3_classes.csv)")
    lines.append("")
    lines.append("| city | year | low_activity | observer | identifier | high_activity |")
    lines.append("| --- | --- | --- | --- | --- | --- |")
    for art in artifacts:
        if art.classification is None or not art.classification.classes:
            lines.append(f"| {art.window.city} | {art.window.year} | - | - | - | - |")
            continue
        counts = {cls.value: 0 for cls in classify.UserClass}
        for label in art.classification.classes.values():
            counts[label.value] += 1
        total = max(1, sum(counts.values()))
        cells = " | ".join(
            f"{counts[c.value]} ({counts[c.value] / total:.0%})"
            for c in classify.UserClass
        )
        lines.append(f"| {art.window.city} | {art.window.year} | {cells} |")
    lines.append("")
    retentions = [(art, c) for art in artifacts for c in art.retention]
    if retentions:
        lines.append("## Retention (fig4_retention.csv)")
        lines.append("")
        for art, curve_ in retentions:
            tail = curve_.values[min(6, len(curve_.values) - 1)]
            lines.append(
                f"- {art.window.city} {art.window.year} {curve_.join_kind.value} "
                f"cohort (n={curve_.cohort_size}): month-6 activity {tail:.1%}"
            )
        lines.append("")
    greens = [art for art in artifacts if art.greenspace is not None]
    if greens:
        lines.append("## Greenspace share (fig7_greenspace.csv)")
        lines.append("")
        for art in greens:
            lines.append(
                f"- {art.window.city} {art.window.year}: {art.greenspace.fraction:.1%} "
                f"of {art.greenspace.n_located} located observations in greenspace"
            )
        lines.append("")
    nets = [art for art in artifacts if art.summary is not None]
    if nets:
        lines.append("## Interaction network (fig9_centrality.csv)")
        lines.append("")
        for art in nets:
            lines.append(
                f"- {art.window.city} {art.window.year}: {art.graph.n_nodes} users, "
                f"{art.graph.n_edges} links, total weight {art.graph.total_weight()}"
            )
            for name in sorted(art.summary.eigen):
                med_d = art.summary.degree[name].median
                med_e = art.summary.eigen[name].median
                lines.append(
                    f"  - {name}: median degree {med_d:.1f}, "
                    f"median eigenvector score {med_e:.4g}"
                )
        lines.append("")
    if config.check_targets:
        lines.append("## Full-corpus reference targets")
        lines.append("")
        lines.append(
            "Reference values describe the complete 2017-2020 three-city corpus; "
            "desk-scale inputs are not expected to match them."
        )
        lines.append("")
        lines.append("| target | reference | computed | within band |")
        lines.append("| --- | --- | --- | --- |")
        for target, value, ok in targets.compare(computed):
            shown = "-" if value is None else f"{value:.4g}"
            verdict = "-" if ok is None else ("yes" if ok else "no")
            lines.append(f"| {target.name} | {target.expected:g} | {shown} | {verdict} |")
        lines.append("")
    (out / "report.md").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_manifest(out: Path, config: RunConfig, started: float) -> None:
    inputs = []
    input_paths = [Path(p) for p in config.dataset_paths]
    for extra in (config.windows_path, config.layer_path):
        if extra is not None:
            input_paths.append(Path(extra))
    for path in input_paths:
        inputs.append(
            {"path": path.name, "sha256": sha256_file(path), "bytes": path.stat().st_size}
        )
    outputs = [
        {"path": p.name, "sha256": sha256_file(p)}
        for p in sorted(out.iterdir())
        if p.is_file() and p.name != "manifest.json"
    ]
    manifest = {
        "version": PACKAGE_VERSION,
        "seed": config.seed,
        "inputs": inputs,
        "outputs": outputs,
        "wall_time_s": round(time.monotonic() - started, 3) if config.timings else None,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
