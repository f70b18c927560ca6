"""Command-line front end.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal
error; every failure prints a one-line diagnostic on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from cnckit import attrition, classify, geo, ingest, network, report, stats, synth
from cnckit import __version__, kernels
from cnckit.errors import CncKitError, ConfigError, DataError
from cnckit.geometry import load_geojson_layer
from cnckit.io import (
    format_timestamp,
    load_challenge_windows,
    load_dataset,
    parse_timestamp,
    write_jsonl,
)
from cnckit.records import Dataset


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are exit code 1, not argparse's 2
        raise ConfigError(message)


def _add_data_arguments(parser, windows_required=True):
    parser.add_argument("--data", nargs="+", required=True, help="record files")
    parser.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    parser.add_argument("--mode", choices=("strict", "lenient"), default="strict")
    parser.add_argument(
        "--windows", required=windows_required, help="challenge windows file"
    )
    parser.add_argument("--output-dir", type=Path, default=Path("out"))


def _load(args) -> Dataset:
    windows = load_challenge_windows(args.windows) if getattr(args, "windows", None) else []
    result = load_dataset(args.data, format=args.format, mode=args.mode, windows=windows)
    if result.skipped and args.verbose:
        print(f"skipped {result.skipped} malformed rows", file=sys.stderr)
    return result.dataset


def _outdir(args) -> Path:
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _slug(window) -> str:
    return f"{window.city.lower().replace(' ', '_')}_{window.year}"


def cmd_validate(args) -> int:
    windows = load_challenge_windows(args.windows) if args.windows else []
    result = load_dataset(args.data, format=args.format, mode=args.mode, windows=windows)
    problems = result.dataset.validate()
    for message in result.errors:
        print(f"skipped: {message}", file=sys.stderr)
    for problem in problems:
        print(f"violation: {problem}", file=sys.stderr)
    print(
        f"{len(result.dataset.observations)} observations, "
        f"{len(result.dataset.identifications)} identifications, "
        f"{len(result.dataset.orphan_identifications)} orphans, "
        f"{result.skipped} skipped rows, {len(problems)} violations"
    )
    if problems:
        raise DataError(f"{len(problems)} invariant violations")
    return 0


def cmd_stats(args) -> int:
    dataset = _load(args)
    out = _outdir(args)
    pooled: list[stats.UserActivity] = []
    for window in sorted(dataset.challenges, key=lambda w: w.key):
        pooled.extend(stats.aggregate_activity(dataset, window))
    histogram = stats.observation_histogram(pooled)
    report.write_csv(
        out / "histogram.csv", ["count", "n_users"], [[c, n] for c, n in histogram.items()]
    )
    curve = stats.lorenz(pooled)
    report.write_csv(
        out / "lorenz.csv",
        ["user_fraction", "obs_fraction"],
        [[float(a), float(b)] for a, b in curve.points],
    )
    trends = stats.per_city_year_trends(dataset)
    report.write_csv(
        out / "trends.csv",
        ["city", "year", "n_obs", "n_users", "mean"],
        [
            [r.city, r.year, r.n_observations, r.n_users, r.mean_observations_per_user]
            for r in trends.rows
        ],
    )
    print(
        f"{len(pooled)} activity rows; "
        f"{stats.multi_challenge_users(dataset)} multi-challenge users"
    )
    return 0


def _classify_config(args) -> classify.ClassifyConfig:
    k = None if args.k == "auto" else int(args.k)
    return classify.ClassifyConfig(
        k=k, seed=args.seed, restarts=args.restarts, raw_features=args.raw_features
    )


def cmd_classify(args) -> int:
    dataset = _load(args)
    out = _outdir(args)
    run = classify.classify_per_challenge(dataset, _classify_config(args))
    rows = []
    elbow_rows = []
    for key, result in sorted(run.results.items()):
        by_user = {a.user_id: a for a in result.activities}
        for user, cluster in sorted(result.model.assignment.items()):
            label = result.classes.get(user)
            rows.append(
                [
                    user,
                    key[0],
                    key[1],
                    by_user[user].n_observations,
                    by_user[user].n_identifications,
                    cluster,
                    label.value if label else "",
                ]
            )
        if result.elbow is not None:
            elbow_rows.extend([key[0], key[1], k, w] for k, w in sorted(result.elbow.wcss.items()))
    report.write_csv(
        out / "classes.csv",
        ["user_id", "city", "year", "n_obs", "n_ids", "cluster_index", "class_label"],
        rows,
    )
    if elbow_rows:
        report.write_csv(out / "elbow.csv", ["city", "year", "k", "wcss"], elbow_rows)
    for key, reason in run.skipped:
        print(f"skipped {key}: {reason}", file=sys.stderr)
    print(f"classified {len(rows)} user-challenge rows")
    return 0


def cmd_attrition(args) -> int:
    dataset = _load(args)
    out = _outdir(args)
    events = "observations" if args.observations_only else "all"
    rows = []
    for window in sorted(dataset.challenges, key=lambda w: w.key):
        cohorts = attrition.build_cohorts(dataset, window, window.year)
        for kind, members in (
            (attrition.JoinKind.CHALLENGE, cohorts.challenge),
            (attrition.JoinKind.REGULAR, cohorts.regular),
        ):
            if not members:
                continue
            curve = attrition.retention_curve(
                dataset,
                members,
                horizon=args.horizon,
                events=events,
                city=window.city,
                year=window.year,
                join_kind=kind,
            )
            cohort_id = f"{_slug(window)}_{kind.value}"
            rows.extend(
                [cohort_id, m, value, curve.cohort_size]
                for m, value in enumerate(curve.values)
            )
    report.write_csv(
        out / "retention.csv",
        ["cohort_id", "month_index", "fraction", "cohort_size"],
        rows,
    )
    print(f"wrote {len(rows)} retention rows")
    return 0


def cmd_geo(args) -> int:
    dataset = _load(args)
    out = _outdir(args)
    layer = load_geojson_layer(args.layer) if args.layer else None
    green_rows = []
    for window in sorted(dataset.challenges, key=lambda w: w.key):
        points = [
            obs.location
            for obs in dataset.observations.values()
            if window.contains(obs) and obs.location is not None
        ]
        if points:
            lats = [p[0] for p in points]
            lons = [p[1] for p in points]
            grid = geo.GridSpec(
                min_lat=min(lats),
                min_lon=min(lons),
                max_lat=max(lats) + 1e-9,
                max_lon=max(lons) + 1e-9,
                nx=args.grid[0],
                ny=args.grid[1],
            )
            qc = geo.quadrant_count(points, grid)
            report.write_csv(
                out / f"quadrants_{_slug(window)}.csv",
                ["i", "j", "count"],
                [
                    [i, j, int(qc.counts[i, j])]
                    for i in range(grid.nx)
                    for j in range(grid.ny)
                ],
            )
        if layer is not None:
            try:
                green = geo.greenspace_fraction(dataset, layer, window)
            except DataError:
                continue
            green_rows.append(
                [window.city, window.year, green.fraction, green.n_located, green.n_unlocated]
            )
    if layer is not None:
        report.write_csv(
            out / "greenspace.csv",
            ["city", "year", "fraction", "n_located", "n_unlocated"],
            green_rows,
        )
    print("geo outputs written")
    return 0


def cmd_network(args) -> int:
    dataset = _load(args)
    out = _outdir(args)
    for window in sorted(dataset.challenges, key=lambda w: w.key):
        graph = network.build_graph(dataset, window, include_isolated=args.include_isolated)
        scores = None
        if graph.n_edges:
            scores = network.compute_centralities(
                graph,
                weighted_degree=not args.unweighted_degree,
                tol=args.tol,
                max_iter=args.max_iter,
            )
        suffix = "json" if args.graph_format == "graph_json" else "csv"
        network.export_graph(
            graph, scores, {}, out / f"graph_{_slug(window)}.{suffix}", format=args.graph_format
        )
        print(
            f"{window.city} {window.year}: {graph.n_nodes} nodes, "
            f"{graph.n_edges} edges, weight {graph.total_weight()}"
        )
    return 0


def _synth_params_from_file(path: str, base: "synth.SynthParams") -> "synth.SynthParams":
    """Apply generator parameters from a JSON file over the defaults."""
    from cnckit.records import ChallengeWindow

    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read params file {path}: {exc}") from exc
    scalars = {
        "seed", "n_users", "monthly_survival", "max_months", "regular_fraction",
        "burst_days", "greenspace_weight", "background_radius_deg",
        "unlocated_fraction", "hub_bias", "n_taxa",
    }
    unknown = set(raw) - scalars - {"class_mixture", "bbox", "challenge_window", "activity_laws"}
    if unknown:
        raise ConfigError(f"unknown generator parameters: {sorted(unknown)}")
    updates = {key: raw[key] for key in scalars if key in raw}
    if "class_mixture" in raw:
        updates["class_mixture"] = tuple(raw["class_mixture"])
    if "bbox" in raw:
        updates["bbox"] = tuple(raw["bbox"])
    if "challenge_window" in raw:
        win = raw["challenge_window"]
        try:
            updates["challenge_window"] = ChallengeWindow(
                city=win["city"],
                year=int(win["year"]),
                start=parse_timestamp(win["start"]),
                end=parse_timestamp(win["end"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad challenge_window in {path}: {exc}") from exc
    if "activity_laws" in raw:
        from cnckit.classify import UserClass

        laws = dict(base.activity_laws)
        for name, law in raw["activity_laws"].items():
            try:
                laws[UserClass(name)] = synth.ClassLaw(**law)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"bad activity law {name!r} in {path}: {exc}") from exc
        updates["activity_laws"] = laws
    return replace(base, **updates)


def cmd_synth(args) -> int:
    params = synth.standard_params(seed=args.seed, n_users=args.users)
    params = replace(
        params,
        monthly_survival=args.survival,
        regular_fraction=args.regular_fraction,
    )
    if args.params_file:
        params = _synth_params_from_file(args.params_file, params)
    if args.mixture:
        fractions = tuple(float(x) for x in args.mixture.split(","))
        if len(fractions) != 4:
            raise ConfigError("--mixture needs four comma-separated fractions")
        params = replace(params, class_mixture=fractions)
    dataset, truth = synth.generate(params)
    out = _outdir(args)
    write_jsonl(dataset, out / "synth.jsonl")
    window = params.challenge_window
    (out / "windows.txt").write_text(
        "city,year,start,end\n"
        f"{window.city},{window.year},{format_timestamp(window.start)},"
        f"{format_timestamp(window.end)}\n",
        encoding="utf-8",
    )
    truth_doc = {
        "class_counts": {cls.value: n for cls, n in sorted(truth.class_counts.items(), key=lambda kv: kv[0].value)},
        "n_window_observations": truth.n_window_observations,
        "n_window_identifications": truth.n_window_identifications,
        "n_edges": len(truth.edge_tally),
    }
    (out / "groundtruth.json").write_text(
        json.dumps(truth_doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(
        f"generated {len(dataset.observations)} observations, "
        f"{len(dataset.identifications)} identifications for {args.users} users"
    )
    return 0


def cmd_ingest(args) -> int:
    cache = ingest.ResponseCache(args.cache_dir) if args.cache_dir else None
    bbox = None
    if args.bbox:
        parts = [float(x) for x in args.bbox.split(",")]
        if len(parts) != 4:
            raise ConfigError("--bbox needs min_lat,min_lon,max_lat,max_lon")
        bbox = tuple(parts)
    query = ingest.IngestQuery(
        endpoint_base=args.endpoint,
        date_from=parse_timestamp(getattr(args, "from")),
        date_to=parse_timestamp(args.to),
        bbox=bbox,
        page_size=args.page_size,
    )
    client = ingest.ApiClient(cache=cache, offline=args.offline)
    limits = ingest.FetchLimits(
        max_requests_per_minute=args.rate, max_retries=args.max_retries
    )
    result = client.fetch_all(query, limits)
    write_jsonl(result.fragment, args.out)
    print(
        f"{len(result.fragment.observations)} observations, "
        f"{len(result.fragment.identifications)} identifications "
        f"({result.pages} pages, {result.requests_made} requests, "
        f"{result.retries} retries, {result.cache_hits} cache hits)"
    )
    return 0


def cmd_report(args) -> int:
    if args.config:
        config = report.RunConfig.from_json(args.config, output_dir=args.output_dir)
    else:
        if not args.data or not args.windows:
            raise ConfigError("report needs either --config or --data plus --windows")
        if args.output_dir is None:
            raise ConfigError("report needs --output-dir")
        config = report.RunConfig(
            dataset_paths=[Path(p) for p in args.data],
            output_dir=Path(args.output_dir),
            format=args.format,
            mode=args.mode,
            windows_path=Path(args.windows),
            layer_path=Path(args.layer) if args.layer else None,
        )
    k = None if args.k == "auto" else int(args.k)
    config = replace(
        config,
        seed=args.seed,
        k=k,
        restarts=args.restarts,
        raw_features=args.raw_features,
        include_isolated=args.include_isolated,
        unweighted_degree=args.unweighted_degree,
        graph_format=args.graph_format,
        emit_svg=args.svg,
        check_targets=args.check_targets,
        timings=args.timings,
    )
    result = report.run_report(config)
    print(f"report written to {result.output_dir} ({len(result.files)} files)")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cnckit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cnckit {__version__}")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="load files and check dataset invariants")
    _add_data_arguments(p, windows_required=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("stats", help="activity histograms, Lorenz curve, trends")
    _add_data_arguments(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("classify", help="k-means user classes per challenge")
    _add_data_arguments(p)
    p.add_argument("--k", default="4", help="cluster count, or 'auto' for the elbow")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--raw-features", action="store_true")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("attrition", help="cohort retention curves")
    _add_data_arguments(p)
    p.add_argument("--horizon", type=int, default=6)
    p.add_argument("--observations-only", action="store_true")
    p.set_defaults(func=cmd_attrition)

    p = sub.add_parser("geo", help="quadrant counts and greenspace shares")
    _add_data_arguments(p)
    p.add_argument("--layer", help="GeoJSON polygon layer")
    p.add_argument("--grid", type=int, nargs=2, default=(20, 20), metavar=("NX", "NY"))
    p.set_defaults(func=cmd_geo)

    p = sub.add_parser("network", help="interaction graph and centralities")
    _add_data_arguments(p)
    p.add_argument("--include-isolated", action="store_true")
    p.add_argument("--unweighted-degree", action="store_true")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--graph-format", choices=("graph_json", "edge_csv"), default="graph_json")
    p.set_defaults(func=cmd_network)

    p = sub.add_parser("synth", help="generate a synthetic community dataset")
    p.add_argument("--seed", type=int, default=777)
    p.add_argument("--users", type=int, default=1000)
    p.add_argument("--survival", type=float, default=0.6)
    p.add_argument("--regular-fraction", type=float, default=0.0)
    p.add_argument("--mixture", help="four comma-separated class fractions")
    p.add_argument("--params-file", help="JSON file of generator parameters")
    p.add_argument("--output-dir", type=Path, default=Path("out"))
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="fetch records from an observations API")
    p.add_argument("--endpoint", required=True)
    p.add_argument("--bbox", help="min_lat,min_lon,max_lat,max_lon")
    p.add_argument("--from", required=True, help="RFC 3339 start time")
    p.add_argument("--to", required=True, help="RFC 3339 end time")
    p.add_argument("--page-size", type=int, default=200)
    p.add_argument("--rate", type=int, default=60, help="max requests per minute")
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--cache-dir")
    p.add_argument("--offline", action="store_true", help="serve from cache only")
    p.add_argument("--out", type=Path, required=True, help="output JSONL path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("report", help="run every analysis and write a report tree")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--data", nargs="+")
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--mode", choices=("strict", "lenient"), default="strict")
    p.add_argument("--windows")
    p.add_argument("--layer")
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", default="4")
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--raw-features", action="store_true")
    p.add_argument("--include-isolated", action="store_true")
    p.add_argument("--unweighted-degree", action="store_true")
    p.add_argument("--graph-format", choices=("graph_json", "edge_csv"), default="graph_json")
    p.add_argument("--svg", action="store_true", help="emit minimal SVG charts")
    p.add_argument("--check-targets", action="store_true")
    p.add_argument("--timings", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bench", help="compare kernel backends")
    p.add_argument("--sizes", type=int, nargs="*", default=None)
    p.set_defaults(func=None)  # dispatched specially to avoid numpy-heavy import

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "bench":
            from cnckit import bench

            return bench.run(sizes=args.sizes)
        if args.verbose:
            print(f"kernel backend: {kernels.active_backend()}", file=sys.stderr)
        return args.func(args)
    except ConfigError as exc:
        print(f"cnckit: config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"cnckit: data error: {exc}", file=sys.stderr)
        return 2
    except CncKitError as exc:
        print(f"cnckit: error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"cnckit: data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal failures
        print(f"cnckit: internal error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
