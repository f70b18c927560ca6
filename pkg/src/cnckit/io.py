"""File loading and writing for the documented record schemas.

JSONL: one record per line. Observation lines carry
``{"type": "observation", "id", "user_id", "observed_at", "lat", "lon",
"taxon_id", "quality_grade"}``; identification lines carry
``{"type": "identification", "id", "observation_id", "user_id",
"created_at", "taxon_id"}``. Unknown keys are ignored. Timestamps are
RFC 3339; naive timestamps are taken as UTC.

CSV: the same field names as a header row, one file per record type.

Challenge windows come from a plain-text file of
``city,year,start,end[,region_geojson_path]`` lines ('#' starts a comment).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from cnckit.errors import ConfigError, LoadError
from cnckit.geometry import load_geojson_layer
from cnckit.records import (
    ChallengeWindow,
    Dataset,
    IdentificationRecord,
    ObservationRecord,
    QualityGrade,
    merge,
)


def parse_timestamp(value: str) -> datetime:
    """Parse an RFC 3339 timestamp into an aware UTC datetime."""
    if not isinstance(value, str) or not value:
        raise ValueError(f"missing timestamp: {value!r}")
    text = value.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError as exc:
        raise ValueError(f"bad timestamp {value!r}: {exc}") from exc
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def format_timestamp(value: datetime) -> str:
    """Canonical RFC 3339 rendering (UTC, 'Z' suffix, seconds precision)."""
    utc = value.astimezone(timezone.utc)
    if utc.microsecond:
        return utc.strftime("%Y-%m-%dT%H:%M:%S.%fZ")
    return utc.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class LoadResult:
    """A parsed fragment plus the lenient-mode skip accounting."""

    dataset: Dataset
    skipped: int = 0
    errors: list[str] = field(default_factory=list)


def _opt_float(value) -> float | None:
    if value is None or value == "":
        return None
    return float(value)


def _opt_str(value) -> str | None:
    if value is None or value == "":
        return None
    return str(value)


def _grade(value) -> QualityGrade | None:
    if value is None or value == "":
        return None
    try:
        return QualityGrade(str(value).lower())
    except ValueError as exc:
        raise ValueError(f"unknown quality grade {value!r}") from exc


def _observation_from_fields(fields: dict) -> ObservationRecord:
    return ObservationRecord(
        observation_id=str(fields.get("id") or ""),
        observer_id=str(fields.get("user_id") or ""),
        observed_at=parse_timestamp(fields.get("observed_at")),
        submitted_at=(
            parse_timestamp(fields["submitted_at"]) if fields.get("submitted_at") else None
        ),
        latitude=_opt_float(fields.get("lat")),
        longitude=_opt_float(fields.get("lon")),
        taxon_id=_opt_str(fields.get("taxon_id")),
        initial_guess_taxon=_opt_str(fields.get("initial_guess")),
        quality_grade=_grade(fields.get("quality_grade")),
    )


def _identification_from_fields(fields: dict) -> IdentificationRecord:
    agrees = fields.get("agrees_with_community")
    if isinstance(agrees, str):
        agrees = {"true": True, "false": False, "": None}.get(agrees.lower())
    return IdentificationRecord(
        identification_id=str(fields.get("id") or ""),
        observation_id=str(fields.get("observation_id") or ""),
        identifier_id=str(fields.get("user_id") or ""),
        created_at=parse_timestamp(fields.get("created_at")),
        taxon_id=str(fields.get("taxon_id") or ""),
        agrees_with_community=agrees,
    )


def _parse_jsonl_line(line: str):
    fields = json.loads(line)
    if not isinstance(fields, dict):
        raise ValueError("record line is not a JSON object")
    kind = fields.get("type")
    if kind == "observation":
        return _observation_from_fields(fields)
    if kind == "identification":
        return _identification_from_fields(fields)
    raise ValueError(f"unknown record type {kind!r}")


def load_records(path: str | Path, format: str = "jsonl", mode: str = "strict") -> LoadResult:
    """Load one file of records into a Dataset fragment.

    In lenient mode malformed rows are counted and skipped; in strict mode
    the first malformed row raises LoadError.
    """
    if format not in ("jsonl", "csv"):
        raise ConfigError(f"unknown format tag {format!r}")
    if mode not in ("strict", "lenient"):
        raise ConfigError(f"unknown mode {mode!r}")
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}") from exc

    dataset = Dataset()
    result = LoadResult(dataset=dataset)

    def add(record):
        if isinstance(record, ObservationRecord):
            dataset.observations.setdefault(record.observation_id, record)
        else:
            dataset.identifications.setdefault(record.identification_id, record)

    def fail(where: str, exc: Exception):
        message = f"{path}:{where}: {exc}"
        if mode == "strict":
            raise LoadError(message) from exc
        result.skipped += 1
        result.errors.append(message)

    if format == "jsonl":
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                add(_parse_jsonl_line(line))
            except (ValueError, KeyError, TypeError) as exc:
                fail(str(lineno), exc)
    else:
        rows = list(csv.DictReader(text.splitlines()))
        if rows:
            header = set(rows[0].keys())
            if "observed_at" in header:
                parse_row = _observation_from_fields
            elif "created_at" in header:
                parse_row = _identification_from_fields
            else:
                raise LoadError(f"{path}: header matches neither record type")
            for lineno, row in enumerate(rows, start=2):
                try:
                    add(parse_row(row))
                except (ValueError, KeyError, TypeError) as exc:
                    fail(str(lineno), exc)
    return result


def load_dataset(
    paths: list[str | Path],
    format: str = "jsonl",
    mode: str = "strict",
    windows: list[ChallengeWindow] | None = None,
) -> LoadResult:
    """Load several files in declared order and merge them."""
    results = [load_records(p, format=format, mode=mode) for p in paths]
    dataset = merge([r.dataset for r in results])
    if windows:
        dataset.challenges.extend(windows)
    return LoadResult(
        dataset=dataset,
        skipped=sum(r.skipped for r in results),
        errors=[e for r in results for e in r.errors],
    )


def observation_to_fields(obs: ObservationRecord) -> dict:
    fields = {
        "type": "observation",
        "id": obs.observation_id,
        "user_id": obs.observer_id,
        "observed_at": format_timestamp(obs.observed_at),
    }
    if obs.submitted_at is not None:
        fields["submitted_at"] = format_timestamp(obs.submitted_at)
    if obs.location is not None:
        fields["lat"] = obs.latitude
        fields["lon"] = obs.longitude
    if obs.taxon_id is not None:
        fields["taxon_id"] = obs.taxon_id
    if obs.initial_guess_taxon is not None:
        fields["initial_guess"] = obs.initial_guess_taxon
    if obs.quality_grade is not None:
        fields["quality_grade"] = obs.quality_grade.value
    return fields


def identification_to_fields(ident: IdentificationRecord) -> dict:
    fields = {
        "type": "identification",
        "id": ident.identification_id,
        "observation_id": ident.observation_id,
        "user_id": ident.identifier_id,
        "created_at": format_timestamp(ident.created_at),
        "taxon_id": ident.taxon_id,
    }
    if ident.agrees_with_community is not None:
        fields["agrees_with_community"] = ident.agrees_with_community
    return fields


def write_jsonl(dataset: Dataset, path: str | Path) -> None:
    """Write a dataset in the JSONL schema, observations before
    identifications, each group in id-insertion order."""
    lines = []
    for obs in dataset.observations.values():
        lines.append(json.dumps(observation_to_fields(obs), sort_keys=True))
    for ident in dataset.identifications.values():
        lines.append(json.dumps(identification_to_fields(ident), sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_challenge_windows(path: str | Path) -> list[ChallengeWindow]:
    """Parse the windows file; region paths are resolved relative to it."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read challenge windows file {path}: {exc}") from exc
    windows: list[ChallengeWindow] = []
    seen: set[tuple[str, int]] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if parts[:4] == ["city", "year", "start", "end"]:
            continue  # optional header
        if len(parts) not in (4, 5):
            raise ConfigError(f"{path}:{lineno}: expected city,year,start,end[,region]")
        city, year_text, start_text, end_text = parts[:4]
        try:
            year = int(year_text)
            start = parse_timestamp(start_text)
            end = parse_timestamp(end_text)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        region = None
        if len(parts) == 5 and parts[4]:
            region_path = Path(parts[4])
            if not region_path.is_absolute():
                region_path = path.parent / region_path
            layer = load_geojson_layer(region_path)
            if len(layer.polygons) != 1:
                raise ConfigError(
                    f"{path}:{lineno}: region file must contain exactly one polygon"
                )
            region = layer.polygons[0]
        try:
            window = ChallengeWindow(city=city, year=year, start=start, end=end, region=region)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        if window.key in seen:
            raise ConfigError(f"{path}:{lineno}: duplicate challenge {window.key}")
        seen.add(window.key)
        windows.append(window)
    return windows
