"""Canonical record types, the in-memory dataset, and window filtering.

A Dataset is immutable after construction by convention: every operation
returns a new Dataset and never mutates its input, so datasets are safe to
share across threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone

from cnckit.geometry import Polygon


class QualityGrade(enum.Enum):
    CASUAL = "casual"
    NEEDS_ID = "needs_id"
    RESEARCH = "research"


def _ensure_utc(value: datetime, name: str) -> datetime:
    if not isinstance(value, datetime):
        raise ValueError(f"{name} must be a datetime")
    if value.tzinfo is None:
        return value.replace(tzinfo=timezone.utc)
    return value.astimezone(timezone.utc)


@dataclass(frozen=True)
class ObservationRecord:
    """One submitted observation: who, when, optionally where and what."""

    observation_id: str
    observer_id: str
    observed_at: datetime
    submitted_at: datetime | None = None
    latitude: float | None = None
    longitude: float | None = None
    taxon_id: str | None = None
    initial_guess_taxon: str | None = None
    quality_grade: QualityGrade | None = None

    def __post_init__(self):
        if not self.observation_id or not self.observer_id:
            raise ValueError("observation_id and observer_id are required")
        object.__setattr__(self, "observed_at", _ensure_utc(self.observed_at, "observed_at"))
        if self.submitted_at is not None:
            object.__setattr__(self, "submitted_at", _ensure_utc(self.submitted_at, "submitted_at"))
        if (self.latitude is None) != (self.longitude is None):
            raise ValueError("latitude and longitude must be given together")
        if self.latitude is not None:
            if not -90.0 <= self.latitude <= 90.0:
                raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
            if not -180.0 <= self.longitude <= 180.0:
                raise ValueError(f"longitude {self.longitude} outside [-180, 180]")

    @property
    def location(self) -> tuple[float, float] | None:
        if self.latitude is None:
            return None
        return (self.latitude, self.longitude)


@dataclass(frozen=True)
class IdentificationRecord:
    """A species determination another user attached to an observation."""

    identification_id: str
    observation_id: str
    identifier_id: str
    created_at: datetime
    taxon_id: str
    agrees_with_community: bool | None = None

    def __post_init__(self):
        if not self.identification_id or not self.observation_id or not self.identifier_id:
            raise ValueError("identification ids and user reference are required")
        object.__setattr__(self, "created_at", _ensure_utc(self.created_at, "created_at"))


@dataclass(frozen=True)
class ChallengeWindow:
    """One (city, year) challenge: a time window plus an optional boundary."""

    city: str
    year: int
    start: datetime
    end: datetime
    region: Polygon | None = None

    def __post_init__(self):
        object.__setattr__(self, "start", _ensure_utc(self.start, "start"))
        object.__setattr__(self, "end", _ensure_utc(self.end, "end"))
        if self.end <= self.start:
            raise ValueError("window end must be strictly after start")

    @property
    def key(self) -> tuple[str, int]:
        return (self.city, self.year)

    def contains_time(self, when: datetime) -> bool:
        """Window membership in time: the closed interval [start, end]."""
        return self.start <= when <= self.end

    def contains(self, obs: ObservationRecord) -> bool:
        """Observation membership: time in window and, if a region is set,
        a location inside it (unlocated observations fail a region test)."""
        if not self.contains_time(obs.observed_at):
            return False
        if self.region is not None:
            if obs.location is None:
                return False
            return self.region.contains(obs.latitude, obs.longitude)
        return True


@dataclass
class Dataset:
    """Observations, identifications, and challenge windows.

    Record dicts are keyed by id, which makes id uniqueness structural.
    Identifications whose observation_id did not resolve at merge time live
    in orphan_identifications.
    """

    observations: dict[str, ObservationRecord] = field(default_factory=dict)
    identifications: dict[str, IdentificationRecord] = field(default_factory=dict)
    challenges: list[ChallengeWindow] = field(default_factory=list)
    orphan_identifications: list[IdentificationRecord] = field(default_factory=list)

    def __post_init__(self):
        self._ident_index: dict[str, list[IdentificationRecord]] | None = None

    def identifications_for(self, observation_id: str) -> list[IdentificationRecord]:
        if self._ident_index is None:
            index: dict[str, list[IdentificationRecord]] = {}
            for ident in self.identifications.values():
                index.setdefault(ident.observation_id, []).append(ident)
            self._ident_index = index
        return self._ident_index.get(observation_id, [])

    def window(self, city: str, year: int) -> ChallengeWindow:
        for win in self.challenges:
            if win.key == (city, year):
                return win
        raise KeyError(f"no challenge window for ({city!r}, {year})")

    def has_window(self, window: ChallengeWindow) -> bool:
        return any(win.key == window.key for win in self.challenges)

    def validate(self) -> list[str]:
        """Re-check dataset invariants; returns a list of violations."""
        problems = []
        for ident in self.identifications.values():
            if ident.observation_id not in self.observations:
                problems.append(
                    f"identification {ident.identification_id} references unknown "
                    f"observation {ident.observation_id}"
                )
        seen = set()
        for win in self.challenges:
            if win.key in seen:
                problems.append(f"duplicate challenge window {win.key}")
            seen.add(win.key)
        return problems


def merge(fragments: list[Dataset]) -> Dataset:
    """Union of fragments; duplicate ids keep the first occurrence.

    Identifications (including fragments' orphans, which may resolve once
    the fragments are combined) are re-partitioned against the merged
    observation set.
    """
    observations: dict[str, ObservationRecord] = {}
    candidates: dict[str, IdentificationRecord] = {}
    challenges: list[ChallengeWindow] = []
    seen_windows: set[tuple[str, int]] = set()
    for frag in fragments:
        for oid, obs in frag.observations.items():
            observations.setdefault(oid, obs)
        for ident in list(frag.identifications.values()) + list(frag.orphan_identifications):
            candidates.setdefault(ident.identification_id, ident)
        for win in frag.challenges:
            if win.key not in seen_windows:
                seen_windows.add(win.key)
                challenges.append(win)
    identifications: dict[str, IdentificationRecord] = {}
    orphans: list[IdentificationRecord] = []
    for ident in candidates.values():
        if ident.observation_id in observations:
            identifications[ident.identification_id] = ident
        else:
            orphans.append(ident)
    return Dataset(
        observations=observations,
        identifications=identifications,
        challenges=challenges,
        orphan_identifications=orphans,
    )


def filter_by_challenge(dataset: Dataset, window: ChallengeWindow) -> Dataset:
    """Restrict to observations inside the window and their identifications.

    Identification timestamps are deliberately not filtered: identifications
    of challenge observations routinely arrive after the event.
    """
    observations = {
        oid: obs for oid, obs in dataset.observations.items() if window.contains(obs)
    }
    identifications = {
        iid: ident
        for iid, ident in dataset.identifications.items()
        if ident.observation_id in observations
    }
    return Dataset(
        observations=observations,
        identifications=identifications,
        challenges=[window],
        orphan_identifications=[],
    )


def derive_quality_grade(
    observation: ObservationRecord, identifications: list[IdentificationRecord]
) -> QualityGrade:
    """Grade from the count of independent identifiers.

    Independent means a distinct identifier other than the observer;
    repeated identifications by one user count once. More than two
    independent identifiers is research grade, one or two needs-id,
    none casual.
    """
    for ident in identifications:
        if ident.observation_id != observation.observation_id:
            raise ValueError(
                f"identification {ident.identification_id} targets "
                f"{ident.observation_id}, not {observation.observation_id}"
            )
    independent = {
        ident.identifier_id
        for ident in identifications
        if ident.identifier_id != observation.observer_id
    }
    if len(independent) > 2:
        return QualityGrade.RESEARCH
    if len(independent) >= 1:
        return QualityGrade.NEEDS_ID
    return QualityGrade.CASUAL
