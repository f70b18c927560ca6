"""Join cohorts and monthly retention curves.

Joining is proxied by the first recorded activity (observation or
identification) because account-creation dates are not part of the record
export. A retention month is a fixed 30-day window anchored at the user's
own join instant, [join + 30m days, join + 30(m+1) days), which keeps the
curves timezone-free and translation-invariant.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from datetime import datetime, timedelta

from cnckit.errors import DataError
from cnckit.records import ChallengeWindow, Dataset

MONTH = timedelta(days=30)


class JoinKind(enum.Enum):
    CHALLENGE = "challenge"
    REGULAR = "regular"


@dataclass(frozen=True)
class Cohorts:
    challenge: set[str]
    regular: set[str]


@dataclass(frozen=True)
class RetentionCurve:
    city: str
    year: int
    join_kind: JoinKind
    values: list[float]  # index m -> fraction of the cohort active in month m
    cohort_size: int


def _user_events(dataset: Dataset, events: str = "all") -> dict[str, list[datetime]]:
    """Event timestamps per user; ``events`` is "all" or "observations"."""
    if events not in ("all", "observations"):
        raise DataError(f"unknown events selector {events!r}")
    per_user: dict[str, list[datetime]] = {}
    for obs in dataset.observations.values():
        per_user.setdefault(obs.observer_id, []).append(obs.observed_at)
    if events == "all":
        for ident in dataset.identifications.values():
            per_user.setdefault(ident.identifier_id, []).append(ident.created_at)
    return per_user


def first_activity(dataset: Dataset) -> dict[str, datetime]:
    """Earliest observation or identification timestamp per user."""
    return {user: min(times) for user, times in _user_events(dataset).items()}


def build_cohorts(dataset: Dataset, window: ChallengeWindow, year: int) -> Cohorts:
    """Challenge joiners versus regular joiners of one calendar year.

    Challenge cohort: first activity inside [window.start, window.end].
    Regular cohort: first activity in UTC calendar `year` but outside every
    configured challenge window. The two sets are disjoint by construction.
    """
    if window.year != year:
        raise DataError(f"window year {window.year} does not match {year}")
    joined = first_activity(dataset)
    challenge = {user for user, at in joined.items() if window.contains_time(at)}
    regular = {
        user
        for user, at in joined.items()
        if at.year == year
        and user not in challenge
        and not any(win.contains_time(at) for win in dataset.challenges)
    }
    return Cohorts(challenge=challenge, regular=regular)


def retention_curve(
    dataset: Dataset,
    cohort: set[str],
    horizon: int = 6,
    events: str = "all",
    city: str = "",
    year: int = 0,
    join_kind: JoinKind = JoinKind.CHALLENGE,
) -> RetentionCurve:
    """Fraction of the cohort active in each 30-day month after joining.

    Month 0 always scores 1.0: the joining event itself is activity.
    """
    if not cohort:
        raise DataError("empty cohort")
    per_user = _user_events(dataset, events=events)
    joined = first_activity(dataset)
    active_counts = [0] * (horizon + 1)
    for user in cohort:
        if user not in joined:
            raise DataError(f"cohort user {user!r} has no recorded activity")
        join_at = joined[user]
        months = {
            int((at - join_at) // MONTH)
            for at in per_user.get(user, [])
            if at >= join_at
        }
        for m in range(horizon + 1):
            if m in months:
                active_counts[m] += 1
    size = len(cohort)
    return RetentionCurve(
        city=city,
        year=year,
        join_kind=join_kind,
        values=[count / size for count in active_counts],
        cohort_size=size,
    )


def next_year_participation(
    dataset: Dataset, window_y: ChallengeWindow, window_y1: ChallengeWindow
) -> float:
    """Fraction of window-y joiners with any activity inside window y+1."""
    if window_y1.year != window_y.year + 1 or window_y1.city != window_y.city:
        raise DataError(
            f"windows must be consecutive years of one city, got "
            f"{window_y.key} and {window_y1.key}"
        )
    joined = first_activity(dataset)
    cohort = {user for user, at in joined.items() if window_y.contains_time(at)}
    if not cohort:
        return 0.0
    per_user = _user_events(dataset)
    returned = sum(
        1
        for user in cohort
        if any(window_y1.contains_time(at) for at in per_user.get(user, []))
    )
    return returned / len(cohort)
