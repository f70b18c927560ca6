"""Per-user activity aggregation and contribution-distribution statistics.

Lorenz curves and top shares are computed in exact rational arithmetic so
the two stay consistent at every user boundary. Both are statistics of the
observation distribution: rows with zero observations (pure identifiers)
are excluded from them, though such users do count as activity rows for
classification.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from cnckit.errors import DataError
from cnckit.records import ChallengeWindow, Dataset


@dataclass(frozen=True)
class UserActivity:
    """Counts for one user in one challenge; at least one count is > 0."""

    user_id: str
    city: str
    year: int
    n_observations: int
    n_identifications: int


@dataclass(frozen=True)
class LorenzCurve:
    """Points (fraction_of_users, cumulative_fraction_of_observations),
    users sorted ascending by contribution; exact rationals."""

    points: list[tuple[Fraction, Fraction]]

    def value_at(self, user_fraction: Fraction) -> Fraction:
        """Curve value at an exact user-boundary fraction."""
        for uf, of in self.points:
            if uf == user_fraction:
                return of
        raise DataError(f"{user_fraction} is not a user-boundary fraction")


@dataclass(frozen=True)
class TrendRow:
    city: str
    year: int
    n_observations: int
    n_users: int  # users with any activity (observers or identifiers)
    n_observers: int  # users with at least one observation
    mean_observations_per_user: Fraction


@dataclass(frozen=True)
class TrendTable:
    rows: list[TrendRow]


def aggregate_activity(dataset: Dataset, window: ChallengeWindow) -> list[UserActivity]:
    """One row per user active in the window.

    Observations count when inside the window; identifications count when
    they target an in-window observation by a different user (the
    identification's own timestamp is not window-filtered).
    """
    if not dataset.has_window(window):
        raise DataError(f"unknown challenge window {window.key}")
    obs_counts: dict[str, int] = {}
    ident_counts: dict[str, int] = {}
    in_window = {
        oid: obs for oid, obs in dataset.observations.items() if window.contains(obs)
    }
    for obs in in_window.values():
        obs_counts[obs.observer_id] = obs_counts.get(obs.observer_id, 0) + 1
    for ident in dataset.identifications.values():
        target = in_window.get(ident.observation_id)
        if target is None or ident.identifier_id == target.observer_id:
            continue
        ident_counts[ident.identifier_id] = ident_counts.get(ident.identifier_id, 0) + 1
    rows = [
        UserActivity(
            user_id=user,
            city=window.city,
            year=window.year,
            n_observations=obs_counts.get(user, 0),
            n_identifications=ident_counts.get(user, 0),
        )
        for user in sorted(set(obs_counts) | set(ident_counts))
    ]
    return rows


def observation_histogram(activities: list[UserActivity]) -> dict[int, int]:
    """Histogram of observation counts over users with >= 1 observation."""
    histogram: dict[int, int] = {}
    for row in activities:
        if row.n_observations >= 1:
            histogram[row.n_observations] = histogram.get(row.n_observations, 0) + 1
    return dict(sorted(histogram.items()))


def _observers_ascending(activities: list[UserActivity]) -> list[UserActivity]:
    rows = [row for row in activities if row.n_observations >= 1]
    rows.sort(key=lambda row: (row.n_observations, row.user_id))
    return rows


def lorenz(activities: list[UserActivity]) -> LorenzCurve:
    """Cumulative observation share against the user-base fraction.

    Users are sorted ascending by observation count, ties broken by
    user_id; the curve is evaluated at every user boundary including (0,0).
    """
    rows = _observers_ascending(activities)
    if not rows:
        raise DataError("no rows with observations")
    total = sum(row.n_observations for row in rows)
    n = len(rows)
    points = [(Fraction(0), Fraction(0))]
    running = 0
    for i, row in enumerate(rows, start=1):
        running += row.n_observations
        points.append((Fraction(i, n), Fraction(running, total)))
    return LorenzCurve(points=points)


def top_share(activities: list[UserActivity], fraction) -> Fraction:
    """Observation share of the top max(1, floor(fraction * N)) observers.

    The top-k set is the suffix of the Lorenz ordering, so the two
    statistics agree exactly at user boundaries.
    """
    fraction = Fraction(fraction)
    if not 0 < fraction <= 1:
        raise DataError(f"fraction {fraction} outside (0, 1]")
    rows = _observers_ascending(activities)
    if not rows:
        raise DataError("no rows with observations")
    n = len(rows)
    k = max(1, int(fraction * n))  # Fraction truncation == floor for positives
    total = sum(row.n_observations for row in rows)
    top_total = sum(row.n_observations for row in rows[n - k :])
    return Fraction(top_total, total)


def per_city_year_trends(dataset: Dataset) -> TrendTable:
    """Exact per-challenge totals; mean preserves n_obs = mean * n_users."""
    if not dataset.challenges:
        raise DataError("dataset has no challenge windows")
    rows = []
    for window in sorted(dataset.challenges, key=lambda w: w.key):
        activities = aggregate_activity(dataset, window)
        n_obs = sum(a.n_observations for a in activities)
        n_users = len(activities)
        n_observers = sum(1 for a in activities if a.n_observations >= 1)
        mean = Fraction(n_obs, n_users) if n_users else Fraction(0)
        rows.append(
            TrendRow(
                city=window.city,
                year=window.year,
                n_observations=n_obs,
                n_users=n_users,
                n_observers=n_observers,
                mean_observations_per_user=mean,
            )
        )
    return TrendTable(rows=rows)


def multi_challenge_users(dataset: Dataset) -> int:
    """Distinct users active in two or more (city, year) challenges."""
    seen: dict[str, set[tuple[str, int]]] = {}
    for window in dataset.challenges:
        for row in aggregate_activity(dataset, window):
            seen.setdefault(row.user_id, set()).add((row.city, row.year))
    return sum(1 for windows in seen.values() if len(windows) >= 2)
