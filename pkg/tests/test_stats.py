from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnckit.errors import DataError
from cnckit.stats import (
    UserActivity,
    aggregate_activity,
    lorenz,
    multi_challenge_users,
    observation_histogram,
    per_city_year_trends,
    top_share,
)
from conftest import window
from oracles import lorenz_oracle, top_share_oracle


def activity(user, n_obs, n_ids=0):
    return UserActivity(user_id=user, city="london", year=2019, n_observations=n_obs, n_identifications=n_ids)


def from_counts(counts):
    return [activity(f"u{i:03d}", c) for i, c in enumerate(counts)]


# --- aggregate_activity ------------------------------------------------------

def test_aggregate_fixture_2019(fixture_dataset):
    rows = aggregate_activity(fixture_dataset, fixture_dataset.window("london", 2019))
    assert {(r.user_id, r.n_observations, r.n_identifications) for r in rows} == {
        ("alice", 3, 1),
        ("bob", 1, 1),
        ("carol", 0, 1),
        ("dave", 0, 1),
    }


def test_aggregate_fixture_2020(fixture_dataset):
    rows = aggregate_activity(fixture_dataset, fixture_dataset.window("london", 2020))
    assert {(r.user_id, r.n_observations, r.n_identifications) for r in rows} == {
        ("bob", 1, 0),
        ("dave", 0, 2),
        ("erin", 2, 0),
    }


def test_aggregate_unknown_window_rejected(fixture_dataset):
    with pytest.raises(DataError):
        aggregate_activity(fixture_dataset, window(city="paris", year=2019))


def test_self_identifier_only_user_has_no_row(fixture_dataset):
    rows = aggregate_activity(fixture_dataset, fixture_dataset.window("london", 2019))
    users = {r.user_id for r in rows}
    assert "erin" not in users  # no 2019 events at all
    # alice's self-identification i4 contributes nothing beyond her observations
    alice = next(r for r in rows if r.user_id == "alice")
    assert alice.n_identifications == 1  # i5 only, not i4


# --- histogram ---------------------------------------------------------------

def test_histogram_single_bin():
    assert observation_histogram(from_counts([1, 1, 1])) == {1: 3}


def test_histogram_mixed_counts():
    assert observation_histogram(from_counts([1, 1, 5])) == {1: 2, 5: 1}


def test_histogram_excludes_pure_identifiers():
    rows = from_counts([2, 3]) + [activity("ident-only", 0, 7)]
    histogram = observation_histogram(rows)
    assert histogram == {2: 1, 3: 1}
    total = sum(count * n for count, n in histogram.items())
    assert total == 5


# --- lorenz -------------------------------------------------------------------

def test_lorenz_equal_counts_is_diagonal():
    curve = lorenz(from_counts([4, 4, 4, 4]))
    assert curve.points == [
        (Fraction(0), Fraction(0)),
        (Fraction(1, 4), Fraction(1, 4)),
        (Fraction(1, 2), Fraction(1, 2)),
        (Fraction(3, 4), Fraction(3, 4)),
        (Fraction(1), Fraction(1)),
    ]


def test_lorenz_bottom_80_percent_holds_40_percent():
    curve = lorenz(from_counts([1, 1, 1, 1, 6]))
    assert curve.value_at(Fraction(4, 5)) == Fraction(2, 5)


def test_lorenz_matches_oracle_on_random_vectors():
    import random

    rng = random.Random(424242)
    for _ in range(40):
        n = rng.randint(1, 60)
        counts = [rng.randint(1, 400) for _ in range(n)]
        rows = from_counts(counts)
        expected = lorenz_oracle([(r.user_id, r.n_observations) for r in rows])
        assert lorenz(rows).points == expected


def test_lorenz_requires_observations():
    with pytest.raises(DataError):
        lorenz([activity("u1", 0, 3)])


def test_lorenz_curve_is_convex_and_monotone():
    import random

    rng = random.Random(7)
    counts = [rng.randint(1, 50) for _ in range(30)]
    points = lorenz(from_counts(counts)).points
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        assert x1 > x0 and y1 >= y0
    slopes = [
        (y1 - y0) / (x1 - x0) for (x0, y0), (x1, y1) in zip(points, points[1:])
    ]
    assert all(s1 >= s0 for s0, s1 in zip(slopes, slopes[1:]))


# --- top_share ------------------------------------------------------------------

def test_top_share_full_fraction_is_one():
    assert top_share(from_counts([3, 9, 1]), 1) == 1


def test_top_share_single_top_user():
    assert top_share(from_counts([1, 1, 1, 1, 6]), Fraction(1, 5)) == Fraction(3, 5)


def test_top_share_agrees_with_oracle():
    import random

    rng = random.Random(11)
    for _ in range(40):
        n = rng.randint(1, 80)
        counts = [(f"u{i:03d}", rng.randint(1, 300)) for i in range(n)]
        rows = [activity(u, c) for u, c in counts]
        fraction = Fraction(rng.randint(1, 100), 100)
        assert top_share(rows, fraction) == top_share_oracle(counts, fraction)


def test_top_share_rejects_bad_fraction():
    with pytest.raises(DataError):
        top_share(from_counts([1]), 0)
    with pytest.raises(DataError):
        top_share(from_counts([1]), Fraction(3, 2))


@given(st.lists(st.integers(min_value=1, max_value=200), min_size=1, max_size=40))
@settings(max_examples=60, deadline=None)
def test_top_share_nondecreasing_in_fraction(counts):
    rows = from_counts(counts)
    n = len(counts)
    shares = [top_share(rows, Fraction(k, n)) for k in range(1, n + 1)]
    assert all(b >= a for a, b in zip(shares, shares[1:]))
    assert shares[-1] == 1


@given(st.lists(st.integers(min_value=1, max_value=200), min_size=2, max_size=40))
@settings(max_examples=60, deadline=None)
def test_lorenz_and_top_share_complementary(counts):
    rows = from_counts(counts)
    n = len(counts)
    curve = lorenz(rows)
    for k in range(1, n):
        assert top_share(rows, Fraction(k, n)) == 1 - curve.value_at(Fraction(n - k, n))


# --- trends and multi-challenge users ----------------------------------------

def test_trends_fixture(fixture_dataset):
    table = per_city_year_trends(fixture_dataset)
    assert [
        (r.city, r.year, r.n_observations, r.n_users, r.n_observers, r.mean_observations_per_user)
        for r in table.rows
    ] == [
        ("london", 2019, 4, 4, 2, Fraction(1)),
        ("london", 2020, 3, 3, 2, Fraction(1)),
    ]


def test_trends_mean_identity_exact(fixture_dataset):
    for row in per_city_year_trends(fixture_dataset).rows:
        assert row.mean_observations_per_user * row.n_users == row.n_observations


def test_multi_challenge_users_fixture(fixture_dataset):
    assert multi_challenge_users(fixture_dataset) == 2  # bob and dave


def test_multi_challenge_users_disjoint(fixture_dataset):
    only_2019 = fixture_dataset
    import dataclasses

    ds = dataclasses.replace(only_2019, challenges=[only_2019.window("london", 2019)])
    assert multi_challenge_users(ds) == 0
