from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cnckit.records import (
    Dataset,
    QualityGrade,
    derive_quality_grade,
    filter_by_challenge,
    merge,
)
from conftest import dataset, ident, obs, ts, window


def test_observation_validates_coordinates():
    with pytest.raises(ValueError):
        obs("o1", "u1", "2019-01-01T00:00", lat=91.0, lon=0.0)
    with pytest.raises(ValueError):
        obs("o1", "u1", "2019-01-01T00:00", lat=0.0, lon=-181.0)
    with pytest.raises(ValueError):
        obs("o1", "u1", "2019-01-01T00:00", lat=10.0)  # lon missing


def test_window_requires_positive_duration():
    with pytest.raises(ValueError):
        window(start="2019-04-29T00:00", end="2019-04-26T00:00")


def test_timestamps_normalized_to_utc():
    record = obs("o1", "u1", "2019-06-01T12:00")
    assert record.observed_at.utcoffset().total_seconds() == 0


# --- merge ----------------------------------------------------------------

def test_merge_with_itself_is_identity():
    frag = dataset(
        observations=[obs("o1", "u1", "2019-04-26T10:00")],
        identifications=[ident("i1", "o1", "u2", "2019-04-26T11:00")],
    )
    merged = merge([frag, frag])
    assert merged.observations == frag.observations
    assert merged.identifications == frag.identifications
    assert merged.orphan_identifications == []


def test_merge_moves_unresolved_identifications_to_orphans():
    frag = dataset(identifications=[ident("i1", "o-missing", "u2", "2019-04-26T11:00")])
    merged = merge([frag])
    assert merged.identifications == {}
    assert [i.identification_id for i in merged.orphan_identifications] == ["i1"]


def test_merge_resolves_orphans_against_other_fragments():
    with_obs = dataset(observations=[obs("o1", "u1", "2019-04-26T10:00")])
    only_ident = dataset(identifications=[ident("i1", "o1", "u2", "2019-04-26T11:00")])
    pre_merged = merge([only_ident])
    assert len(pre_merged.orphan_identifications) == 1
    merged = merge([pre_merged, with_obs])
    assert merged.orphan_identifications == []
    assert set(merged.identifications) == {"i1"}


def test_merge_deduplicates_first_occurrence_wins():
    first = dataset(observations=[obs("o1", "u1", "2019-04-26T10:00", taxon="t1")])
    second = dataset(observations=[obs("o1", "u9", "2019-04-27T10:00", taxon="t2")])
    merged = merge([first, second])
    assert len(merged.observations) == 1
    assert merged.observations["o1"].observer_id == "u1"


@given(st.permutations(range(4)))
@settings(max_examples=24, deadline=None)
def test_merge_order_insensitive_up_to_dedup(order):
    frags = [
        dataset(observations=[obs(f"o{i}", f"u{i}", "2019-04-26T10:00")])
        for i in range(4)
    ]
    merged = merge([frags[i] for i in order])
    assert set(merged.observations) == {f"o{i}" for i in range(4)}


# --- filter_by_challenge ---------------------------------------------------

def _five_obs_dataset():
    return dataset(
        observations=[
            obs("o1", "u1", "2019-04-26T10:00"),
            obs("o2", "u1", "2019-04-27T10:00"),
            obs("o3", "u2", "2019-05-05T10:00"),
            obs("o4", "u2", "2019-03-01T10:00"),
            obs("o5", "u3", "2020-04-26T10:00"),
        ],
        identifications=[
            ident("i1", "o1", "u2", "2019-04-26T12:00"),
            ident("i2", "o2", "u3", "2019-07-01T12:00"),  # late but target retained
            ident("i3", "o3", "u1", "2019-05-05T12:00"),
        ],
        challenges=[window()],
    )


def test_filter_keeps_window_observations_and_their_identifications():
    filtered = filter_by_challenge(_five_obs_dataset(), window())
    assert set(filtered.observations) == {"o1", "o2"}
    assert set(filtered.identifications) == {"i1", "i2"}


def test_filter_window_covering_everything_is_identity():
    ds = _five_obs_dataset()
    wide = window(start="2019-01-01T00:00", end="2020-12-31T00:00")
    filtered = filter_by_challenge(ds, wide)
    assert filtered.observations == ds.observations
    assert filtered.identifications == ds.identifications


def test_filter_empty_window():
    filtered = filter_by_challenge(_five_obs_dataset(), window(start="2018-01-01T00:00", end="2018-01-02T00:00"))
    assert filtered.observations == {}
    assert filtered.identifications == {}


def test_filter_is_idempotent_and_subset():
    ds = _five_obs_dataset()
    once = filter_by_challenge(ds, window())
    twice = filter_by_challenge(once, window())
    assert set(once.observations) <= set(ds.observations)
    assert once.observations == twice.observations
    assert once.identifications == twice.identifications


def test_filter_window_boundaries_are_inclusive():
    ds = dataset(
        observations=[
            obs("a", "u1", "2019-04-26T00:00:00"),
            obs("b", "u1", "2019-04-29T23:59:59"),
            obs("c", "u1", "2019-04-30T00:00:00"),
        ]
    )
    filtered = filter_by_challenge(ds, window())
    assert set(filtered.observations) == {"a", "b"}


def test_filter_with_region_requires_location_inside():
    from cnckit.geometry import Polygon

    square = Polygon(exterior=[(51.0, -1.0), (51.0, 0.0), (52.0, 0.0), (52.0, -1.0), (51.0, -1.0)])
    ds = dataset(
        observations=[
            obs("in", "u1", "2019-04-26T10:00", lat=51.5, lon=-0.5),
            obs("out", "u1", "2019-04-26T10:00", lat=53.0, lon=-0.5),
            obs("nowhere", "u1", "2019-04-26T10:00"),
        ]
    )
    filtered = filter_by_challenge(ds, window(region=square))
    assert set(filtered.observations) == {"in"}


# --- quality grades ---------------------------------------------------------

def test_three_independent_identifiers_reach_research():
    observation = obs("o1", "alice", "2019-04-26T10:00")
    idents = [
        ident("i1", "o1", "bob", "2019-04-26T12:00"),
        ident("i2", "o1", "carol", "2019-04-26T13:00"),
        ident("i3", "o1", "dave", "2019-04-26T14:00"),
    ]
    assert derive_quality_grade(observation, idents) is QualityGrade.RESEARCH


def test_no_identifications_is_casual():
    assert derive_quality_grade(obs("o1", "alice", "2019-04-26T10:00"), []) is QualityGrade.CASUAL


def test_observer_self_identifications_do_not_count():
    observation = obs("o1", "alice", "2019-04-26T10:00")
    idents = [ident(f"i{n}", "o1", "alice", "2019-04-26T12:00") for n in range(3)]
    assert derive_quality_grade(observation, idents) is QualityGrade.CASUAL


def test_identification_for_other_observation_rejected():
    observation = obs("o1", "alice", "2019-04-26T10:00")
    with pytest.raises(ValueError):
        derive_quality_grade(observation, [ident("i1", "o2", "bob", "2019-04-26T12:00")])


def test_quality_grade_exhaustive_over_identifier_multisets():
    """Every identifier multiset up to size 5 graded by independent count."""
    observation = obs("o1", "observer", "2019-04-26T10:00")
    users = ["observer", "u1", "u2", "u3", "u4"]
    for size in range(6):
        for combo in itertools.combinations_with_replacement(users, size):
            idents = [
                ident(f"i{n}", "o1", user, "2019-04-26T12:00")
                for n, user in enumerate(combo)
            ]
            independent = len({u for u in combo if u != "observer"})
            expected = (
                QualityGrade.RESEARCH
                if independent > 2
                else QualityGrade.NEEDS_ID
                if independent >= 1
                else QualityGrade.CASUAL
            )
            assert derive_quality_grade(observation, idents) is expected


def test_grade_monotone_under_new_independent_identifier():
    observation = obs("o1", "alice", "2019-04-26T10:00")
    rank = {QualityGrade.CASUAL: 0, QualityGrade.NEEDS_ID: 1, QualityGrade.RESEARCH: 2}
    idents = []
    previous = rank[derive_quality_grade(observation, idents)]
    for n in range(5):
        idents.append(ident(f"i{n}", "o1", f"user{n}", "2019-04-26T12:00"))
        current = rank[derive_quality_grade(observation, idents)]
        assert current >= previous
        previous = current


# --- dataset invariants ------------------------------------------------------

def test_orphans_plus_resolvable_equals_total(fixture_dataset):
    assert len(fixture_dataset.identifications) + len(fixture_dataset.orphan_identifications) == 9


def test_fixture_validates_cleanly(fixture_dataset):
    assert fixture_dataset.validate() == []


def test_validate_reports_dangling_reference():
    ds = Dataset(
        observations={},
        identifications={"i1": ident("i1", "o-missing", "u1", "2019-04-26T10:00")},
    )
    assert len(ds.validate()) == 1
