"""Reference values from the full 2017-2020 three-city CNC corpus.

These are sanity targets for replication runs on the complete multi-year
pull (London, Los Angeles, San Francisco plus a curated greenspace layer).
They are NOT reproducible from desk-scale fixtures; the report command
only compares against them when explicitly asked to.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class ReferenceTarget:
    name: str
    expected: float
    band: float  # acceptable absolute deviation for a replication run
    description: str


REFERENCE_TARGETS: list[ReferenceTarget] = [
    ReferenceTarget(
        "total_observations", 244_484, 0,
        "observations across all 11 challenges",
    ),
    ReferenceTarget(
        "distinct_users", 11_300, 0,
        "distinct users across all challenges",
    ),
    ReferenceTarget(
        "multi_challenge_users", 2_142, 0,
        "users active in more than one challenge",
    ),
    ReferenceTarget(
        "histogram_share_1", 0.346, 0.02,
        "share of participants with exactly one observation",
    ),
    ReferenceTarget(
        "histogram_share_1_to_5", 0.627, 0.02,
        "share of participants with one to five observations",
    ),
    ReferenceTarget(
        "top_share_0.50", 0.97, 0.02,
        "observation share of the top 50% of observers",
    ),
    ReferenceTarget(
        "top_share_0.20", 0.80, 0.03,
        "observation share of the top 20% of observers",
    ),
    ReferenceTarget(
        "top_share_0.10", 0.77, 0.02,
        "observation share of the top 10% of observers",
    ),
    ReferenceTarget(
        "top_share_0.01", 0.41, 0.02,
        "observation share of the top 1% of observers",
    ),
    ReferenceTarget(
        "class_share_low_activity", 0.58, 0.03,
        "low-activity share of classified users",
    ),
    ReferenceTarget(
        "class_share_observer", 0.25, 0.03,
        "observer share of classified users",
    ),
    ReferenceTarget(
        "class_share_identifier", 0.12, 0.03,
        "identifier share of classified users",
    ),
    ReferenceTarget(
        "class_share_high_activity", 0.05, 0.03,
        "high-activity share of classified users",
    ),
    ReferenceTarget(
        "next_year_return_san_francisco_2019", 0.175, 0.025,
        "fraction of 2019 San Francisco joiners active in the 2020 window",
    ),
    ReferenceTarget(
        "greenspace_fraction_london_2020", 0.25, 0.05,
        "greenspace share of located London 2020 observations",
    ),
]


def compare(computed: dict[str, float]) -> list[tuple[ReferenceTarget, float | None, bool | None]]:
    """Pair each target with a computed value when one is available.

    Returns (target, value, within_band) rows; value None means the current
    run did not produce that statistic.
    """
    rows = []
    for target in REFERENCE_TARGETS:
        value = computed.get(target.name)
        if value is None:
            rows.append((target, None, None))
        else:
            rows.append((target, value, abs(value - target.expected) <= target.band))
    return rows
