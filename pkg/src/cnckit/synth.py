"""Deterministic synthetic-community generator with planted ground truth.

Every stochastic concern (classes, counts, event times, locations, wiring,
taxa) draws from its own stream derived from the master seed, so adding or
reordering one concern never perturbs the others. The emitted dataset
satisfies the core record invariants by construction, a user's first event
is exactly their planted join instant, and the generator's interaction
tally equals what build_graph recovers from the records.

Retention ground truth is exact when the challenge window is shorter than
30 days (every in-window event then falls in relative month 0, and months
1..dropout_month receive exactly one filler observation each).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone

import numpy as np

from cnckit.classify import UserClass
from cnckit.errors import DataError
from cnckit.geometry import Polygon
from cnckit.records import (
    ChallengeWindow,
    Dataset,
    IdentificationRecord,
    ObservationRecord,
)

MONTH = timedelta(days=30)

# mixture index order: (low activity, observer, identifier, high activity)
CLASS_ORDER = (
    UserClass.LOW_ACTIVITY,
    UserClass.OBSERVER,
    UserClass.IDENTIFIER,
    UserClass.HIGH_ACTIVITY,
)


@dataclass(frozen=True)
class ClassLaw:
    """Discretized log-normal law for one class's per-challenge counts."""

    median_obs: float
    median_ids: float
    sigma: float = 0.3


DEFAULT_LAWS: dict[UserClass, ClassLaw] = {
    UserClass.LOW_ACTIVITY: ClassLaw(median_obs=2.0, median_ids=1.0),
    UserClass.OBSERVER: ClassLaw(median_obs=40.0, median_ids=1.0),
    UserClass.IDENTIFIER: ClassLaw(median_obs=2.0, median_ids=40.0),
    UserClass.HIGH_ACTIVITY: ClassLaw(median_obs=100.0, median_ids=100.0),
}


@dataclass
class SynthParams:
    seed: int
    n_users: int
    challenge_window: ChallengeWindow
    bbox: tuple[float, float, float, float]  # min_lat, min_lon, max_lat, max_lon
    class_mixture: tuple[float, float, float, float] = (0.58, 0.25, 0.12, 0.05)
    activity_laws: dict[UserClass, ClassLaw] = field(
        default_factory=lambda: dict(DEFAULT_LAWS)
    )
    monthly_survival: float = 0.7
    max_months: int = 12
    regular_fraction: float = 0.0  # joiners placed in-year but outside the window
    burst_days: float = 3.0  # length of the join-time activity burst
    greenspace_weight: float = 0.0
    greenspace_polygons: list[Polygon] = field(default_factory=list)
    background_radius_deg: float | None = None  # cluster background points
    unlocated_fraction: float = 0.0
    hub_bias: float = 4.0  # extra pull of high-activity users' observations
    n_taxa: int = 40

    def validate(self) -> None:
        if self.n_users < 0:
            raise DataError("n_users must be >= 0")
        if abs(sum(self.class_mixture) - 1.0) > 1e-12:
            raise DataError("class_mixture must sum to 1 within 1e-12")
        if any(f < 0 for f in self.class_mixture):
            raise DataError("class_mixture fractions must be nonnegative")
        if not 0.0 < self.monthly_survival <= 1.0:
            raise DataError("monthly_survival must lie in (0, 1]")
        if not 0.0 <= self.regular_fraction <= 1.0:
            raise DataError("regular_fraction must lie in [0, 1]")
        if self.greenspace_weight > 0 and not self.greenspace_polygons:
            raise DataError("greenspace_weight > 0 needs greenspace_polygons")
        if self.burst_days <= 0 or self.burst_days > 29:
            raise DataError("burst_days must lie in (0, 29]")


@dataclass(frozen=True)
class UserTruth:
    user_class: UserClass
    joined_at: datetime
    dropout_month: int  # active in relative months 0..dropout_month
    regime: str  # "greenspace" or "background"
    is_regular_joiner: bool
    n_obs_window: int
    n_ids_window: int


@dataclass
class GroundTruth:
    users: dict[str, UserTruth]
    edge_tally: dict[tuple[str, str], int]
    class_counts: dict[UserClass, int]
    n_window_observations: int
    n_window_identifications: int


@dataclass
class _PendingObs:
    seq: int
    at: datetime
    user: str
    in_window: bool


@dataclass
class _PendingIdent:
    seq: int
    at: datetime
    user: str


def standard_params(seed: int = 777, n_users: int = 10_000) -> SynthParams:
    """The standard benchmark scenario: one 4-day challenge, default laws."""
    window = ChallengeWindow(
        city="riverton",
        year=2023,
        start=datetime(2023, 4, 28, tzinfo=timezone.utc),
        end=datetime(2023, 5, 1, 23, 59, 59, tzinfo=timezone.utc),
    )
    return SynthParams(
        seed=seed,
        n_users=n_users,
        challenge_window=window,
        bbox=(45.40, -122.80, 45.70, -122.40),
        monthly_survival=0.6,
    )


def _draw_counts(params: SynthParams, classes: list[UserClass], rng) -> tuple[np.ndarray, np.ndarray]:
    n = len(classes)
    med_obs = np.array([params.activity_laws[c].median_obs for c in classes])
    med_ids = np.array([params.activity_laws[c].median_ids for c in classes])
    sigma = np.array([params.activity_laws[c].sigma for c in classes])
    z = rng.normal(size=(n, 2))
    n_obs = np.rint(med_obs * np.exp(sigma * z[:, 0])).astype(np.int64)
    n_ids = np.rint(med_ids * np.exp(sigma * z[:, 1])).astype(np.int64)
    np.clip(n_obs, 0, None, out=n_obs)
    np.clip(n_ids, 0, None, out=n_ids)
    silent = (n_obs == 0) & (n_ids == 0)
    n_obs[silent] = 1  # every emitted user has at least one event
    return n_obs, n_ids


def _draw_join_times(params: SynthParams, rng) -> tuple[list[datetime], np.ndarray]:
    window = params.challenge_window
    n = params.n_users
    is_regular = rng.random(n) < params.regular_fraction
    duration = (window.end - window.start).total_seconds()
    year_start = datetime(window.year, 1, 1, tzinfo=timezone.utc)
    year_seconds = (datetime(window.year + 1, 1, 1, tzinfo=timezone.utc) - year_start).total_seconds()
    joins: list[datetime] = []
    for i in range(n):
        if is_regular[i]:
            at = year_start + timedelta(seconds=float(rng.random()) * year_seconds)
            while window.contains_time(at):
                at = year_start + timedelta(seconds=float(rng.random()) * year_seconds)
        else:
            at = window.start + timedelta(seconds=float(rng.random()) * duration * 0.999)
        joins.append(at.replace(microsecond=0))
    return joins, is_regular


def _draw_dropout_months(params: SynthParams, rng) -> np.ndarray:
    n = params.n_users
    s = params.monthly_survival
    if s >= 1.0:
        return np.full(n, params.max_months, dtype=np.int64)
    u = np.maximum(rng.random(n), 1e-300)
    months = np.floor(np.log(u) / math.log(s)).astype(np.int64)
    return np.minimum(months, params.max_months)


class _LocationSampler:
    def __init__(self, params: SynthParams, rng):
        self.params = params
        self.rng = rng

    def regime(self) -> str:
        if self.params.greenspace_weight > 0 and self.rng.random() < self.params.greenspace_weight:
            return "greenspace"
        return "background"

    def sample(self, regime: str) -> tuple[float, float] | None:
        if self.params.unlocated_fraction > 0 and self.rng.random() < self.params.unlocated_fraction:
            return None
        if regime == "greenspace":
            polygons = self.params.greenspace_polygons
            poly = polygons[int(self.rng.integers(len(polygons)))]
            lat0, lon0, lat1, lon1 = poly.bbox
            for _ in range(200):
                lat = lat0 + float(self.rng.random()) * (lat1 - lat0)
                lon = lon0 + float(self.rng.random()) * (lon1 - lon0)
                if poly.contains(lat, lon):
                    return (lat, lon)
            ext = poly.exterior[:-1]
            return (float(ext[:, 0].mean()), float(ext[:, 1].mean()))
        lat0, lon0, lat1, lon1 = self.params.bbox
        if self.params.background_radius_deg is not None:
            r = self.params.background_radius_deg
            clat, clon = (lat0 + lat1) / 2.0, (lon0 + lon1) / 2.0
            lat = clat + (float(self.rng.random()) * 2.0 - 1.0) * r
            lon = clon + (float(self.rng.random()) * 2.0 - 1.0) * r
            return (max(lat0, min(lat1, lat)), max(lon0, min(lon1, lon)))
        lat = lat0 + float(self.rng.random()) * (lat1 - lat0)
        lon = lon0 + float(self.rng.random()) * (lon1 - lon0)
        return (lat, lon)


def generate(params: SynthParams) -> tuple[Dataset, GroundTruth]:
    """Emit a synthetic dataset plus the ground truth it was built from."""
    params.validate()
    window = params.challenge_window
    root = np.random.SeedSequence(params.seed)
    names = ("classes", "counts", "times", "space", "wiring", "taxa")
    rngs = {name: np.random.default_rng(s) for name, s in zip(names, root.spawn(len(names)))}

    n = params.n_users
    user_ids = [f"u{i:05d}" for i in range(n)]
    class_idx = rngs["classes"].choice(4, size=n, p=list(params.class_mixture))
    classes = [CLASS_ORDER[i] for i in class_idx]
    n_obs, n_ids = _draw_counts(params, classes, rngs["counts"])
    if int(n_ids.sum()) > 0 and int(n_obs.sum()) == 0:
        raise DataError("identifications demanded but no observations to identify")
    joins, is_regular = _draw_join_times(params, rngs["times"])
    dropout = _draw_dropout_months(params, rngs["times"])
    sampler = _LocationSampler(params, rngs["space"])
    regimes = [sampler.regime() for _ in range(n)]

    pending_obs: list[_PendingObs] = []
    pending_idents: list[_PendingIdent] = []
    seq = 0
    times_rng = rngs["times"]
    for i, user in enumerate(user_ids):
        joined = joins[i]
        burst_end = joined + timedelta(days=params.burst_days)
        if not is_regular[i]:
            burst_end = min(burst_end, window.end)
        span = max((burst_end - joined).total_seconds(), 0.0)

        obs_count, ident_count = int(n_obs[i]), int(n_ids[i])
        event_times = [joined]
        extra = obs_count + ident_count - 1
        if extra > 0:
            offsets = np.sort(times_rng.random(extra)) * span
            event_times += [joined + timedelta(seconds=float(o)) for o in offsets]
        # the join event is an observation whenever the user has any
        if obs_count > 0:
            obs_times = [event_times[0]] + event_times[1 : obs_count]
            ident_times = event_times[obs_count:]
        else:
            obs_times = []
            ident_times = event_times
        for at in obs_times:
            pending_obs.append(_PendingObs(seq=seq, at=at, user=user, in_window=True))
            seq += 1
        for at in ident_times:
            pending_idents.append(_PendingIdent(seq=seq, at=at, user=user))
            seq += 1
        # one filler observation per post-join active month
        for m in range(1, int(dropout[i]) + 1):
            offset = timedelta(seconds=float(times_rng.random()) * MONTH.total_seconds() * 0.999)
            pending_obs.append(
                _PendingObs(seq=seq, at=joined + m * MONTH + offset, user=user, in_window=False)
            )
            seq += 1

    # identification wiring against the in-window observation pool
    pending_obs.sort(key=lambda o: (o.at, o.seq))
    pending_idents.sort(key=lambda e: (e.at, e.seq))
    pool = [o for o in pending_obs if window.contains_time(o.at)]
    pool_times = np.array([o.at.timestamp() for o in pool])
    user_class = dict(zip(user_ids, classes))
    pool_weights = np.array(
        [params.hub_bias if user_class[o.user] == UserClass.HIGH_ACTIVITY else 1.0 for o in pool]
    )
    cum_weights = np.cumsum(pool_weights) if len(pool) else np.array([])

    wiring_rng = rngs["wiring"]
    edge_tally: dict[tuple[str, str], int] = {}
    wired: list[tuple[_PendingIdent, _PendingObs]] = []
    converted: list[_PendingObs] = []
    obs_delta: dict[str, int] = {}
    ids_delta: dict[str, int] = {}
    for event in pending_idents:
        pos = int(np.searchsorted(pool_times, event.at.timestamp(), side="left"))
        target = None
        if pos > 0:
            total = float(cum_weights[pos - 1])
            for _ in range(30):
                draw = float(wiring_rng.random()) * total
                idx = int(np.searchsorted(cum_weights, draw, side="right"))
                idx = min(idx, pos - 1)
                if pool[idx].user != event.user:
                    target = pool[idx]
                    break
        if target is None:
            converted.append(
                _PendingObs(seq=event.seq, at=event.at, user=event.user, in_window=True)
            )
            obs_delta[event.user] = obs_delta.get(event.user, 0) + 1
            ids_delta[event.user] = ids_delta.get(event.user, 0) - 1
            continue
        wired.append((event, target))
        a, b = (event.user, target.user) if event.user < target.user else (target.user, event.user)
        edge_tally[(a, b)] = edge_tally.get((a, b), 0) + 1

    pending_obs.extend(converted)
    pending_obs.sort(key=lambda o: (o.at, o.seq))

    # materialize records in canonical order; locations are drawn in that
    # same order so a given seed always produces the same coordinates
    taxa_rng = rngs["taxa"]
    observations: dict[str, ObservationRecord] = {}
    obs_record_by_seq: dict[int, ObservationRecord] = {}
    for number, pending in enumerate(pending_obs):
        user_index = int(pending.user[1:])
        location = sampler.sample(regimes[user_index])
        taxon = f"t{int(taxa_rng.integers(params.n_taxa)):03d}"
        record = ObservationRecord(
            observation_id=f"o{number:06d}",
            observer_id=pending.user,
            observed_at=pending.at,
            latitude=None if location is None else round(location[0], 6),
            longitude=None if location is None else round(location[1], 6),
            taxon_id=taxon,
        )
        observations[record.observation_id] = record
        obs_record_by_seq[pending.seq] = record

    identifications: dict[str, IdentificationRecord] = {}
    wired.sort(key=lambda pair: (pair[0].at, pair[0].seq))
    for number, (event, target) in enumerate(wired):
        target_record = obs_record_by_seq[target.seq]
        record = IdentificationRecord(
            identification_id=f"i{number:06d}",
            observation_id=target_record.observation_id,
            identifier_id=event.user,
            created_at=event.at,
            taxon_id=target_record.taxon_id,
        )
        identifications[record.identification_id] = record

    dataset = Dataset(
        observations=observations,
        identifications=identifications,
        challenges=[replace(window)],
    )

    truths: dict[str, UserTruth] = {}
    class_counts = {cls: 0 for cls in CLASS_ORDER}
    for i, user in enumerate(user_ids):
        cls = classes[i]
        class_counts[cls] += 1
        truths[user] = UserTruth(
            user_class=cls,
            joined_at=joins[i],
            dropout_month=int(dropout[i]),
            regime=regimes[i],
            is_regular_joiner=bool(is_regular[i]),
            n_obs_window=int(n_obs[i]) + obs_delta.get(user, 0),
            n_ids_window=int(n_ids[i]) + ids_delta.get(user, 0),
        )
    truth = GroundTruth(
        users=truths,
        edge_tally=edge_tally,
        class_counts=class_counts,
        n_window_observations=sum(
            1 for o in pending_obs if window.contains_time(o.at)
        ),
        n_window_identifications=len(wired),
    )
    return dataset, truth
