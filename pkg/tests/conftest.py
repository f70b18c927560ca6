from __future__ import annotations

from datetime import datetime, timezone
from pathlib import Path

import pytest

from cnckit import kernels
from cnckit.records import (
    ChallengeWindow,
    Dataset,
    IdentificationRecord,
    ObservationRecord,
)

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(params=kernels.available_backends())
def kernel_backend(request):
    """Run a test once per available kernel backend."""
    with kernels.use_backend(request.param):
        yield request.param


def ts(text: str) -> datetime:
    return datetime.fromisoformat(text).replace(tzinfo=timezone.utc)


def obs(oid, user, at, lat=None, lon=None, taxon=None, **kwargs):
    return ObservationRecord(
        observation_id=oid,
        observer_id=user,
        observed_at=ts(at),
        latitude=lat,
        longitude=lon,
        taxon_id=taxon,
        **kwargs,
    )


def ident(iid, oid, user, at, taxon="t1", **kwargs):
    return IdentificationRecord(
        identification_id=iid,
        observation_id=oid,
        identifier_id=user,
        created_at=ts(at),
        taxon_id=taxon,
        **kwargs,
    )


def window(city="london", year=2019, start="2019-04-26T00:00", end="2019-04-29T23:59:59", region=None):
    return ChallengeWindow(city=city, year=year, start=ts(start), end=ts(end), region=region)


def dataset(observations=(), identifications=(), challenges=()):
    return Dataset(
        observations={o.observation_id: o for o in observations},
        identifications={i.identification_id: i for i in identifications},
        challenges=list(challenges),
    )


@pytest.fixture
def fixture_dataset():
    """The committed JSONL fixture, loaded with its windows file."""
    from cnckit.io import load_challenge_windows, load_dataset

    result = load_dataset(
        [DATA_DIR / "fixture.jsonl"],
        windows=load_challenge_windows(DATA_DIR / "fixture_windows.txt"),
    )
    assert result.skipped == 0
    return result.dataset
