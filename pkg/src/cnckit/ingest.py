"""Paged HTTP client shaped like the iNaturalist observations API.

Fetches pages until a short page, throttles to a requests-per-minute cap,
retries transient failures (429/5xx/timeouts) with exponential backoff
(base 1 s, factor 2, no jitter so tests are deterministic), honors
Retry-After, and keeps a content-addressed on-disk response cache so a
query can later be replayed byte-identically with zero network requests.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import requests

from cnckit.errors import IngestError
from cnckit.io import format_timestamp, parse_timestamp
from cnckit.records import Dataset, IdentificationRecord, ObservationRecord

BACKOFF_BASE_S = 1.0
BACKOFF_FACTOR = 2.0
TRANSIENT_STATUS = frozenset({429, 500, 502, 503, 504})


@dataclass(frozen=True)
class IngestQuery:
    endpoint_base: str
    date_from: datetime
    date_to: datetime
    bbox: tuple[float, float, float, float] | None = None  # min_lat, min_lon, max_lat, max_lon
    place: str | None = None
    page_size: int = 200

    def __post_init__(self):
        if self.page_size < 1:
            raise IngestError("page_size must be >= 1")
        if self.date_to < self.date_from:
            raise IngestError("date_to must not precede date_from")

    def params(self, page: int) -> dict[str, str]:
        params = {
            "d1": format_timestamp(self.date_from),
            "d2": format_timestamp(self.date_to),
            "per_page": str(self.page_size),
            "page": str(page),
        }
        if self.bbox is not None:
            swlat, swlng, nelat, nelng = self.bbox
            params.update(
                swlat=repr(swlat), swlng=repr(swlng), nelat=repr(nelat), nelng=repr(nelng)
            )
        if self.place is not None:
            params["place_id"] = self.place
        return params


@dataclass
class FetchLimits:
    max_requests_per_minute: int = 60
    max_retries: int = 3


class ResponseCache:
    """One file per response, named by the canonical request hash."""

    def __init__(self, directory: str | Path, max_age_s: float | None = None):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.max_age_s = max_age_s

    @staticmethod
    def key(endpoint: str, params: dict[str, str]) -> str:
        canonical = json.dumps([endpoint, sorted(params.items())], separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> bytes | None:
        path = self._path(key)
        if not path.exists():
            return None
        if self.max_age_s is not None:
            age = time.time() - path.stat().st_mtime
            if age > self.max_age_s:
                return None
        return path.read_bytes()

    def put(self, key: str, body: bytes) -> None:
        self._path(key).write_bytes(body)


class RateLimiter:
    """Spaces request starts so any 60 s window holds at most the cap."""

    def __init__(self, max_per_minute: int, clock=time.monotonic, sleep=time.sleep):
        if max_per_minute < 1:
            raise IngestError("max_requests_per_minute must be >= 1")
        self.interval = 60.0 / max_per_minute
        self._clock = clock
        self._sleep = sleep
        self._last: float | None = None

    def wait(self) -> None:
        now = self._clock()
        if self._last is not None:
            remaining = self._last + self.interval - now
            if remaining > 0:
                self._sleep(remaining)
                now = self._clock()
        self._last = now


@dataclass
class IngestResult:
    fragment: Dataset
    pages: int = 0
    requests_made: int = 0
    retries: int = 0
    cache_hits: int = 0


def _user_reference(record: dict) -> str | None:
    user = record.get("user")
    if isinstance(user, dict):
        ref = user.get("login") or user.get("id")
        return str(ref) if ref is not None else None
    if user is not None:
        return str(user)
    ref = record.get("user_id")
    return str(ref) if ref is not None else None


def _coords(record: dict) -> tuple[float | None, float | None]:
    geojson = record.get("geojson")
    if isinstance(geojson, dict) and geojson.get("coordinates"):
        lon, lat = geojson["coordinates"][:2]
        return float(lat), float(lon)
    location = record.get("location")
    if isinstance(location, str) and location:
        lat_text, lon_text = location.split(",", 1)
        return float(lat_text), float(lon_text)
    if record.get("latitude") is not None and record.get("longitude") is not None:
        return float(record["latitude"]), float(record["longitude"])
    return None, None


def _taxon(record: dict) -> str | None:
    taxon = record.get("taxon")
    if isinstance(taxon, dict) and taxon.get("id") is not None:
        return str(taxon["id"])
    if record.get("taxon_id") is not None:
        return str(record["taxon_id"])
    return None


def normalize(api_record: dict) -> list[ObservationRecord | IdentificationRecord]:
    """Map one API response object onto core records.

    An observation payload with nested identifications yields one
    observation plus one record per identification. Missing optional
    fields stay absent; a missing id or user reference is an error.
    """
    obs_id = api_record.get("id")
    user = _user_reference(api_record)
    if obs_id is None:
        raise IngestError("API record is missing an id")
    if user is None:
        raise IngestError(f"API record {obs_id} is missing a user reference")
    observed = api_record.get("time_observed_at") or api_record.get("observed_at")
    if not observed:
        raise IngestError(f"API record {obs_id} has no observation timestamp")
    lat, lon = _coords(api_record)
    try:
        observation = ObservationRecord(
            observation_id=str(obs_id),
            observer_id=user,
            observed_at=parse_timestamp(observed),
            submitted_at=(
                parse_timestamp(api_record["created_at"])
                if api_record.get("created_at")
                else None
            ),
            latitude=lat,
            longitude=lon,
            taxon_id=_taxon(api_record),
            initial_guess_taxon=api_record.get("species_guess") or None,
            quality_grade=None,
        )
    except ValueError as exc:
        raise IngestError(f"API record {obs_id}: {exc}") from exc
    records: list[ObservationRecord | IdentificationRecord] = [observation]
    for ident in api_record.get("identifications") or []:
        ident_id = ident.get("id")
        ident_user = _user_reference(ident)
        if ident_id is None or ident_user is None:
            raise IngestError(
                f"identification on record {obs_id} is missing an id or user"
            )
        created = ident.get("created_at")
        if not created:
            raise IngestError(f"identification {ident_id} has no timestamp")
        try:
            records.append(
                IdentificationRecord(
                    identification_id=str(ident_id),
                    observation_id=str(obs_id),
                    identifier_id=ident_user,
                    created_at=parse_timestamp(created),
                    taxon_id=_taxon(ident) or "",
                    agrees_with_community=ident.get("agrees"),
                )
            )
        except ValueError as exc:
            raise IngestError(f"identification {ident_id}: {exc}") from exc
    return records


class ApiClient:
    """Serialized fetching against one endpoint, with cache and throttle."""

    def __init__(
        self,
        cache: ResponseCache | None = None,
        offline: bool = False,
        session: requests.Session | None = None,
        clock=time.monotonic,
        sleep=time.sleep,
        timeout_s: float = 30.0,
    ):
        self.cache = cache
        self.offline = offline
        self.session = session or requests.Session()
        self._clock = clock
        self._sleep = sleep
        self.timeout_s = timeout_s

    def _fetch_page(
        self, query: IngestQuery, page: int, limits: FetchLimits,
        limiter: RateLimiter, result: IngestResult,
    ) -> bytes:
        params = query.params(page)
        key = ResponseCache.key(query.endpoint_base, params)
        if self.cache is not None:
            body = self.cache.get(key)
            if body is not None:
                result.cache_hits += 1
                return body
        if self.offline:
            raise IngestError(
                f"offline mode and page {page} is not cached (key {key[:12]}...)"
            )
        attempt = 0
        while True:
            limiter.wait()
            result.requests_made += 1
            retry_after = None
            try:
                response = self.session.get(
                    query.endpoint_base, params=params, timeout=self.timeout_s
                )
                status = response.status_code
                if status == 200:
                    body = response.content
                    if self.cache is not None:
                        self.cache.put(key, body)
                    return body
                retry_after = response.headers.get("Retry-After")
                if status not in TRANSIENT_STATUS:
                    raise IngestError(f"HTTP {status} fetching page {page}")
            except requests.RequestException as exc:
                status = f"transport error: {exc}"
            attempt += 1
            if attempt > limits.max_retries:
                raise IngestError(
                    f"retry budget ({limits.max_retries}) exhausted on page {page}: {status}"
                )
            result.retries += 1
            delay = BACKOFF_BASE_S * BACKOFF_FACTOR ** (attempt - 1)
            if retry_after is not None:
                try:
                    delay = max(delay, float(retry_after))
                except ValueError:
                    pass
            self._sleep(delay)

    def fetch_all(self, query: IngestQuery, limits: FetchLimits | None = None) -> IngestResult:
        """Page through the query until a page returns fewer than page_size."""
        limits = limits or FetchLimits()
        limiter = RateLimiter(
            limits.max_requests_per_minute, clock=self._clock, sleep=self._sleep
        )
        fragment = Dataset()
        result = IngestResult(fragment=fragment)
        page = 1
        while True:
            body = self._fetch_page(query, page, limits, limiter, result)
            result.pages += 1
            try:
                payload = json.loads(body)
                results = payload["results"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise IngestError(f"malformed response body on page {page}: {exc}") from exc
            if not isinstance(results, list):
                raise IngestError(f"malformed response body on page {page}: "
                                  f"'results' is not a list")
            for api_record in results:
                for record in normalize(api_record):
                    if isinstance(record, ObservationRecord):
                        fragment.observations.setdefault(record.observation_id, record)
                    else:
                        fragment.identifications.setdefault(record.identification_id, record)
            if len(results) < query.page_size:
                return result
            page += 1
