"""City registry, location-string resolution and local-time conversion."""
from __future__ import annotations

import csv
import json
import logging
import os
import re
import string
import threading
import time
import unicodedata
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone
from typing import Dict, Iterable, List, NamedTuple, Optional, Protocol

LOG = logging.getLogger(__name__)

ACCEPTED_PLACE_TYPES = frozenset(
    {"city", "county", "village", "suburb", "hamlet", "state", "country"}
)
NEGATIVE_TTL_SECONDS = 30 * 24 * 3600
REGISTRY_HEADER = ["city_id", "display_name", "country", "tz", "fallback_offset_minutes", "aliases"]
CACHE_HEADER = ["normalized_query", "city_id_or_NONE", "expires_at_epoch"]

try:
    from zoneinfo import ZoneInfo, ZoneInfoNotFoundError, available_timezones

    _TZ_AVAILABLE = bool(available_timezones())
except ImportError:  # pragma: no cover
    _TZ_AVAILABLE = False


class RegistryError(ValueError):
    pass


class GazetteerError(RuntimeError):
    """Transport-level failure talking to a gazetteer; never cached."""


@dataclass(frozen=True)
class CityEntry:
    city_id: str
    display_name: str
    country: str
    tz: str
    fallback_offset_minutes: int = 0
    aliases: tuple = ()

    def zone(self):
        if not _TZ_AVAILABLE:
            return None
        return _zone(self.tz)


_ZONES: Dict[str, object] = {}


def _zone(name: str):
    z = _ZONES.get(name)
    if z is None:
        z = _ZONES[name] = ZoneInfo(name)
    return z


class CityRegistry:
    """Immutable set of study cities with a global alias table."""

    def __init__(self, entries: Iterable[CityEntry]):
        self.entries: List[CityEntry] = list(entries)
        self._by_id: Dict[str, CityEntry] = {}
        self.alias_map: Dict[str, str] = {}
        for e in self.entries:
            if e.city_id in self._by_id:
                raise RegistryError(f"duplicate city_id {e.city_id!r}")
            self._by_id[e.city_id] = e
            for alias in e.aliases:
                owner = self.alias_map.get(alias)
                if owner is not None and owner != e.city_id:
                    raise RegistryError(
                        f"alias {alias!r} claimed by both {owner!r} and {e.city_id!r}"
                    )
                self.alias_map[alias] = e.city_id

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, city_id: str) -> bool:
        return city_id in self._by_id

    def __getitem__(self, city_id: str) -> CityEntry:
        return self._by_id[city_id]

    def country_of(self, city_id: str) -> str:
        try:
            return self._by_id[city_id].country
        except KeyError:
            raise KeyError(f"city {city_id!r} not in registry") from None

    def lookup_alias(self, normalized: str) -> Optional[str]:
        return self.alias_map.get(normalized)


_PUNCT = string.punctuation + "‘’“”«»–—…"
_WS = re.compile(r"\s+")


def normalize_location(raw: str) -> str:
    """Case-fold, trim, collapse whitespace, strip surrounding punctuation."""
    s = unicodedata.normalize("NFKC", raw).casefold()
    s = _WS.sub(" ", s).strip()
    return s.strip(_PUNCT + " ")


def _check_tz(name: str, row: int) -> None:
    if not _TZ_AVAILABLE:
        return
    try:
        _zone(name)
    except (ZoneInfoNotFoundError, ValueError) as exc:
        raise RegistryError(f"row {row}: unknown timezone {name!r}") from exc


def load_city_registry(path) -> CityRegistry:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(REGISTRY_HEADER) - set(reader.fieldnames or ())
        if missing:
            raise RegistryError(f"{path}: missing columns {sorted(missing)}")
        entries = []
        for row_no, row in enumerate(reader, 2):
            _check_tz(row["tz"], row_no)
            try:
                offset = int(row["fallback_offset_minutes"] or 0)
            except ValueError:
                raise RegistryError(f"row {row_no}: bad fallback_offset_minutes") from None
            aliases = tuple(
                a for a in (normalize_location(x) for x in row["aliases"].split(";")) if a
            )
            entries.append(
                CityEntry(
                    city_id=row["city_id"].strip(),
                    display_name=row["display_name"].strip(),
                    country=row["country"].strip().upper(),
                    tz=row["tz"].strip(),
                    fallback_offset_minutes=offset,
                    aliases=aliases,
                )
            )
    return CityRegistry(entries)


def write_city_registry(reg: CityRegistry, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGISTRY_HEADER)
        for e in reg:
            w.writerow([e.city_id, e.display_name, e.country, e.tz,
                        e.fallback_offset_minutes, ";".join(e.aliases)])


# -- gazetteer --------------------------------------------------------------

@dataclass(frozen=True)
class GazetteerCandidate:
    resolved_name: str
    type_tag: str
    confidence: float = 0.0
    raw: str = ""

    @classmethod
    def from_json(cls, obj: dict) -> "GazetteerCandidate":
        return cls(
            resolved_name=str(obj.get("display_name", "")),
            type_tag=str(obj.get("type", "")).lower(),
            confidence=float(obj.get("importance", 0.0) or 0.0),
            raw=json.dumps(obj, sort_keys=True, ensure_ascii=False),
        )


def filter_gazetteer_candidates(
    cands: List[GazetteerCandidate],
) -> Optional[GazetteerCandidate]:
    """First candidate (in response order) whose type is a populated place."""
    for c in cands:
        if c.type_tag in ACCEPTED_PLACE_TYPES:
            return c
    return None


class GazetteerSource(Protocol):
    def query(self, raw: str) -> List[GazetteerCandidate]:
        ...


class RecordedGazetteer:
    """Replays stored responses keyed by normalized query; unknown queries get []."""

    def __init__(self, responses: Dict[str, list]):
        self.responses = {normalize_location(k): v for k, v in responses.items()}
        self.calls = 0

    @classmethod
    def from_file(cls, path) -> "RecordedGazetteer":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def query(self, raw: str) -> List[GazetteerCandidate]:
        self.calls += 1
        return [GazetteerCandidate.from_json(o) for o in self.responses.get(normalize_location(raw), [])]


class RateLimiter:
    def __init__(self, per_second: float, clock=time.monotonic, sleep=time.sleep):
        self.interval = 1.0 / per_second if per_second > 0 else 0.0
        self._clock = clock
        self._sleep = sleep
        self._next = 0.0
        self._lock = threading.Lock()

    def wait(self) -> None:
        with self._lock:
            now = self._clock()
            if now < self._next:
                self._sleep(self._next - now)
                now = self._next
            self._next = now + self.interval


class NominatimClient:
    """HTTP gazetteer client: ``GET endpoint?q=...&format=json``."""

    def __init__(self, endpoint: str, user_agent: str, rate_limit: float = 1.0,
                 timeout: float = 10.0, session=None):
        if not user_agent:
            raise ValueError("a user agent string is required")
        self.endpoint = endpoint
        self.user_agent = user_agent
        self.timeout = timeout
        self.limiter = RateLimiter(rate_limit)
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def query(self, raw: str) -> List[GazetteerCandidate]:
        self.limiter.wait()
        try:
            resp = self.session.get(
                self.endpoint,
                params={"q": raw, "format": "json"},
                headers={"User-Agent": self.user_agent},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            payload = resp.json()
        except Exception as exc:  # transport, HTTP status, bad JSON
            raise GazetteerError(f"gazetteer query failed for {raw!r}: {exc}") from exc
        if not isinstance(payload, list):
            raise GazetteerError(f"unexpected gazetteer payload for {raw!r}")
        return [GazetteerCandidate.from_json(o) for o in payload if isinstance(o, dict)]


class ResolutionCache:
    """Normalized query -> city_id (or ``None``) with expiry on negatives.

    Positive answers never expire (``expires_at_epoch`` 0). Reads are lock-free;
    writes are serialized.
    """

    def __init__(self, negative_ttl: int = NEGATIVE_TTL_SECONDS, clock=time.time):
        self.negative_ttl = negative_ttl
        self._clock = clock
        self._entries: Dict[str, tuple] = {}
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str):
        """Return ``(hit, city_id_or_None)``."""
        item = self._entries.get(key)
        if item is None:
            return False, None
        city_id, expires = item
        if expires and expires <= self._clock():
            return False, None
        return True, city_id

    def put(self, key: str, city_id: Optional[str]) -> None:
        expires = 0 if city_id is not None else int(self._clock()) + self.negative_ttl
        with self._lock:
            self._entries[key] = (city_id, expires)

    @classmethod
    def load(cls, path, **kwargs) -> "ResolutionCache":
        cache = cls(**kwargs)
        if path is None or not os.path.exists(path):
            return cache
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                city = row["city_id_or_NONE"]
                cache._entries[row["normalized_query"]] = (
                    None if city == "NONE" else city,
                    int(row["expires_at_epoch"] or 0),
                )
        return cache

    def save(self, path) -> None:
        tmp = f"{path}.tmp"
        with self._lock, open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CACHE_HEADER)
            for key in sorted(self._entries):
                city, expires = self._entries[key]
                w.writerow([key, "NONE" if city is None else city, expires])
        os.replace(tmp, path)


class Resolution(NamedTuple):
    city_id: Optional[str]
    # alias | cache | gazetteer | unresolved | unmatched | transient
    status: str


def _match_name(name: str, reg: CityRegistry) -> Optional[str]:
    norm = normalize_location(name)
    hit = reg.lookup_alias(norm)
    if hit is not None:
        return hit
    for part in name.split(","):
        hit = reg.lookup_alias(normalize_location(part))
        if hit is not None:
            return hit
    return None


def resolve_location(
    raw: str,
    reg: CityRegistry,
    gaz: Optional[GazetteerSource] = None,
    cache: Optional[ResolutionCache] = None,
) -> Resolution:
    """Map a free-text profile location onto a registry city.

    Tries the registry aliases first, then the cache, then the gazetteer.
    A gazetteer answer that passes the place-type filter but names no
    registry city comes back as ``unmatched``.
    """
    key = normalize_location(raw)
    if not key:
        return Resolution(None, "unresolved")
    hit = reg.lookup_alias(key)
    if hit is not None:
        return Resolution(hit, "alias")
    if gaz is None:
        return Resolution(None, "unresolved")
    if cache is not None:
        found, city = cache.get(key)
        if found:
            return Resolution(city, "cache" if city else "unresolved")
    try:
        cands = gaz.query(raw)
    except GazetteerError as exc:
        LOG.warning("%s", exc)
        return Resolution(None, "transient")
    best = filter_gazetteer_candidates(cands)
    city = _match_name(best.resolved_name, reg) if best is not None else None
    if cache is not None:
        cache.put(key, city)
    if city is not None:
        return Resolution(city, "gazetteer")
    return Resolution(None, "unmatched" if best is not None else "unresolved")


# -- local time ---------------------------------------------------------------

class LocalTime(NamedTuple):
    local_date: date
    hour: int
    day_of_week: int  # 0 = Monday


def localize_timestamp(utc: float, entry: CityEntry, use_tz: bool = True) -> LocalTime:
    """Calendar fields of a UTC epoch instant in the city's local time.

    Uses the IANA zone when a tz database is present, otherwise the entry's
    fixed fallback offset.
    """
    zone = entry.zone() if use_tz else None
    if zone is not None:
        dt = datetime.fromtimestamp(utc, zone)
    else:
        dt = datetime.fromtimestamp(utc, timezone.utc) + timedelta(
            minutes=entry.fallback_offset_minutes
        )
    return LocalTime(dt.date(), dt.hour, dt.weekday())


def local_to_utc(d: date, hour: int, entry: CityEntry, use_tz: bool = True) -> int:
    """UTC epoch of the start of a local wall-clock hour (first occurrence)."""
    zone = entry.zone() if use_tz else None
    naive = datetime(d.year, d.month, d.day, hour)
    if zone is not None:
        return int(naive.replace(tzinfo=zone, fold=0).timestamp())
    return int(
        (naive - timedelta(minutes=entry.fallback_offset_minutes))
        .replace(tzinfo=timezone.utc)
        .timestamp()
    )
