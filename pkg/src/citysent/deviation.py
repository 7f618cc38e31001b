"""Chi-square deviations from baseline, ranking, recurrence intervals, merging."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from .aggregate import CityHourBin
from .geo import CityRegistry
from .model import FittedModel, predict

MIN_BIN_TOTAL = 30
MIN_EXPECTED = 5.0
DEFAULT_ALPHA = 0.05
_TINY = math.ulp(0.0)

DEVIATION_HEADER = ["city_id", "local_date", "hour", "polarity", "observed", "expected",
                    "statistic", "p_value", "direction", "eligible"]
EVENT_HEADER = ["rank", "scope", "id", "polarity", "direction", "start", "end",
                "max_statistic", "recurrence_interval"]


def chi2_sf(x: float, df: int = 1) -> float:
    """Upper tail of the chi-square distribution.

    This is the regularized upper incomplete gamma ``Q(df/2, x/2)``; for one
    degree of freedom it reduces to ``erfc(sqrt(x/2))``.
    """
    if x <= 0:
        return 1.0
    if df == 1:
        return math.erfc(math.sqrt(0.5 * x))
    return float(special.gammaincc(0.5 * df, 0.5 * x))


def two_cell_statistic(observed: float, expected: float, n: float) -> float:
    """Pearson statistic over the cells {labeled, not labeled}."""
    o, e = observed, expected
    return (o - e) ** 2 / e + ((n - o) - (n - e)) ** 2 / (n - e)


@dataclass(frozen=True)
class DeviationScore:
    city_id: str
    local_date: date
    hour: int
    polarity: str
    observed: int
    expected: float
    statistic: float
    p_value: float
    direction: str
    eligible: bool
    n_total: int = 0

    @property
    def key(self) -> Tuple[str, date, int]:
        return (self.city_id, self.local_date, self.hour)


def _score(b: CityHourBin, polarity: str, proportion: float) -> DeviationScore:
    n = b.n_total
    o = b.labeled(polarity)
    e = proportion * n
    stat = 0.0 if o == e else two_cell_statistic(o, e, n)
    p = max(chi2_sf(stat), _TINY)
    eligible = n >= MIN_BIN_TOTAL and e >= MIN_EXPECTED and n - e >= MIN_EXPECTED
    return DeviationScore(b.city_id, b.local_date, b.hour, polarity, o, e, stat, p,
                          "surplus" if o > e else "deficit", eligible, n)


def score_bin(b: CityHourBin, m: FittedModel) -> DeviationScore:
    return _score(b, m.outcome, float(predict(m, [b])[0]))


def score_bins(bins: Sequence[CityHourBin], m: FittedModel) -> List[DeviationScore]:
    """Vectorized :func:`score_bin` over many bins."""
    props = predict(m, bins)
    return [_score(b, m.outcome, float(p)) for b, p in zip(bins, props)]


def _rank_key(s: DeviationScore):
    return (-s.statistic, s.local_date, s.hour, s.city_id)


def rank_deviations(scores: Iterable[DeviationScore], polarity: str) -> List[Tuple[int, DeviationScore]]:
    """Eligible scores of one polarity, strongest first, as ``(rank, score)``."""
    kept = [s for s in scores if s.eligible and s.polarity == polarity]
    kept.sort(key=_rank_key)
    return list(enumerate(kept, 1))


@dataclass(frozen=True)
class AtLeast:
    """Recurrence interval of a top-ranked event: longer than the whole record."""

    days: float

    def __str__(self) -> str:
        return f">{_fmt_days(self.days)} days"


Recurrence = Union[float, AtLeast]


def _fmt_days(x: float) -> str:
    s = f"{x:.1f}"
    return s[:-2] if s.endswith(".0") else s


def recurrence_interval(rank: int, observation_days: float) -> Recurrence:
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    if observation_days <= 0:
        raise ValueError(f"observation_days must be positive, got {observation_days}")
    if rank == 1:
        return AtLeast(observation_days)
    return observation_days / rank


def format_recurrence(ri: Recurrence) -> str:
    if isinstance(ri, AtLeast):
        return str(ri)
    text = _fmt_days(ri)
    return f"{text} day" if text == "1" else f"{text} days"


@dataclass
class MergedEvent:
    scope: str
    members: List[DeviationScore]
    place_id: str
    country: str
    polarity: str
    direction: str
    max_statistic: float
    start: datetime
    end: datetime
    rank: Optional[int] = None
    recurrence: Optional[Recurrence] = None

    @property
    def cities(self) -> List[str]:
        return sorted({s.city_id for s in self.members})

    @property
    def dates(self) -> List[date]:
        return sorted({s.local_date for s in self.members})

    @property
    def observed_total(self) -> int:
        return sum(s.observed for s in self.members)

    @property
    def expected_total(self) -> float:
        return sum(s.expected for s in self.members)

    @property
    def n_total(self) -> int:
        return sum(s.n_total for s in self.members)

    def overlaps(self, city_id: str, start: datetime, end: datetime) -> bool:
        """Whether any member hour of ``city_id`` intersects ``[start, end]``."""
        for s in self.members:
            t = _hour_start(s)
            if s.city_id == city_id and t <= end and t + timedelta(hours=1) > start:
                return True
        return False


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        root = i
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[i] != root:
            self.parent[i], i = root, self.parent[i]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller index wins so components are labeled deterministically
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra

    def groups(self) -> Dict[int, List[int]]:
        out: Dict[int, List[int]] = {}
        for i in range(len(self.parent)):
            out.setdefault(self.find(i), []).append(i)
        return out


def same_time_key(s: DeviationScore) -> tuple:
    """Scores of two cities in one country merge when these keys are equal."""
    return (s.local_date, s.hour)


def significant(scores: Iterable[DeviationScore], alpha: float = DEFAULT_ALPHA) -> List[DeviationScore]:
    return [s for s in scores if s.eligible and s.p_value < alpha]


def _hour_start(s: DeviationScore) -> datetime:
    return datetime(s.local_date.year, s.local_date.month, s.local_date.day, s.hour)


def _build_event(members: List[DeviationScore], registry: CityRegistry) -> MergedEvent:
    members = sorted(members, key=lambda s: (s.local_date, s.hour, s.city_id))
    cities = {s.city_id for s in members}
    countries = {registry.country_of(c) for c in cities}
    dates = {s.local_date for s in members}
    hours = {(s.local_date, s.hour) for s in members}
    country = min(countries)
    if len(dates) > 1:
        scope = "country_multiday"
    elif len(cities) == 1:
        scope = "city_day"
    elif len(hours) == 1:
        scope = "country_hour"
    else:
        scope = "country_day"
    place = next(iter(cities)) if scope == "city_day" else country
    return MergedEvent(
        scope=scope,
        members=members,
        place_id=place,
        country=country,
        polarity=members[0].polarity,
        direction=members[0].direction,
        max_statistic=max(s.statistic for s in members),
        start=_hour_start(members[0]),
        end=max(_hour_start(s) for s in members),
    )


def merge_events(scores: Iterable[DeviationScore], registry: CityRegistry,
                 observation_days: Optional[float] = None) -> List[MergedEvent]:
    """Merge significant deviations into events and rank them.

    Two scores with the same polarity and direction join when they share a
    city and a local date, or a country, a local date and a local hour.
    Resulting components in the same country whose date spans touch or
    overlap then join into multi-day events. Events of both polarities are
    ranked together by their largest member statistic; with
    ``observation_days`` each also gets a recurrence interval.
    """
    scores = list(scores)
    for s in scores:
        if s.city_id not in registry:
            raise KeyError(f"city {s.city_id!r} not in registry; country unknown")

    events: List[MergedEvent] = []
    groups: Dict[Tuple[str, str], List[DeviationScore]] = {}
    for s in scores:
        groups.setdefault((s.polarity, s.direction), []).append(s)

    for _, group in sorted(groups.items()):
        group.sort(key=lambda s: (s.local_date, s.hour, s.city_id))
        uf = _UnionFind(len(group))
        first_by_city_day: Dict[tuple, int] = {}
        first_by_country_hour: Dict[tuple, int] = {}
        for i, s in enumerate(group):
            country = registry.country_of(s.city_id)
            j = first_by_city_day.setdefault((s.city_id, s.local_date), i)
            uf.union(i, j)
            j = first_by_country_hour.setdefault((country, same_time_key(s)), i)
            uf.union(i, j)

        comps = [[group[i] for i in idx] for _, idx in sorted(uf.groups().items())]
        comps = _merge_contiguous_days(comps, registry)
        events.extend(_build_event(c, registry) for c in comps)

    events.sort(key=lambda e: (-e.max_statistic, e.start, e.polarity, e.place_id))
    for rank, ev in enumerate(events, 1):
        ev.rank = rank
        if observation_days is not None:
            ev.recurrence = recurrence_interval(rank, observation_days)
    return events


def _merge_contiguous_days(comps: List[List[DeviationScore]], registry: CityRegistry):
    """Join components sharing a country whose date spans are adjacent or overlap."""
    spans = []
    for c in comps:
        dates = [s.local_date for s in c]
        countries = {registry.country_of(s.city_id) for s in c}
        spans.append((countries, min(dates), max(dates)))
    uf = _UnionFind(len(comps))
    # components of one country sorted by start date; sweep keeps the running end
    by_country: Dict[str, List[int]] = {}
    for i, (countries, _, _) in enumerate(spans):
        for country in countries:
            by_country.setdefault(country, []).append(i)
    for country, idx in by_country.items():
        idx.sort(key=lambda i: (spans[i][1], spans[i][2], i))
        run_root, run_end = idx[0], spans[idx[0]][2]
        for i in idx[1:]:
            start, end = spans[i][1], spans[i][2]
            if start <= run_end + timedelta(days=1):
                uf.union(run_root, i)
                run_end = max(run_end, end)
            else:
                run_root, run_end = i, end
    return [
        [s for i in idx for s in comps[i]]
        for _, idx in sorted(uf.groups().items())
    ]


def write_deviations_csv(scores: Iterable[DeviationScore], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(DEVIATION_HEADER)
    for s in sorted(scores, key=lambda s: (s.city_id, s.local_date, s.hour, s.polarity)):
        w.writerow([s.city_id, s.local_date.isoformat(), s.hour, s.polarity, s.observed,
                    repr(float(s.expected)), repr(float(s.statistic)), repr(float(s.p_value)),
                    s.direction, "true" if s.eligible else "false"])


def read_deviations_csv(fh) -> List[DeviationScore]:
    return [
        DeviationScore(r["city_id"], date.fromisoformat(r["local_date"]), int(r["hour"]),
                       r["polarity"], int(r["observed"]), float(r["expected"]),
                       float(r["statistic"]), float(r["p_value"]), r["direction"],
                       r["eligible"] == "true")
        for r in csv.DictReader(fh)
    ]


def write_events_csv(events: Iterable[MergedEvent], fh, observation_days: float) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EVENT_HEADER)
    for ev in events:
        ri = ev.recurrence if ev.recurrence is not None else recurrence_interval(ev.rank, observation_days)
        w.writerow([ev.rank, ev.scope, ev.place_id, ev.polarity, ev.direction,
                    ev.start.isoformat(timespec="minutes"), ev.end.isoformat(timespec="minutes"),
                    repr(float(ev.max_statistic)), format_recurrence(ri)])


def ranked_table(scores: Sequence[DeviationScore], polarity: str, observation_days: float,
                 alpha: float = DEFAULT_ALPHA) -> List[list]:
    """Rows for the ranked-deviation plot: every eligible bin with its recurrence interval."""
    rows = []
    for rank, s in rank_deviations(scores, polarity):
        rows.append([rank, s.city_id, s.local_date.isoformat(), s.hour, s.direction,
                     repr(float(s.statistic)), repr(float(s.p_value)),
                     "true" if s.p_value < alpha else "false",
                     format_recurrence(recurrence_interval(rank, observation_days))])
    return rows


RANKED_HEADER = ["rank", "city_id", "local_date", "hour", "direction", "statistic",
                 "p_value", "significant", "recurrence_interval"]


def p_values(scores: Iterable[DeviationScore]) -> np.ndarray:
    return np.array([s.p_value for s in scores if s.eligible])
